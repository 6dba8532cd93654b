#include "spikes4/profile.hpp"

#include <cmath>
#include <iomanip>
#include <map>

#include "spikes4/dsp.hpp"
#include "spikes4/error.hpp"

namespace spikes4::profile {

namespace {

// Per-step cost of the structured LegS recurrence for one channel: the
// forward substitution with M = I − Δ/2·A (6 per state), the state update
// 2·M⁻¹x − x + B̄u (4 per state) and the readout C·x (2 per state).
constexpr double kScanPerState = 12.0;
// The LIF update per neuron and frame: subtract, subtract, multiply, add,
// threshold compare, reset select.
constexpr double kLifPerNeuron = 6.0;

std::size_t fft_length(std::size_t t) {
  std::size_t n = 1;
  while (n < 2 * t - 1) n <<= 1;
  return n;
}

double fft_flops(std::size_t length) {
  const double l = static_cast<double>(length);
  return 5.0 * l * std::log2(l);
}

std::string module_of(const std::string& param) {
  const auto dot = param.rfind('.');
  return dot == std::string::npos ? param : param.substr(0, dot);
}

std::vector<std::string> module_order(std::size_t n_layers) {
  std::vector<std::string> names{"stft", "encoder"};
  for (std::size_t i = 0; i < n_layers; ++i) {
    const std::string p = "layers." + std::to_string(i) + ".";
    for (const char* m : {"ssm", "emission", "lif", "decoder"}) names.push_back(p + m);
  }
  for (const char* m : {"mask_head", "masking", "istft"}) names.emplace_back(m);
  return names;
}

CostReport empty_report(std::size_t n_layers) {
  CostReport r;
  for (auto& name : module_order(n_layers)) r.modules.push_back({name, 0, 0, 0.0});
  return r;
}

ModuleCost& find(CostReport& r, const std::string& name) {
  for (auto& m : r.modules) {
    if (m.name == name) return m;
  }
  throw ContractError("profile: unknown module '" + name + "'");
}

void total(CostReport& r) {
  r.total_params = 0;
  r.total_frozen = 0;
  r.total_flops = 0.0;
  for (const auto& m : r.modules) {
    r.total_params += m.params;
    r.total_frozen += m.frozen;
    r.total_flops += m.flops;
  }
}

}  // namespace

CostReport count_params(const model::SpikingS4Model& model) {
  CostReport r = empty_report(model.n_layers());
  for (const auto& p : model.parameters()) find(r, module_of(p.name)).params += p.tensor.numel();
  for (const auto& p : model.frozen()) find(r, module_of(p.name)).frozen += p.tensor.numel();
  total(r);
  return r;
}

CostReport count_flops(const model::ModelConfig& cfg, std::size_t frames) {
  if (frames < 1) throw InputError("count_flops: frame count must be >= 1");
  const double t = static_cast<double>(frames);
  const double f = static_cast<double>(cfg.bins());
  const double n = static_cast<double>(cfg.window_length);
  const double hop = static_cast<double>(cfg.hop);
  const double k = static_cast<double>(cfg.latent_size);
  const double h = static_cast<double>(cfg.hidden_size);

  CostReport r = empty_report(cfg.n_layers);
  r.frames = frames;
  find(r, "stft").flops = 2 * (2 * t * n * f) + 5 * t * f;
  find(r, "encoder").flops = 2 * t * f * k + t * k;
  for (std::size_t i = 0; i < cfg.n_layers; ++i) {
    const std::string p = "layers." + std::to_string(i) + ".";
    double ssm = 0.0;
    if (cfg.mode == model::SsmMode::convolution) {
      const std::size_t l = fft_length(frames);
      const double kernel = (kScanPerState * t + 6.0) * h;  // impulse response scan + B̄ setup
      const double conv = 3 * fft_flops(l) + 6.0 * static_cast<double>(l);
      ssm = k * (kernel + conv);
    } else {
      ssm = k * (kScanPerState * t + 6.0) * h;
    }
    find(r, p + "ssm").flops = ssm;
    find(r, p + "emission").flops = 2 * t * k * k + t * k;
    find(r, p + "lif").flops = kLifPerNeuron * t * k;
    find(r, p + "decoder").flops = 2 * t * k * k + t * k + t * k;  // bias and shortcut
  }
  find(r, "mask_head").flops = 2 * t * k * f + t * f + t * f;  // bias and sigmoid
  find(r, "masking").flops = 2 * t * f;
  find(r, "istft").flops = 2 * (2 * t * f * n) + t * n + t * n + t * hop;
  total(r);
  return r;
}

CostReport profile(const model::SpikingS4Model& model, std::size_t frames) {
  CostReport r = count_params(model);
  const CostReport f = count_flops(model.config(), frames);
  for (std::size_t i = 0; i < r.modules.size(); ++i) r.modules[i].flops = f.modules[i].flops;
  r.frames = frames;
  total(r);
  return r;
}

double spike_sparsity(const model::SpikingS4Model& model, std::span<const double> probe) {
  const auto result = model.enhance(probe);
  double zeros = 0.0, count = 0.0;
  for (const auto& layer : result.layers) {
    for (double s : layer.spikes.data()) {
      zeros += s == 0.0 ? 1.0 : 0.0;
      count += 1.0;
    }
  }
  return count > 0 ? zeros / count : 1.0;
}

std::size_t frames_for(const model::ModelConfig& cfg, std::size_t samples) {
  return dsp::StftLayer(cfg.stft()).layout(samples).frames;
}

std::vector<std::string> formula_sheet(const model::ModelConfig& cfg) {
  std::vector<std::string> lines{
      "convention: multiply-accumulate = 2 FLOPs; m x k by k x n product = 2*m*k*n",
      "convention: FFT of length L = 5*L*log2(L); other elementwise ops = 1 FLOP per element",
      "convention: spike sparsity is reported separately and not subtracted from FLOPs",
      "symbols: T frames, F bins, N window, K latent width, H state size, L FFT length "
      "(next power of two >= 2T-1)",
      "stft: 2 * (2*T*N*F) analysis products + 5*T*F magnitude/phase",
      "encoder: 2*T*F*K + T*K",
  };
  if (cfg.mode == model::SsmMode::convolution) {
    lines.emplace_back("ssm (per layer, convolution mode): K * ((12*T + 6)*H kernel scan + "
                       "3*5*L*log2(L) transforms + 6*L spectrum product)");
  } else {
    lines.emplace_back("ssm (per layer, recurrent mode): K * (12*T + 6)*H structured recurrence");
  }
  lines.emplace_back("emission (per layer): 2*T*K*K + T*K");
  lines.emplace_back("lif (per layer): 6*T*K");
  lines.emplace_back("decoder (per layer): 2*T*K*K + 2*T*K (bias and shortcut)");
  lines.emplace_back("mask_head: 2*T*K*F + 2*T*F (bias and sigmoid)");
  lines.emplace_back("masking: 2*T*F");
  lines.emplace_back("istft: 2 * (2*T*F*N) synthesis products + 2*T*N overlap-add + T*hop normalization");
  lines.emplace_back("params: affine in->out = in*out + out; ssm = 2*K*H (B, C) + K (log step); "
                     "lif = 1; frozen: A = H*H per layer, Fourier bases = 2*F*N per direction");
  return lines;
}

void write_text(const CostReport& report, const model::ModelConfig& cfg, std::ostream& out) {
  out << "cost report: N=" << cfg.n_layers << " K=" << cfg.latent_size << " H=" << cfg.hidden_size
      << " F=" << cfg.bins() << " window=" << cfg.window_length << " hop=" << cfg.hop
      << " mode=" << model::to_string(cfg.mode) << " T=" << report.frames << "\n";
  for (const auto& line : formula_sheet(cfg)) out << "  " << line << "\n";
  out << std::left << std::setw(22) << "module" << std::right << std::setw(12) << "params"
      << std::setw(12) << "frozen" << std::setw(16) << "flops" << "\n";
  for (const auto& m : report.modules) {
    out << std::left << std::setw(22) << m.name << std::right << std::setw(12) << m.params
        << std::setw(12) << m.frozen << std::setw(16) << std::scientific << std::setprecision(4)
        << m.flops << std::defaultfloat << "\n";
  }
  out << std::left << std::setw(22) << "total" << std::right << std::setw(12) << report.total_params
      << std::setw(12) << report.total_frozen << std::setw(16) << std::scientific
      << std::setprecision(4) << report.total_flops << std::defaultfloat << "\n";
  if (report.spike_sparsity >= 0) {
    out << "spike sparsity on probe: " << std::fixed << std::setprecision(4)
        << report.spike_sparsity << std::defaultfloat << "\n";
  }
  out << "reference (published model, comparison only): " << kReferenceParams / 1e6 << "M params, "
      << std::scientific << std::setprecision(2) << kReferenceFlops << " FLOPs" << std::defaultfloat
      << "\n";
  out << "ratio to reference: params " << std::setprecision(3)
      << static_cast<double>(report.total_params) / kReferenceParams << ", flops "
      << report.total_flops / kReferenceFlops << "\n";
}

void write_records(const CostReport& report, std::ostream& out) {
  out << std::setprecision(17);
  out << "frames=" << report.frames << "\n";
  for (const auto& m : report.modules) {
    out << "module." << m.name << ".params=" << m.params << "\n";
    out << "module." << m.name << ".frozen=" << m.frozen << "\n";
    out << "module." << m.name << ".flops=" << m.flops << "\n";
  }
  out << "total.params=" << report.total_params << "\n";
  out << "total.frozen=" << report.total_frozen << "\n";
  out << "total.flops=" << report.total_flops << "\n";
  if (report.spike_sparsity >= 0) out << "spike_sparsity=" << report.spike_sparsity << "\n";
  out << "reference.params=" << kReferenceParams << "\n";
  out << "reference.flops=" << kReferenceFlops << "\n";
  out << "convention.mac_flops=2\n";
}

}  // namespace spikes4::profile
