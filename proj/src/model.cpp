#include "spikes4/model.hpp"

#include <algorithm>
#include <cmath>

#include "spikes4/error.hpp"
#include "spikes4/ops.hpp"

namespace spikes4::model {

const char* to_string(SsmMode mode) {
  return mode == SsmMode::convolution ? "convolution" : "recurrent";
}

SsmMode parse_mode(const std::string& text) {
  if (text == "convolution") return SsmMode::convolution;
  if (text == "recurrent") return SsmMode::recurrent;
  throw ConfigError("unknown mode '" + text + "' (expected convolution or recurrent)");
}

dsp::StftConfig ModelConfig::stft() const {
  dsp::StftConfig s;
  s.window_length = window_length;
  s.hop_length = hop;
  return s;
}

void ModelConfig::validate() const {
  if (n_layers < 1) throw ConfigError("n_layers must be >= 1");
  if (hidden_size < 1) throw ConfigError("hidden_size must be >= 1");
  if (latent_size < 1) throw ConfigError("latent_size must be >= 1");
  if (!(v_threshold > v_reset)) throw ConfigError("v_threshold must exceed v_reset");
  if (!(tau_init > 1.0)) throw ConfigError("tau_init must exceed 1");
  if (!(surrogate_alpha > 0.0)) throw ConfigError("surrogate_alpha must be positive");
  stft().validate();
}

Affine::Affine(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> w(in * out), b(out);
  for (auto& v : w) v = dist(rng);
  for (auto& v : b) v = dist(rng);
  weight = Tensor::from({in, out}, std::move(w), true);
  bias = Tensor::from({out}, std::move(b), true);
}

Tensor Affine::forward(const Tensor& x) const {
  if (x.rank() != 2 || x.dim(1) != in()) {
    throw DimensionError("affine map expects [T, " + std::to_string(in()) + "], got " +
                         shape_string(x.shape()));
  }
  return add(matmul(x, weight), bias);
}

SpikingS4Model::SpikingS4Model(const ModelConfig& cfg, std::uint64_t seed)
    : cfg_((cfg.validate(), cfg)), stft_(cfg.stft()) {
  std::mt19937_64 rng(seed);
  const std::size_t k = cfg_.latent_size;
  encoder_ = Affine(cfg_.bins(), k, rng);
  layers_.reserve(cfg_.n_layers);
  for (std::size_t i = 0; i < cfg_.n_layers; ++i) {
    SpikingS4Layer layer;
    layer.bank = ssm::LegsBank(k, cfg_.hidden_size, rng);
    layer.emission = Affine(k, k, rng);
    layer.lif = snn::LifParams::with_tau(cfg_.tau_init);
    layer.lif.v_threshold = cfg_.v_threshold;
    layer.lif.v_reset = cfg_.v_reset;
    layer.lif.surrogate_alpha = cfg_.surrogate_alpha;
    layer.decoder = Affine(k, k, rng);
    layers_.push_back(std::move(layer));
  }
  mask_head_ = Affine(k, cfg_.bins(), rng);
}

std::vector<NamedTensor> SpikingS4Model::parameters() const {
  std::vector<NamedTensor> out;
  out.push_back({"encoder.weight", encoder_.weight});
  out.push_back({"encoder.bias", encoder_.bias});
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const std::string p = "layers." + std::to_string(i) + ".";
    const auto& l = layers_[i];
    out.push_back({p + "ssm.B", l.bank.b()});
    out.push_back({p + "ssm.C", l.bank.c()});
    out.push_back({p + "ssm.log_dt", l.bank.log_dt()});
    out.push_back({p + "emission.weight", l.emission.weight});
    out.push_back({p + "emission.bias", l.emission.bias});
    out.push_back({p + "lif.tau_raw", l.lif.tau_raw});
    out.push_back({p + "decoder.weight", l.decoder.weight});
    out.push_back({p + "decoder.bias", l.decoder.bias});
  }
  out.push_back({"mask_head.weight", mask_head_.weight});
  out.push_back({"mask_head.bias", mask_head_.bias});
  return out;
}

std::vector<NamedTensor> SpikingS4Model::frozen() const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    out.push_back({"layers." + std::to_string(i) + ".ssm.A", layers_[i].bank.a()});
  }
  const auto& w = stft_.weights();
  out.push_back({"stft.analysis_cos", w.analysis_cos});
  out.push_back({"stft.analysis_sin", w.analysis_sin});
  out.push_back({"istft.synthesis_cos", w.synthesis_cos});
  out.push_back({"istft.synthesis_sin", w.synthesis_sin});
  return out;
}

void SpikingS4Model::set_spike_forward(snn::SpikeForward forward) {
  for (auto& l : layers_) l.lif.forward = forward;
}

Tensor SpikingS4Model::encode(const Tensor& magnitude) const {
  if (magnitude.rank() != 2 || magnitude.dim(1) != cfg_.bins()) {
    throw DimensionError("encode: magnitude must be [T, " + std::to_string(cfg_.bins()) +
                         "], got " + shape_string(magnitude.shape()));
  }
  return encoder_.forward(magnitude);
}

Tensor SpikingS4Model::layer_forward(std::size_t index, const Tensor& u, const Tensor* kernels,
                                     LayerTrace* trace) const {
  const auto& l = layers_.at(index);
  const std::size_t k = cfg_.latent_size;
  if (u.rank() != 2 || u.dim(1) != k) {
    throw DimensionError("layer_forward: expected [T, " + std::to_string(k) + "], got " +
                         shape_string(u.shape()));
  }
  const std::size_t frames = u.dim(0);
  const Tensor channels_first = transpose(u);
  Tensor ssm_out;
  if (cfg_.mode == SsmMode::recurrent) {
    ssm_out = l.bank.scan(channels_first);
  } else {
    Tensor taps = kernels ? *kernels : l.bank.kernels(frames);
    if (taps.rank() != 2 || taps.dim(0) != k || taps.dim(1) < frames) {
      throw DimensionError("layer_forward: kernels " + shape_string(taps.shape()) +
                           " too short for " + std::to_string(frames) + " frames");
    }
    if (taps.dim(1) > frames) taps = take_columns(taps, frames);
    ssm_out = ssm::LegsBank::convolve(channels_first, taps);
  }
  const Tensor v = transpose(ssm_out);
  const Tensor w = l.emission.forward(v);
  const Tensor spikes = snn::lif_sequence(l.lif, w).spikes;
  if (trace) {
    trace->ssm_out = v;
    trace->spikes = spikes;
  }
  return add(l.decoder.forward(spikes), u);
}

Tensor SpikingS4Model::predict_mask(const Tensor& latent) const {
  return sigmoid(mask_head_.forward(latent));
}

std::vector<Tensor> SpikingS4Model::ssm_kernels(std::size_t frames) const {
  std::vector<Tensor> out;
  out.reserve(layers_.size());
  for (const auto& l : layers_) out.push_back(l.bank.kernels(frames));
  return out;
}

ForwardResult SpikingS4Model::forward(const dsp::Spectrogram& noisy,
                                      const std::vector<Tensor>* kernels) const {
  if (kernels && kernels->size() != layers_.size()) {
    throw DimensionError("forward: got " + std::to_string(kernels->size()) + " kernel sets for " +
                         std::to_string(layers_.size()) + " layers");
  }
  ForwardResult r;
  Tensor latent = encode(noisy.magnitude);
  r.layers.resize(layers_.size());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    latent = layer_forward(i, latent, kernels ? &(*kernels)[i] : nullptr, &r.layers[i]);
  }
  r.mask = predict_mask(latent);
  r.waveform = stft_.inverse(mul(r.mask, noisy.real), mul(r.mask, noisy.imag),
                             noisy.signal_length);
  return r;
}

EnhanceResult SpikingS4Model::enhance(std::span<const double> noisy, bool identity_mask) const {
  NoGradScope no_grad;
  const dsp::Spectrogram spec = stft_.forward(noisy);
  EnhanceResult r;
  if (identity_mask) {
    r.mask = Tensor::full(spec.magnitude.shape(), 1.0);
    r.waveform = stft_.inverse(dsp::apply_mask(spec, r.mask));
    return r;
  }
  ForwardResult f = forward(spec);
  r.waveform = f.waveform.to_vector();
  r.mask = f.mask;
  r.layers = std::move(f.layers);
  return r;
}

Tensor ideal_mask(const Tensor& clean_magnitude, const Tensor& noisy_magnitude) {
  if (clean_magnitude.shape() != noisy_magnitude.shape()) {
    throw DimensionError("ideal_mask: clean " + shape_string(clean_magnitude.shape()) +
                         " vs noisy " + shape_string(noisy_magnitude.shape()));
  }
  auto c = clean_magnitude.data();
  auto n = noisy_magnitude.data();
  std::vector<double> m(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    m[i] = std::clamp(c[i] / std::max(n[i], dsp::kMagnitudeFloor), 0.0, 1.0);
  }
  return Tensor::from(clean_magnitude.shape(), std::move(m));
}

std::size_t expected_parameter_count(const ModelConfig& cfg) {
  const std::size_t k = cfg.latent_size, h = cfg.hidden_size, f = cfg.bins();
  const std::size_t encoder = f * k + k;
  const std::size_t per_layer = 2 * k * h + k + 2 * (k * k + k) + 1;
  const std::size_t head = k * f + f;
  return encoder + cfg.n_layers * per_layer + head;
}

}  // namespace spikes4::model
