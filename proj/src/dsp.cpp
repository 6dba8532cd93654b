#include "spikes4/dsp.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "spikes4/error.hpp"
#include "spikes4/ops.hpp"

namespace spikes4::dsp {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapConst = Eigen::Map<const RowMatrix>;

// Σ_t w²[p − t·hop] over the padded signal, inverted where it is nonzero.
std::vector<double> inverse_window_energy(const std::vector<double>& window, std::size_t hop,
                                          std::size_t frames, std::size_t padded_length) {
  std::vector<double> energy(padded_length, 0.0);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t n = 0; n < window.size(); ++n) energy[t * hop + n] += window[n] * window[n];
  }
  for (auto& e : energy) e = e > 1e-10 ? 1.0 / e : 0.0;
  return energy;
}

}  // namespace

std::vector<double> StftConfig::window_samples() const {
  std::vector<double> w(window_length);
  const double n_total = static_cast<double>(window_length);
  for (std::size_t n = 0; n < window_length; ++n) {
    const double x = std::numbers::pi * static_cast<double>(n) / n_total;
    w[n] = window == WindowKind::sqrt_hann ? std::sin(x) : std::sin(x) * std::sin(x);
  }
  return w;
}

void StftConfig::validate() const {
  if (window_length < 2 || window_length % 2 != 0) {
    throw ConfigError("window_length must be even and >= 2, got " + std::to_string(window_length));
  }
  if (hop_length == 0 || hop_length > window_length) {
    throw ConfigError("hop_length must be in [1, window_length], got " +
                      std::to_string(hop_length));
  }
  if (!(sample_rate > 0)) throw ConfigError("sample_rate must be positive");
  const auto w = window_samples();
  double lo = 1e300, hi = 0.0;
  for (std::size_t n = 0; n < hop_length; ++n) {
    double s = 0.0;
    for (std::size_t k = n; k < window_length; k += hop_length) s += w[k] * w[k];
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  if (hi - lo > 1e-10 * hi) {
    throw ConfigError("window/hop pair violates squared constant overlap-add (window_length=" +
                      std::to_string(window_length) + ", hop=" + std::to_string(hop_length) +
                      ", spread=" + std::to_string(hi - lo) + ")");
  }
}

FourierWeights build_fourier_weights(const StftConfig& cfg) {
  cfg.validate();
  const std::size_t n_len = cfg.window_length;
  const std::size_t bins = cfg.bins();
  FourierWeights fw;
  fw.window = cfg.window_samples();
  double window_sum = 0.0;
  for (double v : fw.window) window_sum += v;
  fw.analysis_gain = 2.0 / window_sum;

  std::vector<double> acos(bins * n_len), asin(bins * n_len), scos(bins * n_len),
      ssin(bins * n_len);
  const double inv = 1.0 / (fw.analysis_gain * static_cast<double>(n_len));
  for (std::size_t f = 0; f < bins; ++f) {
    const double hermitian = (f == 0 || 2 * f == n_len) ? 1.0 : 2.0;
    for (std::size_t n = 0; n < n_len; ++n) {
      // Reduce f·n mod N first so the phase stays exact for large products.
      const std::size_t r = (f * n) % n_len;
      const double theta = 2.0 * std::numbers::pi * static_cast<double>(r) / static_cast<double>(n_len);
      const double c = std::cos(theta);
      const double s = r == 0 || 2 * r == n_len ? 0.0 : std::sin(theta);
      const double w = fw.window[n];
      acos[f * n_len + n] = w * c;
      asin[f * n_len + n] = w * s;
      scos[f * n_len + n] = hermitian * w * c * inv;
      ssin[f * n_len + n] = -hermitian * w * s * inv;
    }
  }
  fw.analysis_cos = Tensor::from({bins, n_len}, std::move(acos));
  fw.analysis_sin = Tensor::from({bins, n_len}, std::move(asin));
  fw.synthesis_cos = Tensor::from({bins, n_len}, std::move(scos));
  fw.synthesis_sin = Tensor::from({bins, n_len}, std::move(ssin));
  return fw;
}

StftLayer::StftLayer(StftConfig cfg) : cfg_(cfg), weights_(build_fourier_weights(cfg_)) {}

FrameLayout StftLayer::layout(std::size_t signal_length) const {
  const std::size_t n_len = cfg_.window_length;
  const std::size_t hop = cfg_.hop_length;
  FrameLayout l;
  l.left_pad = n_len - hop;
  std::size_t padded = signal_length + 2 * l.left_pad;
  if (padded < n_len) padded = n_len;
  // Extend the tail so the last frame ends exactly at the padded end.
  padded += (hop - (padded - n_len) % hop) % hop;
  l.padded_length = padded;
  l.frames = (padded - n_len) / hop + 1;
  return l;
}

std::size_t StftLayer::frozen_size() const {
  return 4 * weights_.analysis_cos.numel();
}

Spectrogram StftLayer::forward(std::span<const double> signal) const {
  if (signal.empty()) throw InputError("stft of an empty signal");
  const std::size_t n_len = cfg_.window_length;
  const std::size_t bins = cfg_.bins();
  const FrameLayout l = layout(signal.size());

  std::vector<double> padded(l.padded_length, 0.0);
  std::copy(signal.begin(), signal.end(), padded.begin() + static_cast<std::ptrdiff_t>(l.left_pad));
  RowMatrix frames(l.frames, n_len);
  for (std::size_t t = 0; t < l.frames; ++t) {
    for (std::size_t n = 0; n < n_len; ++n) frames(t, n) = padded[t * cfg_.hop_length + n];
  }

  MapConst acos(weights_.analysis_cos.data().data(), bins, n_len);
  MapConst asin(weights_.analysis_sin.data().data(), bins, n_len);
  RowMatrix re = weights_.analysis_gain * (frames * acos.transpose());
  RowMatrix im = -weights_.analysis_gain * (frames * asin.transpose());

  const std::size_t count = l.frames * bins;
  std::vector<double> real(re.data(), re.data() + count);
  std::vector<double> imag(im.data(), im.data() + count);
  std::vector<double> mag(count), phase(count);
  for (std::size_t i = 0; i < count; ++i) {
    mag[i] = std::hypot(real[i], imag[i]);
    phase[i] = std::atan2(imag[i], real[i]);
  }

  Spectrogram spec;
  spec.frames = l.frames;
  spec.bins = bins;
  spec.signal_length = signal.size();
  spec.real = Tensor::from({l.frames, bins}, std::move(real));
  spec.imag = Tensor::from({l.frames, bins}, std::move(imag));
  spec.magnitude = Tensor::from({l.frames, bins}, std::move(mag));
  spec.phase = Tensor::from({l.frames, bins}, std::move(phase));
  return spec;
}

Tensor StftLayer::inverse(const Tensor& real, const Tensor& imag,
                          std::size_t signal_length) const {
  const std::size_t n_len = cfg_.window_length;
  const std::size_t hop = cfg_.hop_length;
  const FrameLayout l = layout(signal_length);
  const Shape expected{l.frames, cfg_.bins()};
  if (real.shape() != expected || imag.shape() != expected) {
    throw DimensionError("istft: spectrogram " + shape_string(real.shape()) + "/" +
                         shape_string(imag.shape()) + " inconsistent with " +
                         shape_string(expected) + " for " + std::to_string(signal_length) +
                         " samples");
  }
  Tensor frames = add(matmul(real, weights_.synthesis_cos), matmul(imag, weights_.synthesis_sin));

  auto norm = std::make_shared<std::vector<double>>(
      inverse_window_energy(weights_.window, hop, l.frames, l.padded_length));
  const std::size_t offset = l.left_pad;
  const std::size_t count = l.frames;
  std::vector<double> out(signal_length, 0.0);
  auto fd = frames.data();
  for (std::size_t t = 0; t < count; ++t) {
    for (std::size_t n = 0; n < n_len; ++n) {
      const std::size_t p = t * hop + n;
      if (p < offset || p >= offset + signal_length) continue;
      out[p - offset] += fd[t * n_len + n];
    }
  }
  for (std::size_t i = 0; i < signal_length; ++i) out[i] *= (*norm)[i + offset];

  return make_op_result({signal_length}, std::move(out), {frames},
                        [norm, offset, count, n_len, hop, signal_length](
                            std::span<const double> g, std::vector<std::vector<double>*>& in) {
                          auto& gf = *in[0];
                          for (std::size_t t = 0; t < count; ++t) {
                            for (std::size_t n = 0; n < n_len; ++n) {
                              const std::size_t p = t * hop + n;
                              if (p < offset || p >= offset + signal_length) continue;
                              gf[t * n_len + n] += g[p - offset] * (*norm)[p];
                            }
                          }
                        });
}

std::vector<double> StftLayer::inverse(const Spectrogram& spec) const {
  NoGradScope no_grad;
  return inverse(spec.real, spec.imag, spec.signal_length).to_vector();
}

Spectrogram stft(std::span<const double> signal, const StftConfig& cfg) {
  return StftLayer(cfg).forward(signal);
}

std::vector<double> istft(const Spectrogram& spec, const StftConfig& cfg) {
  if (spec.bins != cfg.bins()) {
    throw DimensionError("istft: spectrogram has " + std::to_string(spec.bins) +
                         " bins, config expects " + std::to_string(cfg.bins()));
  }
  return StftLayer(cfg).inverse(spec);
}

Spectrogram apply_mask(const Spectrogram& spec, const Tensor& mask) {
  if (mask.shape() != spec.magnitude.shape()) {
    throw DimensionError("apply_mask: mask " + shape_string(mask.shape()) +
                         " vs spectrogram " + shape_string(spec.magnitude.shape()));
  }
  auto m = mask.data();
  for (double v : m) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ContractError("apply_mask: mask value " + std::to_string(v) + " outside [0, 1]");
    }
  }
  auto scaled = [&](const Tensor& src) {
    auto d = src.data();
    std::vector<double> out(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) out[i] = m[i] * d[i];
    return Tensor::from(src.shape(), std::move(out));
  };
  Spectrogram out = spec;
  out.real = scaled(spec.real);
  out.imag = scaled(spec.imag);
  out.magnitude = scaled(spec.magnitude);
  out.phase = spec.phase;
  return out;
}

}  // namespace spikes4::dsp
