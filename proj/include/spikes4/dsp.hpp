#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "spikes4/tensor.hpp"

namespace spikes4::dsp {

inline constexpr double kMagnitudeFloor = 1e-8;

enum class WindowKind {
  sqrt_hann,  // sin(πn/N): squared window is a periodic Hann
  hann,       // periodic Hann
};

struct StftConfig {
  std::size_t window_length = 512;
  std::size_t hop_length = 256;
  WindowKind window = WindowKind::sqrt_hann;
  double sample_rate = 16000.0;

  std::size_t bins() const { return window_length / 2 + 1; }
  std::vector<double> window_samples() const;
  /// Throws ConfigError on odd/zero lengths, hop > window, or a window/hop
  /// pair whose squared overlap-add is not constant.
  void validate() const;
};

/// Precomputed transform weights, all F×N and non-trainable. Row f of the
/// analysis bases is w[n]·cos(2πfn/N) and w[n]·sin(2πfn/N); the synthesis
/// bases fold the Hermitian weights, window and inverse gain together.
struct FourierWeights {
  Tensor analysis_cos;
  Tensor analysis_sin;
  Tensor synthesis_cos;
  Tensor synthesis_sin;
  /// Scale applied after the analysis product, 2/Σw: a bin-centred sinusoid of
  /// amplitude a reads magnitude a.
  double analysis_gain = 1.0;
  std::vector<double> window;
};

FourierWeights build_fourier_weights(const StftConfig& cfg);

struct Spectrogram {
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::size_t signal_length = 0;
  Tensor real;  // T×F
  Tensor imag;
  Tensor magnitude;
  Tensor phase;
};

/// Frame layout shared by analysis and synthesis for a given signal length.
struct FrameLayout {
  std::size_t left_pad = 0;
  std::size_t padded_length = 0;
  std::size_t frames = 0;
};

/// STFT/ISTFT pair with frozen Fourier weights.
class StftLayer {
 public:
  explicit StftLayer(StftConfig cfg);

  const StftConfig& config() const { return cfg_; }
  const FourierWeights& weights() const { return weights_; }
  FrameLayout layout(std::size_t signal_length) const;

  Spectrogram forward(std::span<const double> signal) const;

  /// Differentiable synthesis from (possibly masked) real/imag parts.
  Tensor inverse(const Tensor& real, const Tensor& imag, std::size_t signal_length) const;
  std::vector<double> inverse(const Spectrogram& spec) const;

  /// Number of frozen scalars held by the layer (analysis + synthesis).
  std::size_t frozen_size() const;

 private:
  StftConfig cfg_;
  FourierWeights weights_;
};

Spectrogram stft(std::span<const double> signal, const StftConfig& cfg);
std::vector<double> istft(const Spectrogram& spec, const StftConfig& cfg);

/// Scales magnitude (and real/imag) by the mask; phase is copied untouched.
Spectrogram apply_mask(const Spectrogram& spec, const Tensor& mask);

}  // namespace spikes4::dsp
