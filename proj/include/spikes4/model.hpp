#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "spikes4/dsp.hpp"
#include "spikes4/snn.hpp"
#include "spikes4/ssm.hpp"
#include "spikes4/tensor.hpp"

namespace spikes4::model {

enum class SsmMode { convolution, recurrent };

const char* to_string(SsmMode mode);
SsmMode parse_mode(const std::string& text);

struct ModelConfig {
  std::size_t n_layers = 4;
  std::size_t hidden_size = 256;  // H, state size of every SSM channel
  std::size_t latent_size = 128;  // K, encoder width and channel count
  std::size_t window_length = 512;
  std::size_t hop = 256;
  double v_threshold = 1.0;
  double v_reset = 0.0;
  double tau_init = 2.0;
  double surrogate_alpha = 2.0;
  SsmMode mode = SsmMode::convolution;

  std::size_t bins() const { return window_length / 2 + 1; }
  dsp::StftConfig stft() const;
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// Per-frame affine map, x (T×in) ↦ x·W + b with W stored in×out.
struct Affine {
  Tensor weight;
  Tensor bias;

  Affine() = default;
  Affine(std::size_t in, std::size_t out, std::mt19937_64& rng);
  std::size_t in() const { return weight.dim(0); }
  std::size_t out() const { return weight.dim(1); }
  Tensor forward(const Tensor& x) const;
};

struct SpikingS4Layer {
  ssm::LegsBank bank;
  Affine emission;
  snn::LifParams lif;
  Affine decoder;
};

struct LayerTrace {
  Tensor ssm_out;  // T×K
  Tensor spikes;   // T×K
};

struct ForwardResult {
  Tensor mask;      // T×F in [0, 1]
  Tensor waveform;  // enhanced samples
  std::vector<LayerTrace> layers;
};

struct EnhanceResult {
  std::vector<double> waveform;
  Tensor mask;
  std::vector<LayerTrace> layers;
};

/// STFT → encoder → N spiking-S4 layers → sigmoid mask head → masked
/// magnitude with the noisy phase → ISTFT.
class SpikingS4Model {
 public:
  SpikingS4Model(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  const dsp::StftLayer& stft() const { return stft_; }
  std::size_t n_layers() const { return layers_.size(); }
  const SpikingS4Layer& layer(std::size_t i) const { return layers_.at(i); }
  SpikingS4Layer& layer(std::size_t i) { return layers_.at(i); }
  Affine& encoder() { return encoder_; }
  Affine& mask_head() { return mask_head_; }

  /// Trainable tensors in a stable order with dotted names.
  std::vector<NamedTensor> parameters() const;
  /// Frozen tensors: the per-layer HiPPO matrices and the Fourier weights.
  std::vector<NamedTensor> frozen() const;

  void set_spike_forward(snn::SpikeForward forward);
  void set_mode(SsmMode mode) { cfg_.mode = mode; }

  /// magnitude (T×F) → latent u (T×K).
  Tensor encode(const Tensor& magnitude) const;

  /// One spiking-S4 layer on u (T×K). In convolution mode `kernels` (K×L,
  /// L ≥ T) may be supplied; otherwise they are materialized here.
  Tensor layer_forward(std::size_t index, const Tensor& u, const Tensor* kernels = nullptr,
                       LayerTrace* trace = nullptr) const;

  /// latent (T×K) → mask (T×F) through an affine map and a sigmoid.
  Tensor predict_mask(const Tensor& latent) const;

  /// Per-layer SSM kernels of the given length, for sharing across a batch.
  std::vector<Tensor> ssm_kernels(std::size_t frames) const;

  ForwardResult forward(const dsp::Spectrogram& noisy,
                        const std::vector<Tensor>* kernels = nullptr) const;

  /// Inference on raw samples. `identity_mask` bypasses the network and
  /// resynthesizes with a unit mask.
  EnhanceResult enhance(std::span<const double> noisy, bool identity_mask = false) const;

 private:
  ModelConfig cfg_;
  dsp::StftLayer stft_;
  Affine encoder_;
  std::vector<SpikingS4Layer> layers_;
  Affine mask_head_;
};

/// Clipped ideal amplitude mask clip(clean / max(noisy, 1e-8), 0, 1).
Tensor ideal_mask(const Tensor& clean_magnitude, const Tensor& noisy_magnitude);

/// Closed-form trainable parameter count for a configuration.
std::size_t expected_parameter_count(const ModelConfig& cfg);

}  // namespace spikes4::model
