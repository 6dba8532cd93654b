#pragma once

#include <cstddef>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "spikes4/model.hpp"

namespace spikes4::profile {

inline constexpr double kReferenceParams = 0.53e6;
inline constexpr double kReferenceFlops = 1.50e9;

struct ModuleCost {
  std::string name;
  std::size_t params = 0;  // trainable scalars
  std::size_t frozen = 0;  // non-trainable scalars
  double flops = 0.0;      // one forward pass of one sample
};

struct CostReport {
  std::vector<ModuleCost> modules;
  std::size_t frames = 0;
  std::size_t total_params = 0;
  std::size_t total_frozen = 0;
  double total_flops = 0.0;
  double spike_sparsity = -1.0;  // fraction of zero spikes on the probe; < 0 if not measured
};

/// Trainable and frozen scalar counts per module, read from the model's
/// tensors.
CostReport count_params(const model::SpikingS4Model& model);

/// Analytic forward FLOPs for `frames` STFT frames, per module. Counting
/// rules: a multiply-accumulate is 2 FLOPs, so an m×k by k×n product costs
/// 2·m·k·n; an FFT of length L costs 5·L·log₂L; every other elementwise
/// operation costs 1 FLOP per element per operation.
CostReport count_flops(const model::ModelConfig& cfg, std::size_t frames);

/// Parameter and FLOP counts merged into one report.
CostReport profile(const model::SpikingS4Model& model, std::size_t frames);

/// Fraction of zero entries over every layer's spike tensor when the model
/// enhances `probe`.
double spike_sparsity(const model::SpikingS4Model& model, std::span<const double> probe);

/// Frames produced by the model's STFT for a clip of `samples` samples.
std::size_t frames_for(const model::ModelConfig& cfg, std::size_t samples);

/// The counting rules and per-module formulas as human-readable lines.
std::vector<std::string> formula_sheet(const model::ModelConfig& cfg);

void write_text(const CostReport& report, const model::ModelConfig& cfg, std::ostream& out);
/// One `key=value` record per line.
void write_records(const CostReport& report, std::ostream& out);

}  // namespace spikes4::profile
