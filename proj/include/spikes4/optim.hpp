#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "spikes4/tensor.hpp"

namespace spikes4::optim {

struct RAdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

/// Length of the approximated simple moving average at step t:
///   ρ_t = ρ_∞ − 2·t·β₂ᵗ/(1 − β₂ᵗ),  ρ_∞ = 2/(1 − β₂) − 1.
double rho(std::uint64_t step, double beta2);

/// Rectified Adam. While ρ_t ≤ 4 the update is plain bias-corrected momentum;
/// afterwards the adaptive step is scaled by the variance rectification term.
class RAdam {
 public:
  RAdam(std::vector<NamedTensor> params, RAdamConfig cfg);

  const RAdamConfig& config() const { return cfg_; }
  std::uint64_t step_count() const { return step_; }
  const std::vector<NamedTensor>& params() const { return params_; }

  /// Applies one update from the parameters' accumulated gradients. Throws
  /// TrainingError naming the first parameter with a non-finite gradient;
  /// nothing is modified in that case.
  void step();

  /// Clears every parameter's gradient; moments are untouched.
  void zero_grads();

  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }
  void load_state(std::uint64_t step, std::vector<std::vector<double>> m,
                  std::vector<std::vector<double>> v);

  /// Whether the most recent step used second-moment adaptation.
  bool last_step_adaptive() const { return last_adaptive_; }

 private:
  std::vector<NamedTensor> params_;
  RAdamConfig cfg_;
  std::uint64_t step_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  bool last_adaptive_ = false;
};

}  // namespace spikes4::optim
