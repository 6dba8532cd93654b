#pragma once

#include <cstddef>

#include "spikes4/tensor.hpp"

namespace spikes4::snn {

/// Forward behaviour of the spike nonlinearity. `hard` emits a Heaviside step
/// and back-propagates the Atan surrogate; `smooth` replaces the step by its
/// arctan primitive so the surrogate becomes the exact derivative (used for
/// finite-difference checks).
enum class SpikeForward { hard, smooth };

/// d/dx [ (1/π)·atan(π·a·x/2) + 1/2 ] = a / (2·(1 + (π·a·x/2)²))
double atan_surrogate_grad(double x, double alpha);
Tensor atan_surrogate_grad(const Tensor& x, double alpha);

/// Heaviside (or its arctan primitive) of x with the Atan surrogate backward.
Tensor spike_fn(const Tensor& x, double alpha, SpikeForward forward = SpikeForward::hard);

struct LifParams {
  double v_threshold = 1.0;
  double v_reset = 0.0;
  /// Unconstrained scalar; the per-step decay is sigmoid(tau_raw) = 1/τ.
  Tensor tau_raw;
  double surrogate_alpha = 2.0;
  SpikeForward forward = SpikeForward::hard;

  /// Params with tau_raw initialised so that τ = tau (tau > 1).
  static LifParams with_tau(double tau, bool trainable = true);
  double decay() const;
  void validate() const;
};

struct LifState {
  Tensor v;  // post-reset membrane potential
};

struct LifStepResult {
  Tensor spikes;
  Tensor pre_reset;  // U(t)
  LifState state;
};

/// U = V + (1/τ)·(O − (V − V_reset)); S = Θ(U − V_threshold);
/// V' = U·(1 − S) + V_reset·S.
LifStepResult lif_step(const LifParams& params, const LifState& state, const Tensor& input);

struct LifSequence {
  Tensor spikes;     // T×W
  Tensor membrane;   // T×W post-reset V(t), only when traced
  Tensor pre_reset;  // T×W U(t), only when traced
};

/// Runs lif_step over the rows of `inputs` (T×W) from V = V_reset.
LifSequence lif_sequence(const LifParams& params, const Tensor& inputs, bool trace = false);

}  // namespace spikes4::snn
