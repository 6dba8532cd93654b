#pragma once

#include <span>

#include "spikes4/tensor.hpp"

namespace spikes4::objective {

inline constexpr double kEpsilon = 1e-8;
inline constexpr double kDefaultLambda = 0.001;

/// Scale-invariant SNR in dB:
///   s_target = (⟨ŝ, s⟩ / max(‖s‖², ε))·s,  e_noise = ŝ − s_target,
///   SI-SNR   = 10·log₁₀(max(‖s_target‖², ε) / max(‖e_noise‖², ε)).
/// Differentiable in the estimate. Throws InputError for an all-zero reference
/// or mismatched lengths.
Tensor si_snr(const Tensor& estimate, const Tensor& reference);
double si_snr(std::span<const double> estimate, std::span<const double> reference);

/// Mean of (target − predicted)² over all entries.
Tensor mask_mse(const Tensor& predicted, const Tensor& target);

struct LossReport {
  Tensor si_snr_loss;  // −SI-SNR
  Tensor mask_mse;
  double lambda = kDefaultLambda;
  Tensor total;  // si_snr_loss + λ·mask_mse
};

LossReport total_loss(const Tensor& estimate, const Tensor& reference,
                      const Tensor& predicted_mask, const Tensor& target_mask,
                      double lambda = kDefaultLambda);

}  // namespace spikes4::objective
