#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "spikes4/tensor.hpp"

namespace spikes4::ssm {

/// HiPPO-LegS state matrix (0-indexed):
///   A[n,k] = −√(2n+1)·√(2k+1)  for n > k
///   A[n,n] = −(n+1)
///   A[n,k] = 0                 for n < k
Tensor hippo_legs(std::size_t state_size);

/// Companion input vector B[n] = √(2n+1), shape H×1.
Tensor hippo_legs_input(std::size_t state_size);

/// One single-input single-output continuous channel. The D term is absent.
struct SsmChannel {
  Tensor a;       // H×H
  Tensor b;       // H×1
  Tensor c;       // 1×H
  Tensor log_dt;  // scalar, Δ = exp(log_dt)
};

struct DiscreteSsm {
  Tensor a_bar;  // H×H
  Tensor b_bar;  // H×1
  Tensor c_bar;  // 1×H
};

/// Bilinear (Tustin) discretization:
///   Ā = (I − Δ/2·A)⁻¹(I + Δ/2·A),  B̄ = (I − Δ/2·A)⁻¹·Δ·B,  C̄ = C.
/// Differentiable with respect to A, B, C and log_dt.
DiscreteSsm discretize_bilinear(const SsmChannel& channel);
DiscreteSsm discretize_bilinear(const Tensor& a, const Tensor& b, const Tensor& c,
                                const Tensor& log_dt);

struct StepResult {
  Tensor state;   // H×1
  Tensor output;  // scalar
};

/// x_k = Ā·x_{k−1} + B̄·u_k,  y_k = C̄·x_k.
StepResult recurrent_step(const DiscreteSsm& ssm, const Tensor& state, const Tensor& input);

/// Runs recurrent_step over a length-T sequence from the zero state.
Tensor recurrent_rollout(const DiscreteSsm& ssm, const Tensor& u);

/// taps[i] = C̄·Āⁱ·B̄ for i < length, by iterating v ← Ā·v from v = B̄. This is
/// the impulse response of the recurrence, so taps[0] = C̄·B̄.
Tensor materialize_kernel(const DiscreteSsm& ssm, std::size_t length);

/// Causal convolution of u with the length-T kernel through fft_convolve.
Tensor apply_convolution_mode(const DiscreteSsm& ssm, const Tensor& u);

/// Spectral radius of a dense matrix.
double spectral_radius(const Tensor& m);

/// A bank of K independent SISO channels sharing the frozen HiPPO-LegS state
/// matrix. B, C and log_dt are trainable, one row (or entry) per channel.
///
/// The discretized matrix never materializes: with A = −(diag(n+1) + S·L·S),
/// S = diag(√(2n+1)) and L the strictly lower matrix of ones, both
/// (I − Δ/2·A)⁻¹ and its transpose apply in O(H) through running sums, which
/// makes a full scan O(T·H) per channel.
class LegsBank {
 public:
  LegsBank() = default;
  LegsBank(std::size_t channels, std::size_t state_size, std::mt19937_64& rng);

  std::size_t channels() const { return channels_; }
  std::size_t state_size() const { return state_size_; }

  const Tensor& b() const { return b_; }
  const Tensor& c() const { return c_; }
  const Tensor& log_dt() const { return log_dt_; }
  Tensor& b() { return b_; }
  Tensor& c() { return c_; }
  Tensor& log_dt() { return log_dt_; }

  /// The frozen continuous state matrix (H×H), identical for every channel.
  const Tensor& a() const { return a_; }

  /// Runs every channel's recurrence over its row of u (K×T); returns K×T.
  Tensor scan(const Tensor& u) const;

  /// Impulse responses of all channels, K×length.
  Tensor kernels(std::size_t length) const;

  /// Causal convolution of u (K×T) with precomputed kernels (K×T).
  static Tensor convolve(const Tensor& u, const Tensor& kernels);

  /// Dense view of channel k for cross-checks against the reference path.
  SsmChannel channel(std::size_t k) const;

 private:
  std::size_t channels_ = 0;
  std::size_t state_size_ = 0;
  Tensor a_;
  Tensor b_;       // K×H
  Tensor c_;       // K×H
  Tensor log_dt_;  // K
};

}  // namespace spikes4::ssm
