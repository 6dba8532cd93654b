#include "spikes4/ssm.hpp"

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <memory>
#include <string>

#include "spikes4/error.hpp"
#include "spikes4/ops.hpp"

namespace spikes4::ssm {

Tensor hippo_legs(std::size_t state_size) {
  if (state_size == 0) throw ConfigError("hippo_legs: state size must be >= 1");
  const std::size_t h = state_size;
  std::vector<double> a(h * h, 0.0);
  for (std::size_t n = 0; n < h; ++n) {
    for (std::size_t k = 0; k < n; ++k) {
      a[n * h + k] = -std::sqrt(2.0 * n + 1.0) * std::sqrt(2.0 * k + 1.0);
    }
    a[n * h + n] = -static_cast<double>(n + 1);
  }
  return Tensor::from({h, h}, std::move(a));
}

Tensor hippo_legs_input(std::size_t state_size) {
  if (state_size == 0) throw ConfigError("hippo_legs_input: state size must be >= 1");
  std::vector<double> b(state_size);
  for (std::size_t n = 0; n < state_size; ++n) b[n] = std::sqrt(2.0 * n + 1.0);
  return Tensor::from({state_size, 1}, std::move(b));
}

DiscreteSsm discretize_bilinear(const SsmChannel& channel) {
  return discretize_bilinear(channel.a, channel.b, channel.c, channel.log_dt);
}

DiscreteSsm discretize_bilinear(const Tensor& a, const Tensor& b, const Tensor& c,
                                const Tensor& log_dt) {
  if (a.rank() != 2 || a.dim(0) != a.dim(1)) {
    throw DimensionError("discretize_bilinear: A must be square, got " + shape_string(a.shape()));
  }
  const std::size_t h = a.dim(0);
  if (b.shape() != Shape{h, 1}) {
    throw DimensionError("discretize_bilinear: B must be " + shape_string({h, 1}) + ", got " +
                         shape_string(b.shape()));
  }
  if (c.shape() != Shape{1, h}) {
    throw DimensionError("discretize_bilinear: C must be " + shape_string({1, h}) + ", got " +
                         shape_string(c.shape()));
  }
  if (log_dt.numel() != 1) throw DimensionError("discretize_bilinear: log_dt must be a scalar");

  std::vector<double> eye(h * h, 0.0);
  for (std::size_t i = 0; i < h; ++i) eye[i * h + i] = 1.0;
  const Tensor identity = Tensor::from({h, h}, std::move(eye));

  const Tensor step = exp(reshape(log_dt, {}));
  const Tensor half_a = mul(scale(step, 0.5), a);
  const Tensor lhs = sub(identity, half_a);
  DiscreteSsm d;
  d.a_bar = solve(lhs, add(identity, half_a));
  d.b_bar = solve(lhs, mul(step, b));
  d.c_bar = c;
  return d;
}

StepResult recurrent_step(const DiscreteSsm& ssm, const Tensor& state, const Tensor& input) {
  const std::size_t h = ssm.a_bar.dim(0);
  if (state.shape() != Shape{h, 1}) {
    throw DimensionError("recurrent_step: state " + shape_string(state.shape()) + ", expected " +
                         shape_string({h, 1}));
  }
  if (input.numel() != 1) throw DimensionError("recurrent_step: input must be a scalar");
  StepResult r;
  r.state = add(matmul(ssm.a_bar, state), mul(ssm.b_bar, reshape(input, {})));
  r.output = reshape(matmul(ssm.c_bar, r.state), {});
  return r;
}

Tensor recurrent_rollout(const DiscreteSsm& ssm, const Tensor& u) {
  if (u.rank() != 1 || u.numel() == 0) {
    throw DimensionError("recurrent_rollout: expected a non-empty [T] input, got " +
                         shape_string(u.shape()));
  }
  const std::size_t t_len = u.numel();
  const Tensor column = reshape(u, {t_len, 1});
  Tensor state = Tensor::zeros({ssm.a_bar.dim(0), 1});
  std::vector<Tensor> outputs;
  outputs.reserve(t_len);
  for (std::size_t t = 0; t < t_len; ++t) {
    StepResult r = recurrent_step(ssm, state, row(column, t));
    state = r.state;
    outputs.push_back(reshape(r.output, {1}));
  }
  return reshape(stack_rows(outputs), {t_len});
}

Tensor materialize_kernel(const DiscreteSsm& ssm, std::size_t length) {
  if (length == 0) throw ConfigError("materialize_kernel: length must be >= 1");
  std::vector<Tensor> taps;
  taps.reserve(length);
  Tensor v = ssm.b_bar;
  for (std::size_t i = 0; i < length; ++i) {
    Tensor tap = reshape(matmul(ssm.c_bar, v), {1});
    if (!std::isfinite(tap.item())) {
      throw NumericalError("materialize_kernel: non-finite tap at index " + std::to_string(i) +
                           " (unstable discrete state matrix)");
    }
    taps.push_back(tap);
    if (i + 1 < length) v = matmul(ssm.a_bar, v);
  }
  return reshape(stack_rows(taps), {length});
}

Tensor apply_convolution_mode(const DiscreteSsm& ssm, const Tensor& u) {
  if (u.rank() != 1 || u.numel() == 0) {
    throw DimensionError("apply_convolution_mode: expected a non-empty [T] input, got " +
                         shape_string(u.shape()));
  }
  return fft_convolve(u, materialize_kernel(ssm, u.numel()));
}

double spectral_radius(const Tensor& m) {
  if (m.rank() != 2 || m.dim(0) != m.dim(1)) {
    throw DimensionError("spectral_radius: square matrix required");
  }
  const auto n = static_cast<Eigen::Index>(m.dim(0));
  Eigen::MatrixXd dense(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) dense(i, j) = m.at(i, j);
  }
  Eigen::EigenSolver<Eigen::MatrixXd> solver(dense, false);
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

namespace {

// Structured actions of the LegS matrix and its bilinear transform for one
// step size. M denotes I − Δ/2·A.
class LegsAction {
 public:
  explicit LegsAction(std::size_t h) : s_(h), d_(h) {
    for (std::size_t n = 0; n < h; ++n) {
      s_[n] = std::sqrt(2.0 * n + 1.0);
      d_[n] = static_cast<double>(n + 1);
    }
  }

  std::size_t size() const { return s_.size(); }

  // x = M⁻¹ b (forward substitution with a running Σ s_k x_k).
  void solve_m(double step, const double* b, double* x) const {
    const double half = 0.5 * step;
    double prefix = 0.0;
    for (std::size_t n = 0; n < s_.size(); ++n) {
      x[n] = (b[n] - half * s_[n] * prefix) / (1.0 + half * d_[n]);
      prefix += s_[n] * x[n];
    }
  }

  // x = M⁻ᵀ b (backward substitution).
  void solve_mt(double step, const double* b, double* x) const {
    const double half = 0.5 * step;
    double suffix = 0.0;
    for (std::size_t n = s_.size(); n-- > 0;) {
      x[n] = (b[n] - half * s_[n] * suffix) / (1.0 + half * d_[n]);
      suffix += s_[n] * x[n];
    }
  }

  // out = A v
  void apply_a(const double* v, double* out) const {
    double prefix = 0.0;
    for (std::size_t n = 0; n < s_.size(); ++n) {
      out[n] = -d_[n] * v[n] - s_[n] * prefix;
      prefix += s_[n] * v[n];
    }
  }

 private:
  std::vector<double> s_;
  std::vector<double> d_;
};

double dot_n(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

LegsBank::LegsBank(std::size_t channels, std::size_t state_size, std::mt19937_64& rng)
    : channels_(channels), state_size_(state_size) {
  if (channels == 0) throw ConfigError("LegsBank: channel count must be >= 1");
  a_ = hippo_legs(state_size);
  const auto b_row = hippo_legs_input(state_size).to_vector();
  std::vector<double> b(channels * state_size), c(channels * state_size), log_dt(channels);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(std::log(1e-3), std::log(1e-1));
  const double c_scale = 1.0 / std::sqrt(static_cast<double>(state_size));
  for (std::size_t k = 0; k < channels; ++k) {
    for (std::size_t n = 0; n < state_size; ++n) {
      b[k * state_size + n] = b_row[n];
      c[k * state_size + n] = normal(rng) * c_scale;
    }
    log_dt[k] = uniform(rng);
  }
  b_ = Tensor::from({channels, state_size}, std::move(b), true);
  c_ = Tensor::from({channels, state_size}, std::move(c), true);
  log_dt_ = Tensor::from({channels}, std::move(log_dt), true);
}

Tensor LegsBank::scan(const Tensor& u) const {
  if (u.rank() != 2 || u.dim(0) != channels_ || u.dim(1) == 0) {
    throw DimensionError("LegsBank::scan: expected [" + std::to_string(channels_) +
                         ", T], got " + shape_string(u.shape()));
  }
  const std::size_t kc = channels_;
  const std::size_t h = state_size_;
  const std::size_t t_len = u.dim(1);
  const auto action = std::make_shared<LegsAction>(h);
  // states[k][t] = x_t of channel k, kept for the adjoint sweep.
  auto states = std::make_shared<std::vector<double>>(kc * t_len * h);
  auto b_bars = std::make_shared<std::vector<double>>(kc * h);

  auto du = u.data();
  auto db = b_.data();
  auto dc = c_.data();
  auto dl = log_dt_.data();
  std::vector<double> y(kc * t_len);
  std::vector<double> tmp(h);
  for (std::size_t k = 0; k < kc; ++k) {
    const double step = std::exp(dl[k]);
    double* bbar = b_bars->data() + k * h;
    action->solve_m(step, db.data() + k * h, bbar);
    for (std::size_t n = 0; n < h; ++n) bbar[n] *= step;
    const double* ck = dc.data() + k * h;
    double* xs = states->data() + k * t_len * h;
    for (std::size_t t = 0; t < t_len; ++t) {
      double* x = xs + t * h;
      const double ut = du[k * t_len + t];
      if (t == 0) {
        for (std::size_t n = 0; n < h; ++n) x[n] = bbar[n] * ut;
      } else {
        const double* prev = xs + (t - 1) * h;
        // Ā·prev = 2·M⁻¹·prev − prev
        action->solve_m(step, prev, tmp.data());
        for (std::size_t n = 0; n < h; ++n) x[n] = 2.0 * tmp[n] - prev[n] + bbar[n] * ut;
      }
      y[k * t_len + t] = dot_n(ck, x, h);
    }
  }

  for (double v : y) {
    if (!std::isfinite(v)) throw NumericalError("LegsBank::scan: non-finite output");
  }

  return make_op_result(
      {kc, t_len}, std::move(y), {u, b_, c_, log_dt_},
      [u, b = b_, c = c_, log_dt = log_dt_, action, states, b_bars, kc, h, t_len](
          std::span<const double> g, std::vector<std::vector<double>*>& in) {
        auto du = u.data();
        auto dc = c.data();
        auto dl = log_dt.data();
        std::vector<double> lambda(h), lambda_next(h, 0.0), w(h), w_next(h, 0.0), mx(h), amx(h),
            gbbar(h), tmp(h), tmp2(h);
        for (std::size_t k = 0; k < kc; ++k) {
          const double step = std::exp(dl[k]);
          const double* ck = dc.data() + k * h;
          const double* bbar = b_bars->data() + k * h;
          const double* xs = states->data() + k * t_len * h;
          std::fill(lambda_next.begin(), lambda_next.end(), 0.0);
          std::fill(w_next.begin(), w_next.end(), 0.0);
          std::fill(gbbar.begin(), gbbar.end(), 0.0);
          double g_step = 0.0;
          for (std::size_t t = t_len; t-- > 0;) {
            const double gy = g[k * t_len + t];
            // λ_t = Cᵀ·gy_t + Āᵀ·λ_{t+1},  Āᵀ·λ = 2·M⁻ᵀ·λ − λ
            for (std::size_t n = 0; n < h; ++n) {
              lambda[n] = ck[n] * gy + 2.0 * w_next[n] - lambda_next[n];
            }
            const double* x = xs + t * h;
            if (in[2]) {
              double* gc = in[2]->data() + k * h;
              for (std::size_t n = 0; n < h; ++n) gc[n] += gy * x[n];
            }
            const double ut = du[k * t_len + t];
            if (in[0]) (*in[0])[k * t_len + t] += dot_n(bbar, lambda.data(), h);
            for (std::size_t n = 0; n < h; ++n) gbbar[n] += lambda[n] * ut;
            action->solve_mt(step, lambda.data(), w.data());
            if (t > 0 && in[3]) {
              // ∂Ā/∂Δ = M⁻¹·A·M⁻¹, contracted as (M⁻ᵀλ)ᵀ·A·(M⁻¹x_{t−1}).
              action->solve_m(step, xs + (t - 1) * h, mx.data());
              action->apply_a(mx.data(), amx.data());
              g_step += dot_n(w.data(), amx.data(), h);
            }
            std::swap(lambda, lambda_next);
            std::swap(w, w_next);
          }
          if (in[1]) {
            // B̄ = Δ·M⁻¹·B  ⇒  B̄ₐ = Δ·M⁻ᵀ·ḡ
            action->solve_mt(step, gbbar.data(), tmp.data());
            double* gb = in[1]->data() + k * h;
            for (std::size_t n = 0; n < h; ++n) gb[n] += step * tmp[n];
          }
          if (in[3]) {
            // ∂B̄/∂Δ = B̄/Δ + ½·M⁻¹·A·B̄
            action->apply_a(bbar, tmp.data());
            action->solve_m(step, tmp.data(), tmp2.data());
            for (std::size_t n = 0; n < h; ++n) {
              g_step += gbbar[n] * (bbar[n] / step + 0.5 * tmp2[n]);
            }
            (*in[3])[k] += g_step * step;
          }
        }
      });
}

Tensor LegsBank::kernels(std::size_t length) const {
  if (length == 0) throw ConfigError("LegsBank::kernels: length must be >= 1");
  std::vector<double> impulse(channels_ * length, 0.0);
  for (std::size_t k = 0; k < channels_; ++k) impulse[k * length] = 1.0;
  return scan(Tensor::from({channels_, length}, std::move(impulse)));
}

Tensor LegsBank::convolve(const Tensor& u, const Tensor& kernels) {
  return fft_convolve(u, kernels);
}

SsmChannel LegsBank::channel(std::size_t k) const {
  if (k >= channels_) throw DimensionError("LegsBank::channel index out of range");
  const std::size_t h = state_size_;
  auto db = b_.data();
  auto dc = c_.data();
  SsmChannel ch;
  ch.a = a_;
  ch.b = Tensor::from({h, 1}, std::vector<double>(db.begin() + static_cast<std::ptrdiff_t>(k * h),
                                                  db.begin() + static_cast<std::ptrdiff_t>((k + 1) * h)));
  ch.c = Tensor::from({1, h}, std::vector<double>(dc.begin() + static_cast<std::ptrdiff_t>(k * h),
                                                  dc.begin() + static_cast<std::ptrdiff_t>((k + 1) * h)));
  ch.log_dt = Tensor::scalar(log_dt_.data()[k]);
  return ch;
}

}  // namespace spikes4::ssm
