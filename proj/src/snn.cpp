#include "spikes4/snn.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "spikes4/error.hpp"
#include "spikes4/ops.hpp"

namespace spikes4::snn {

double atan_surrogate_grad(double x, double alpha) {
  const double z = std::numbers::pi * alpha * x / 2.0;
  return alpha / (2.0 * (1.0 + z * z));
}

Tensor atan_surrogate_grad(const Tensor& x, double alpha) {
  auto d = x.data();
  std::vector<double> out(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) out[i] = atan_surrogate_grad(d[i], alpha);
  return Tensor::from(x.shape(), std::move(out));
}

Tensor spike_fn(const Tensor& x, double alpha, SpikeForward forward) {
  auto d = x.data();
  std::vector<double> out(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (forward == SpikeForward::hard) {
      out[i] = d[i] >= 0.0 ? 1.0 : 0.0;
    } else {
      out[i] = std::atan(std::numbers::pi * alpha * d[i] / 2.0) / std::numbers::pi + 0.5;
    }
  }
  return make_op_result(x.shape(), std::move(out), {x},
                        [x, alpha](std::span<const double> g, std::vector<std::vector<double>*>& in) {
                          auto d = x.data();
                          auto& gx = *in[0];
                          for (std::size_t i = 0; i < g.size(); ++i) {
                            gx[i] += g[i] * atan_surrogate_grad(d[i], alpha);
                          }
                        });
}

LifParams LifParams::with_tau(double tau, bool trainable) {
  if (!(tau > 1.0)) throw ConfigError("membrane time constant must exceed 1, got " + std::to_string(tau));
  LifParams p;
  p.tau_raw = Tensor::scalar(-std::log(tau - 1.0), trainable);
  return p;
}

double LifParams::decay() const {
  const double x = tau_raw.item();
  return 1.0 / (1.0 + std::exp(-x));
}

void LifParams::validate() const {
  if (!(v_threshold > v_reset)) {
    throw ConfigError("v_threshold (" + std::to_string(v_threshold) + ") must exceed v_reset (" +
                      std::to_string(v_reset) + ")");
  }
  if (!tau_raw.defined() || tau_raw.numel() != 1) throw ConfigError("tau_raw must be a scalar");
}

LifStepResult lif_step(const LifParams& params, const LifState& state, const Tensor& input) {
  if (state.v.shape() != input.shape()) {
    throw DimensionError("lif_step: state " + shape_string(state.v.shape()) + " vs input " +
                         shape_string(input.shape()));
  }
  const Tensor decay = sigmoid(reshape(params.tau_raw, {}));
  LifStepResult r;
  const Tensor leak = sub(input, shift(state.v, -params.v_reset));
  r.pre_reset = add(state.v, mul(decay, leak));
  r.spikes = spike_fn(shift(r.pre_reset, -params.v_threshold), params.surrogate_alpha,
                      params.forward);
  // U·(1 − S) + V_reset·S, which is exactly V_reset whenever S = 1.
  const Tensor keep = shift(neg(r.spikes), 1.0);
  r.state.v = add(mul(r.pre_reset, keep), scale(r.spikes, params.v_reset));
  return r;
}

LifSequence lif_sequence(const LifParams& params, const Tensor& inputs, bool trace) {
  if (inputs.rank() != 2) {
    throw DimensionError("lif_sequence: expected T×W inputs, got " + shape_string(inputs.shape()));
  }
  const std::size_t t_len = inputs.dim(0);
  const std::size_t width = inputs.dim(1);
  LifState state{Tensor::full({width}, params.v_reset)};
  std::vector<Tensor> spikes, membrane, pre;
  spikes.reserve(t_len);
  for (std::size_t t = 0; t < t_len; ++t) {
    LifStepResult r = lif_step(params, state, row(inputs, t));
    spikes.push_back(r.spikes);
    if (trace) {
      membrane.push_back(r.state.v);
      pre.push_back(r.pre_reset);
    }
    state = r.state;
  }
  LifSequence out;
  out.spikes = stack_rows(spikes);
  if (trace) {
    out.membrane = stack_rows(membrane);
    out.pre_reset = stack_rows(pre);
  }
  return out;
}

}  // namespace spikes4::snn
