#include "spikes4/objective.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "spikes4/error.hpp"
#include "spikes4/ops.hpp"

namespace spikes4::objective {

namespace {
void check_pair(const Tensor& estimate, const Tensor& reference) {
  if (estimate.shape() != reference.shape()) {
    throw InputError("si_snr: estimate " + shape_string(estimate.shape()) + " and reference " +
                     shape_string(reference.shape()) + " differ");
  }
  bool any = false;
  for (double v : reference.data()) any = any || v != 0.0;
  if (!any) throw InputError("si_snr: reference is identically zero");
}
}  // namespace

Tensor si_snr(const Tensor& estimate, const Tensor& reference) {
  check_pair(estimate, reference);
  const Tensor energy = clamp_min(dot(reference, reference), kEpsilon);
  const Tensor gain = div(dot(estimate, reference), energy);
  const Tensor target = mul(gain, reference);
  const Tensor noise = sub(estimate, target);
  const Tensor ratio =
      div(clamp_min(dot(target, target), kEpsilon), clamp_min(dot(noise, noise), kEpsilon));
  return scale(log(ratio), 10.0 / std::numbers::ln10);
}

double si_snr(std::span<const double> estimate, std::span<const double> reference) {
  NoGradScope no_grad;
  const Tensor e = Tensor::from({estimate.size()}, {estimate.begin(), estimate.end()});
  const Tensor r = Tensor::from({reference.size()}, {reference.begin(), reference.end()});
  return si_snr(e, r).item();
}

Tensor mask_mse(const Tensor& predicted, const Tensor& target) {
  if (predicted.shape() != target.shape()) {
    throw DimensionError("mask_mse: predicted " + shape_string(predicted.shape()) +
                         " vs target " + shape_string(target.shape()));
  }
  return mean(square(sub(target, predicted)));
}

LossReport total_loss(const Tensor& estimate, const Tensor& reference,
                      const Tensor& predicted_mask, const Tensor& target_mask, double lambda) {
  LossReport r;
  r.lambda = lambda;
  r.si_snr_loss = neg(si_snr(estimate, reference));
  r.mask_mse = mask_mse(predicted_mask, target_mask);
  r.total = add(r.si_snr_loss, scale(r.mask_mse, lambda));
  return r;
}

}  // namespace spikes4::objective
