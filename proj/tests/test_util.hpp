#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "spikes4/tensor.hpp"

namespace spikes4::testing {

inline Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0,
                            double hi = 1.0, bool requires_grad = false) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(numel_of(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor::from(shape, std::move(v), requires_grad);
}

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, double lo = -1.0,
                                         double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

/// Central finite differences of a scalar function with respect to every
/// entry of a leaf, perturbing the leaf in place.
inline std::vector<double> numeric_gradient(const std::function<double()>& f, Tensor leaf,
                                            double h = 1e-6) {
  auto d = leaf.mutable_data();
  std::vector<double> g(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double keep = d[i];
    d[i] = keep + h;
    const double up = f();
    d[i] = keep - h;
    const double down = f();
    d[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

/// ‖a − b‖₂ / max(‖a‖₂, ‖b‖₂, floor).
inline double relative_error(std::span<const double> a, std::span<const double> b,
                             double floor = 1e-12) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// Tape gradient of a scalar function with respect to a leaf.
inline std::vector<double> tape_gradient(const std::function<Tensor()>& f, const Tensor& leaf) {
  Tape tape;
  TapeScope scope(tape);
  const Tensor loss = f();
  const Gradients g = tape.gradients(loss);
  if (const auto* v = g.find(leaf)) return *v;
  return std::vector<double>(leaf.numel(), 0.0);
}

}  // namespace spikes4::testing
