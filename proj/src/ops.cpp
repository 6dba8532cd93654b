#include "spikes4/ops.hpp"

#include <Eigen/Core>
#include <Eigen/LU>
#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <sstream>

#include "spikes4/error.hpp"

namespace spikes4 {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapConst = Eigen::Map<const RowMatrix>;
using MapMut = Eigen::Map<RowMatrix>;

bool is_suffix(const Shape& shorter, const Shape& longer) {
  if (shorter.size() > longer.size()) return false;
  return std::equal(shorter.rbegin(), shorter.rend(), longer.rbegin());
}

struct Broadcast {
  Shape out_shape;
  std::size_t a_inner;  // numel of a, repeated across the output
  std::size_t b_inner;
};

Broadcast broadcast(const Tensor& a, const Tensor& b, const char* op) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa == sb) return {sa, a.numel(), b.numel()};
  if (is_suffix(sb, sa)) return {sa, a.numel(), b.numel()};
  if (is_suffix(sa, sb)) return {sb, a.numel(), b.numel()};
  throw DimensionError(std::string(op) + ": cannot broadcast " + shape_string(sa) +
                       " with " + shape_string(sb));
}

template <typename Forward, typename GradA, typename GradB>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, Forward f, GradA ga,
              GradB gb) {
  Broadcast bc = broadcast(a, b, name);
  const std::size_t n = numel_of(bc.out_shape);
  auto da = a.data();
  auto db = b.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = f(da[i % bc.a_inner], db[i % bc.b_inner]);
  return make_op_result(
      bc.out_shape, std::move(out), {a, b},
      [a, b, bc, ga, gb](std::span<const double> g, std::vector<std::vector<double>*>& in) {
        auto da = a.data();
        auto db = b.data();
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double x = da[i % bc.a_inner];
          const double y = db[i % bc.b_inner];
          if (in[0]) (*in[0])[i % bc.a_inner] += g[i] * ga(x, y);
          if (in[1]) (*in[1])[i % bc.b_inner] += g[i] * gb(x, y);
        }
      });
}

template <typename Forward, typename Deriv>
Tensor unary(const Tensor& a, Forward f, Deriv d) {
  auto da = a.data();
  std::vector<double> out(da.size());
  for (std::size_t i = 0; i < da.size(); ++i) out[i] = f(da[i]);
  // d receives (input, output) so rules like sigmoid/exp can reuse the output.
  auto values = std::make_shared<std::vector<double>>(out);
  return make_op_result(a.shape(), std::move(out), {a},
                        [a, values, d](std::span<const double> g,
                                       std::vector<std::vector<double>*>& in) {
                          auto da = a.data();
                          auto& ga = *in[0];
                          for (std::size_t i = 0; i < g.size(); ++i) {
                            ga[i] += g[i] * d(da[i], (*values)[i]);
                          }
                        });
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + " needs a matrix, got " + shape_string(t.shape()));
  }
}

std::size_t fft_length(std::size_t t) {
  std::size_t n = 2;
  while (n < 2 * t - 1) n <<= 1;
  return n;
}

// out[t] = Σ_{i≤t} k[i]·s[t−i] for t < T.
void causal_convolve_fft(std::span<const double> s, std::span<const double> k,
                         std::span<double> out) {
  using Complex = std::complex<double>;
  thread_local Eigen::FFT<double> fft;
  const std::size_t t = s.size();
  const std::size_t n = fft_length(t);
  std::vector<Complex> xs(n), xk(n), fs(n), fk(n);
  for (std::size_t i = 0; i < t; ++i) {
    xs[i] = s[i];
    xk[i] = k[i];
  }
  fft.fwd(fs.data(), xs.data(), static_cast<Eigen::Index>(n));
  fft.fwd(fk.data(), xk.data(), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) fs[i] *= fk[i];
  fft.inv(xs.data(), fs.data(), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < t; ++i) out[i] = xs[i].real();
}

// Adjoint of causal convolution with respect to one operand:
// r[j] = Σ_{t≥j} g[t]·other[t−j].
void causal_correlate_fft(std::span<const double> g, std::span<const double> other,
                          std::span<double> accum) {
  const std::size_t t = g.size();
  std::vector<double> rev(g.rbegin(), g.rend());
  std::vector<double> tmp(t);
  causal_convolve_fft(rev, other, tmp);
  for (std::size_t j = 0; j < t; ++j) accum[j] += tmp[t - 1 - j];
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor scale(const Tensor& a, double factor) {
  return unary(
      a, [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Tensor shift(const Tensor& a, double offset) {
  return unary(
      a, [offset](double x) { return x + offset; }, [](double, double) { return 1.0; });
}

Tensor clamp_min(const Tensor& a, double floor) {
  return unary(
      a, [floor](double x) { return std::max(x, floor); },
      [floor](double x, double) { return x > floor ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& a) {
  return unary(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor square(const Tensor& a) {
  return unary(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  return make_op_result({}, {total}, {a},
                        [](std::span<const double> g, std::vector<std::vector<double>*>& in) {
                          for (auto& v : *in[0]) v += g[0];
                        });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw DimensionError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor dot(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("dot: shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " differ");
  }
  auto da = a.data();
  auto db = b.data();
  double total = 0.0;
  for (std::size_t i = 0; i < da.size(); ++i) total += da[i] * db[i];
  return make_op_result({}, {total}, {a, b},
                        [a, b](std::span<const double> g, std::vector<std::vector<double>*>& in) {
                          auto da = a.data();
                          auto db = b.data();
                          if (in[0]) {
                            for (std::size_t i = 0; i < db.size(); ++i) (*in[0])[i] += g[0] * db[i];
                          }
                          if (in[1]) {
                            for (std::size_t i = 0; i < da.size(); ++i) (*in[1])[i] += g[0] * da[i];
                          }
                        });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_string(a.shape()) + " · " +
                         shape_string(b.shape()));
  }
  std::vector<double> out(m * n);
  MapConst ma(a.data().data(), m, k);
  MapConst mb(b.data().data(), k, n);
  MapMut(out.data(), m, n).noalias() = ma * mb;
  return make_op_result({m, n}, std::move(out), {a, b},
                        [a, b, m, k, n](std::span<const double> g,
                                        std::vector<std::vector<double>*>& in) {
                          MapConst mg(g.data(), m, n);
                          if (in[0]) {
                            MapMut(in[0]->data(), m, k).noalias() +=
                                mg * MapConst(b.data().data(), k, n).transpose();
                          }
                          if (in[1]) {
                            MapMut(in[1]->data(), k, n).noalias() +=
                                MapConst(a.data().data(), m, k).transpose() * mg;
                          }
                        });
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t r = a.dim(0), c = a.dim(1);
  std::vector<double> out(r * c);
  MapMut(out.data(), c, r) = MapConst(a.data().data(), r, c).transpose();
  return make_op_result({c, r}, std::move(out), {a},
                        [r, c](std::span<const double> g, std::vector<std::vector<double>*>& in) {
                          MapMut(in[0]->data(), r, c) += MapConst(g.data(), c, r).transpose();
                        });
}

Tensor reshape(const Tensor& a, const Shape& shape) {
  if (numel_of(shape) != a.numel()) {
    throw DimensionError("reshape " + shape_string(a.shape()) + " to " + shape_string(shape));
  }
  return make_op_result(shape, a.to_vector(), {a},
                        [](std::span<const double> g, std::vector<std::vector<double>*>& in) {
                          for (std::size_t i = 0; i < g.size(); ++i) (*in[0])[i] += g[i];
                        });
}

Tensor row(const Tensor& a, std::size_t index) {
  require_matrix(a, "row");
  const std::size_t r = a.dim(0), c = a.dim(1);
  if (index >= r) {
    throw DimensionError("row " + std::to_string(index) + " of " + shape_string(a.shape()));
  }
  auto d = a.data();
  std::vector<double> out(d.begin() + static_cast<std::ptrdiff_t>(index * c),
                          d.begin() + static_cast<std::ptrdiff_t>((index + 1) * c));
  return make_op_result({c}, std::move(out), {a},
                        [index, c](std::span<const double> g,
                                   std::vector<std::vector<double>*>& in) {
                          for (std::size_t j = 0; j < c; ++j) (*in[0])[index * c + j] += g[j];
                        });
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) throw DimensionError("stack_rows of an empty list");
  const std::size_t c = rows.front().numel();
  std::vector<double> out;
  out.reserve(rows.size() * c);
  for (const auto& r : rows) {
    if (r.rank() != 1 || r.numel() != c) {
      throw DimensionError("stack_rows: row of shape " + shape_string(r.shape()) +
                           ", expected [" + std::to_string(c) + "]");
    }
    auto d = r.data();
    out.insert(out.end(), d.begin(), d.end());
  }
  return make_op_result({rows.size(), c}, std::move(out), rows,
                        [c](std::span<const double> g, std::vector<std::vector<double>*>& in) {
                          for (std::size_t i = 0; i < in.size(); ++i) {
                            if (!in[i]) continue;
                            for (std::size_t j = 0; j < c; ++j) (*in[i])[j] += g[i * c + j];
                          }
                        });
}

Tensor take_columns(const Tensor& a, std::size_t count) {
  require_matrix(a, "take_columns");
  const std::size_t r = a.dim(0), c = a.dim(1);
  if (count > c) {
    throw DimensionError("take_columns(" + std::to_string(count) + ") of " +
                         shape_string(a.shape()));
  }
  auto d = a.data();
  std::vector<double> out(r * count);
  for (std::size_t i = 0; i < r; ++i) {
    std::copy_n(d.begin() + static_cast<std::ptrdiff_t>(i * c), count, out.begin() + static_cast<std::ptrdiff_t>(i * count));
  }
  return make_op_result({r, count}, std::move(out), {a},
                        [r, c, count](std::span<const double> g,
                                      std::vector<std::vector<double>*>& in) {
                          for (std::size_t i = 0; i < r; ++i) {
                            for (std::size_t j = 0; j < count; ++j) (*in[0])[i * c + j] += g[i * count + j];
                          }
                        });
}

Tensor solve(const Tensor& m, const Tensor& rhs) {
  require_matrix(m, "solve");
  require_matrix(rhs, "solve");
  const std::size_t n = m.dim(0), k = rhs.dim(1);
  if (m.dim(1) != n || rhs.dim(0) != n) {
    throw DimensionError("solve: " + shape_string(m.shape()) + " against " +
                         shape_string(rhs.shape()));
  }
  RowMatrix mat = MapConst(m.data().data(), n, n);
  Eigen::PartialPivLU<RowMatrix> lu(mat);
  const double rcond = lu.rcond();
  if (!(rcond > 1e-14)) {
    std::ostringstream os;
    os << "solve: matrix is singular to working precision (reciprocal condition estimate "
       << rcond << ")";
    throw NumericalError(os.str());
  }
  RowMatrix x = lu.solve(MapConst(rhs.data().data(), n, k));
  std::vector<double> out(x.data(), x.data() + n * k);
  auto solution = std::make_shared<RowMatrix>(x);
  auto factor = std::make_shared<Eigen::PartialPivLU<RowMatrix>>(std::move(lu));
  return make_op_result({n, k}, std::move(out), {m, rhs},
                        [n, k, solution, factor](std::span<const double> g,
                                                 std::vector<std::vector<double>*>& in) {
                          // x = m⁻¹ r  ⇒  r̄ = m⁻ᵀ ḡ,  m̄ = −r̄ xᵀ
                          RowMatrix rbar = factor->transpose().solve(MapConst(g.data(), n, k));
                          if (in[1]) MapMut(in[1]->data(), n, k) += rbar;
                          if (in[0]) MapMut(in[0]->data(), n, n).noalias() -= rbar * solution->transpose();
                        });
}

Tensor fft_convolve(const Tensor& signal, const Tensor& kernel) {
  if (signal.shape() != kernel.shape()) {
    throw DimensionError("fft_convolve: signal " + shape_string(signal.shape()) +
                         " and kernel " + shape_string(kernel.shape()) + " differ");
  }
  if (signal.rank() != 1 && signal.rank() != 2) {
    throw DimensionError("fft_convolve expects [T] or [C, T], got " +
                         shape_string(signal.shape()));
  }
  const std::size_t t = signal.shape().back();
  const std::size_t channels = signal.rank() == 2 ? signal.dim(0) : 1;
  if (t == 0) throw DimensionError("fft_convolve of empty sequences");
  std::vector<double> out(channels * t);
  auto ds = signal.data();
  auto dk = kernel.data();
  for (std::size_t c = 0; c < channels; ++c) {
    causal_convolve_fft(ds.subspan(c * t, t), dk.subspan(c * t, t),
                        std::span<double>(out).subspan(c * t, t));
  }
  return make_op_result(signal.shape(), std::move(out), {signal, kernel},
                        [signal, kernel, channels, t](std::span<const double> g,
                                                      std::vector<std::vector<double>*>& in) {
                          auto ds = signal.data();
                          auto dk = kernel.data();
                          for (std::size_t c = 0; c < channels; ++c) {
                            auto gc = g.subspan(c * t, t);
                            if (in[0]) {
                              causal_correlate_fft(gc, dk.subspan(c * t, t),
                                                   std::span<double>(*in[0]).subspan(c * t, t));
                            }
                            if (in[1]) {
                              causal_correlate_fft(gc, ds.subspan(c * t, t),
                                                   std::span<double>(*in[1]).subspan(c * t, t));
                            }
                          }
                        });
}

}  // namespace spikes4
