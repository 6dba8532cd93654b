#pragma once

#include <cstddef>
#include <vector>

#include "spikes4/tensor.hpp"

namespace spikes4 {

// Elementwise binary ops broadcast only along leading dimensions: the shorter
// operand's shape must equal a suffix of the longer one (a rank-0 scalar
// broadcasts everywhere).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double factor);
Tensor shift(const Tensor& a, double offset);
/// max(x, floor); the gradient is zero where the floor is active.
Tensor clamp_min(const Tensor& a, double floor);
Tensor sigmoid(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor square(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

/// Sum of all elements, rank-0 result.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Inner product of two equal-shape tensors, rank-0 result.
Tensor dot(const Tensor& a, const Tensor& b);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, const Shape& shape);

/// Row `index` of a matrix as a vector.
Tensor row(const Tensor& a, std::size_t index);
/// Stacks equal-length vectors into a matrix.
Tensor stack_rows(const std::vector<Tensor>& rows);
/// Leading `count` columns of a matrix.
Tensor take_columns(const Tensor& a, std::size_t count);

/// Solves m · x = rhs for square m (rhs is n×k). Throws NumericalError with a
/// reciprocal-condition estimate when m is singular.
Tensor solve(const Tensor& m, const Tensor& rhs);

/// Causal convolution out[t] = Σ_{i≤t} kernel[i]·signal[t−i], via a
/// zero-padded FFT of length ≥ 2T−1. Shapes [T] or [C, T] (rows independent).
Tensor fft_convolve(const Tensor& signal, const Tensor& kernel);

}  // namespace spikes4
