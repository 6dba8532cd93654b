#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "spikes4/error.hpp"
#include "spikes4/ops.hpp"
#include "spikes4/snn.hpp"
#include "test_util.hpp"

using namespace spikes4;
using namespace spikes4::snn;
using spikes4::testing::numeric_gradient;
using spikes4::testing::random_tensor;
using spikes4::testing::relative_error;
using spikes4::testing::tape_gradient;

TEST(Spike, HardForwardIsHeavisideAtZero) {
  const Tensor x = Tensor::from({4}, {-1.0, -1e-12, 0.0, 0.3});
  EXPECT_EQ(spike_fn(x, 2.0).to_vector(), (std::vector<double>{0, 0, 1, 1}));
}

TEST(Spike, SurrogateIsDerivativeOfArctanPrimitive) {
  const double alpha = 2.0;
  auto primitive = [&](double x) { return std::atan(std::numbers::pi * alpha * x / 2) / std::numbers::pi + 0.5; };
  for (double x : {-2.0, -0.3, 0.0, 0.1, 1.5}) {
    const double h = 1e-6;
    const double fd = (primitive(x + h) - primitive(x - h)) / (2 * h);
    EXPECT_NEAR(atan_surrogate_grad(x, alpha), fd, 1e-8);
  }
  EXPECT_DOUBLE_EQ(atan_surrogate_grad(0.0, alpha), alpha / 2);
}

TEST(Spike, HardBackwardUsesSurrogate) {
  Tensor x = Tensor::from({3}, {-0.5, 0.0, 0.7}, true);
  const auto g = tape_gradient([&] { return sum(spike_fn(x, 2.0)); }, x);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(g[i], atan_surrogate_grad(x[i], 2.0));
}

TEST(Spike, SmoothForwardHasMatchingFiniteDifferences) {
  std::mt19937_64 rng(41);
  Tensor x = random_tensor({6}, rng, -1, 1, true);
  auto f = [&] { return sum(spike_fn(x, 2.0, SpikeForward::smooth)); };
  auto scalar = [&] {
    NoGradScope ng;
    return f().item();
  };
  EXPECT_LT(relative_error(tape_gradient(f, x), numeric_gradient(scalar, x)), 1e-8);
}

TEST(Lif, TauInitialisation) {
  const auto p = LifParams::with_tau(2.0);
  EXPECT_DOUBLE_EQ(p.decay(), 0.5);
  EXPECT_NEAR(LifParams::with_tau(4.0).decay(), 0.25, 1e-15);
  EXPECT_THROW(LifParams::with_tau(1.0), ConfigError);
}

TEST(Lif, InvalidThresholdRejected) {
  auto p = LifParams::with_tau(2.0);
  p.v_threshold = 0.0;
  p.v_reset = 0.0;
  EXPECT_THROW(p.validate(), ConfigError);
}

TEST(Lif, MatchesScalarSimulation) {
  std::mt19937_64 rng(42);
  auto p = LifParams::with_tau(3.0);
  p.v_reset = -0.2;
  const std::size_t t_len = 50, w = 4;
  const Tensor in = random_tensor({t_len, w}, rng, -0.5, 2.5);
  const auto seq = lif_sequence(p, in, true);
  const double d = 1.0 / 3.0;
  for (std::size_t j = 0; j < w; ++j) {
    double v = p.v_reset;
    for (std::size_t t = 0; t < t_len; ++t) {
      const double u = v + d * (in.at(t, j) - (v - p.v_reset));
      const double s = u >= p.v_threshold ? 1.0 : 0.0;
      v = s > 0 ? p.v_reset : u;
      EXPECT_NEAR(seq.pre_reset.at(t, j), u, 1e-14);
      EXPECT_EQ(seq.spikes.at(t, j), s);
      EXPECT_NEAR(seq.membrane.at(t, j), v, 1e-14);
    }
  }
}

TEST(Lif, SubThresholdDriveConvergesWithoutSpiking) {
  auto p = LifParams::with_tau(2.0);
  const Tensor in = Tensor::full({200, 1}, 0.5);
  const auto seq = lif_sequence(p, in, true);
  for (double s : seq.spikes.data()) EXPECT_EQ(s, 0.0);
  // Fixed point V* = V_reset + O.
  EXPECT_NEAR(seq.membrane.at(199, 0), 0.5, 1e-12);
}

TEST(Lif, StrongDriveSpikesAndResetsExactly) {
  auto p = LifParams::with_tau(2.0);
  const Tensor in = Tensor::full({10, 2}, 5.0);
  const auto seq = lif_sequence(p, in, true);
  for (std::size_t t = 0; t < 10; ++t) {
    for (std::size_t j = 0; j < 2; ++j) {
      EXPECT_EQ(seq.spikes.at(t, j), 1.0);
      EXPECT_EQ(seq.membrane.at(t, j), p.v_reset);
    }
  }
}

TEST(Lif, SmoothSequenceGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(43);
  auto p = LifParams::with_tau(2.0);
  p.forward = SpikeForward::smooth;
  Tensor in = random_tensor({8, 3}, rng, 0, 2, true);
  const Tensor w = random_tensor({8, 3}, rng);
  auto f = [&] { return dot(lif_sequence(p, in).spikes, w); };
  auto scalar = [&] {
    NoGradScope ng;
    return f().item();
  };
  EXPECT_LT(relative_error(tape_gradient(f, in), numeric_gradient(scalar, in)), 1e-6);
  EXPECT_LT(relative_error(tape_gradient(f, p.tau_raw), numeric_gradient(scalar, p.tau_raw)), 1e-6);
}

TEST(Lif, ShapeMismatchThrows) {
  auto p = LifParams::with_tau(2.0);
  LifState s{Tensor::zeros({3})};
  EXPECT_THROW(lif_step(p, s, Tensor::zeros({4})), DimensionError);
  EXPECT_THROW(lif_sequence(p, Tensor::zeros({4})), DimensionError);
}
