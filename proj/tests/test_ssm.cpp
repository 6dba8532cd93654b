#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "spikes4/error.hpp"
#include "spikes4/ops.hpp"
#include "spikes4/ssm.hpp"
#include "test_util.hpp"

using namespace spikes4;
using namespace spikes4::ssm;
using spikes4::testing::max_abs_diff;
using spikes4::testing::numeric_gradient;
using spikes4::testing::random_tensor;
using spikes4::testing::relative_error;
using spikes4::testing::tape_gradient;

namespace {

SsmChannel random_channel(std::size_t h, std::mt19937_64& rng) {
  SsmChannel ch;
  ch.a = hippo_legs(h);
  ch.b = hippo_legs_input(h);
  ch.c = random_tensor({1, h}, rng, -1, 1);
  std::uniform_real_distribution<double> log_dt(std::log(1e-3), std::log(1e-1));
  ch.log_dt = Tensor::scalar(log_dt(rng));
  return ch;
}

}  // namespace

TEST(Hippo, MatchesEntrywiseDefinition) {
  const std::size_t h = 6;
  const Tensor a = hippo_legs(h);
  for (std::size_t n = 0; n < h; ++n) {
    for (std::size_t k = 0; k < h; ++k) {
      double expected = 0.0;
      if (n > k) expected = -std::sqrt(2.0 * n + 1) * std::sqrt(2.0 * k + 1);
      if (n == k) expected = -static_cast<double>(n + 1);
      EXPECT_DOUBLE_EQ(a.at(n, k), expected);
    }
  }
  EXPECT_DOUBLE_EQ(hippo_legs(1).at(0, 0), -1.0);
  EXPECT_DOUBLE_EQ(hippo_legs_input(3).at(2, 0), std::sqrt(5.0));
}

TEST(Discretize, SatisfiesBilinearIdentities) {
  std::mt19937_64 rng(21);
  const auto ch = random_channel(8, rng);
  const auto d = discretize_bilinear(ch);
  const double step = std::exp(ch.log_dt.item());
  const std::size_t h = 8;
  // (I − Δ/2·A)·Ā = I + Δ/2·A and (I − Δ/2·A)·B̄ = Δ·B.
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < h; ++j) {
      double lhs = 0.0;
      for (std::size_t k = 0; k < h; ++k) {
        lhs += ((i == k ? 1.0 : 0.0) - 0.5 * step * ch.a.at(i, k)) * d.a_bar.at(k, j);
      }
      EXPECT_NEAR(lhs, (i == j ? 1.0 : 0.0) + 0.5 * step * ch.a.at(i, j), 1e-12);
    }
    double lhs = 0.0;
    for (std::size_t k = 0; k < h; ++k) {
      lhs += ((i == k ? 1.0 : 0.0) - 0.5 * step * ch.a.at(i, k)) * d.b_bar.at(k, 0);
    }
    EXPECT_NEAR(lhs, step * ch.b.at(i, 0), 1e-12);
  }
}

TEST(Discretize, ZeroStepGivesIdentity) {
  SsmChannel ch;
  ch.a = hippo_legs(4);
  ch.b = hippo_legs_input(4);
  ch.c = Tensor::full({1, 4}, 1.0);
  ch.log_dt = Tensor::scalar(-1000.0);  // Δ underflows to 0
  const auto d = discretize_bilinear(ch);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) EXPECT_DOUBLE_EQ(d.a_bar.at(i, j), i == j ? 1.0 : 0.0);
    EXPECT_DOUBLE_EQ(d.b_bar.at(i, 0), 0.0);
  }
}

TEST(Discretize, HippoStaysStable) {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 10; ++trial) {
    const auto d = discretize_bilinear(random_channel(16, rng));
    EXPECT_LT(spectral_radius(d.a_bar), 1.0);
  }
}

TEST(Discretize, RejectsBadShapes) {
  EXPECT_THROW(discretize_bilinear(Tensor::zeros({2, 3}), Tensor::zeros({2, 1}),
                                   Tensor::zeros({1, 2}), Tensor::scalar(0.0)),
               DimensionError);
}

TEST(Recurrence, ImpulseResponseEqualsKernel) {
  std::mt19937_64 rng(23);
  const auto d = discretize_bilinear(random_channel(5, rng));
  std::vector<double> impulse(12, 0.0);
  impulse[0] = 1.0;
  const auto y = recurrent_rollout(d, Tensor::from({12}, impulse));
  const auto k = materialize_kernel(d, 12);
  EXPECT_LT(max_abs_diff(y.data(), k.data()), 1e-14);
}

TEST(Recurrence, FirstTapIsCB) {
  std::mt19937_64 rng(24);
  const auto d = discretize_bilinear(random_channel(5, rng));
  double cb = 0.0;
  for (std::size_t n = 0; n < 5; ++n) cb += d.c_bar.at(0, n) * d.b_bar.at(n, 0);
  EXPECT_NEAR(materialize_kernel(d, 3)[0], cb, 1e-15);
}

TEST(Recurrence, ConvolutionModeMatchesRollout) {
  std::mt19937_64 rng(25);
  for (int trial = 0; trial < 5; ++trial) {
    const auto d = discretize_bilinear(random_channel(8, rng));
    const Tensor u = random_tensor({64}, rng);
    const auto rec = recurrent_rollout(d, u);
    const auto conv = apply_convolution_mode(d, u);
    EXPECT_LT(relative_error(conv.data(), rec.data()), 1e-12);
  }
}

TEST(Recurrence, UnstableMatrixSurfacesAsNumericalError) {
  DiscreteSsm d;
  d.a_bar = Tensor::from({1, 1}, {1e200});
  d.b_bar = Tensor::from({1, 1}, {1.0});
  d.c_bar = Tensor::from({1, 1}, {1.0});
  EXPECT_THROW(materialize_kernel(d, 5), NumericalError);
}

TEST(Recurrence, DenseGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(26);
  auto ch = random_channel(4, rng);
  ch.b = ch.b.detach(true);
  ch.c = ch.c.detach(true);
  ch.log_dt = ch.log_dt.detach(true);
  const Tensor u = random_tensor({10}, rng);
  const Tensor w = random_tensor({10}, rng);
  auto f = [&] { return dot(apply_convolution_mode(discretize_bilinear(ch), u), w); };
  auto scalar = [&] {
    NoGradScope ng;
    return f().item();
  };
  for (const Tensor& leaf : {ch.b, ch.c, ch.log_dt}) {
    EXPECT_LT(relative_error(tape_gradient(f, leaf), numeric_gradient(scalar, leaf)), 1e-6);
  }
}

TEST(LegsBank, ScanMatchesDenseReference) {
  std::mt19937_64 rng(27);
  LegsBank bank(3, 7, rng);
  const Tensor u = random_tensor({3, 40}, rng);
  const auto y = bank.scan(u);
  for (std::size_t k = 0; k < 3; ++k) {
    const auto d = discretize_bilinear(bank.channel(k));
    const auto ref = recurrent_rollout(d, row(u, k));
    EXPECT_LT(relative_error(row(y, k).data(), ref.data()), 1e-12) << k;
  }
}

TEST(LegsBank, KernelsMatchMaterializedKernel) {
  std::mt19937_64 rng(28);
  LegsBank bank(4, 6, rng);
  const auto kernels = bank.kernels(30);
  for (std::size_t k = 0; k < 4; ++k) {
    const auto ref = materialize_kernel(discretize_bilinear(bank.channel(k)), 30);
    EXPECT_LT(relative_error(row(kernels, k).data(), ref.data()), 1e-12);
  }
}

TEST(LegsBank, ConvolutionMatchesScan) {
  std::mt19937_64 rng(29);
  LegsBank bank(5, 8, rng);
  const Tensor u = random_tensor({5, 50}, rng);
  const auto conv = LegsBank::convolve(u, bank.kernels(50));
  EXPECT_LT(relative_error(conv.data(), bank.scan(u).data()), 1e-12);
}

TEST(LegsBank, InitialisationFollowsHippo) {
  std::mt19937_64 rng(30);
  LegsBank bank(2, 5, rng);
  EXPECT_EQ(bank.a().to_vector(), hippo_legs(5).to_vector());
  for (std::size_t n = 0; n < 5; ++n) EXPECT_DOUBLE_EQ(bank.b().at(1, n), std::sqrt(2.0 * n + 1));
  for (double v : bank.log_dt().data()) {
    EXPECT_GE(v, std::log(1e-3));
    EXPECT_LE(v, std::log(1e-1));
  }
  EXPECT_FALSE(bank.a().requires_grad());
  EXPECT_TRUE(bank.b().requires_grad());
}

TEST(LegsBank, ScanGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(31);
  LegsBank bank(2, 5, rng);
  Tensor u = random_tensor({2, 12}, rng, -1, 1, true);
  const Tensor w = random_tensor({2, 12}, rng);
  auto f = [&] { return dot(bank.scan(u), w); };
  auto scalar = [&] {
    NoGradScope ng;
    return f().item();
  };
  for (const Tensor& leaf : {u, bank.b(), bank.c(), bank.log_dt()}) {
    EXPECT_LT(relative_error(tape_gradient(f, leaf), numeric_gradient(scalar, leaf)), 1e-6);
  }
}

TEST(LegsBank, WrongInputShapeThrows) {
  std::mt19937_64 rng(32);
  LegsBank bank(2, 3, rng);
  EXPECT_THROW(bank.scan(Tensor::zeros({3, 4})), DimensionError);
  EXPECT_THROW(LegsBank(0, 3, rng), ConfigError);
}
