#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "spikes4/dsp.hpp"
#include "spikes4/error.hpp"
#include "spikes4/ops.hpp"
#include "test_util.hpp"

using namespace spikes4;
using namespace spikes4::dsp;
using spikes4::testing::random_vector;

namespace {

// Frame t of the padded signal transformed by a direct O(N²) DFT.
std::complex<double> direct_bin(const std::vector<double>& padded, const std::vector<double>& w,
                                std::size_t start, std::size_t f) {
  std::complex<double> acc = 0.0;
  const std::size_t n_len = w.size();
  for (std::size_t n = 0; n < n_len; ++n) {
    const double theta = -2.0 * std::numbers::pi * static_cast<double>(f * n) / static_cast<double>(n_len);
    acc += w[n] * padded[start + n] * std::polar(1.0, theta);
  }
  return acc;
}

double interior_relative_error(const std::vector<double>& x, const std::vector<double>& y,
                               std::size_t margin) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = margin; i + margin < x.size(); ++i) {
    num += (x[i] - y[i]) * (x[i] - y[i]);
    den += x[i] * x[i];
  }
  return std::sqrt(num / den);
}

}  // namespace

TEST(Window, SquaredOverlapAddIsConstantAtHalfOverlap) {
  StftConfig cfg;
  const auto w = cfg.window_samples();
  for (std::size_t n = 0; n < cfg.hop_length; ++n) {
    EXPECT_NEAR(w[n] * w[n] + w[n + cfg.hop_length] * w[n + cfg.hop_length], 1.0, 1e-14);
  }
}

TEST(Window, PlainHannAtHalfOverlapIsRejected) {
  StftConfig cfg;
  cfg.window = WindowKind::hann;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.hop_length = 128;  // quarter overlap: Σw² is constant for the Hann window
  EXPECT_NO_THROW(cfg.validate());
}

TEST(Window, InvalidLengthsAreRejected) {
  StftConfig cfg;
  cfg.window_length = 511;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.window_length = 512;
  cfg.hop_length = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Stft, MatchesDirectDft) {
  StftConfig cfg;
  cfg.window_length = 32;
  cfg.hop_length = 16;
  StftLayer layer(cfg);
  std::mt19937_64 rng(11);
  const auto x = random_vector(100, rng);
  const auto spec = layer.forward(x);
  const auto l = layer.layout(x.size());
  ASSERT_EQ(spec.frames, l.frames);
  std::vector<double> padded(l.padded_length, 0.0);
  std::copy(x.begin(), x.end(), padded.begin() + static_cast<std::ptrdiff_t>(l.left_pad));
  const auto w = cfg.window_samples();
  const double gain = layer.weights().analysis_gain;
  for (std::size_t t = 0; t < spec.frames; ++t) {
    for (std::size_t f = 0; f < spec.bins; ++f) {
      const auto ref = gain * direct_bin(padded, w, t * cfg.hop_length, f);
      EXPECT_NEAR(spec.real.at(t, f), ref.real(), 1e-12);
      EXPECT_NEAR(spec.imag.at(t, f), ref.imag(), 1e-12);
      EXPECT_NEAR(spec.magnitude.at(t, f), std::abs(ref), 1e-12);
    }
  }
}

TEST(Stft, DcRowOfAnalysisBasisIsTheWindow) {
  StftConfig cfg;
  const auto fw = build_fourier_weights(cfg);
  const auto w = cfg.window_samples();
  for (std::size_t n = 0; n < cfg.window_length; ++n) {
    EXPECT_DOUBLE_EQ(fw.analysis_cos.at(0, n), w[n]);
    EXPECT_EQ(fw.analysis_sin.at(0, n), 0.0);
  }
}

TEST(Stft, BinCentredSinusoidReadsItsAmplitude) {
  // Hann's spectrum spans three bins, so the negative-frequency image cannot leak.
  StftConfig cfg;
  cfg.window = WindowKind::hann;
  cfg.hop_length = 128;
  StftLayer layer(cfg);
  const std::size_t bin = 20;
  std::vector<double> x(16000);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = 0.5 * std::cos(2 * std::numbers::pi * bin * static_cast<double>(i) / cfg.window_length);
  }
  const auto spec = layer.forward(x);
  const std::size_t t = spec.frames / 2;
  EXPECT_NEAR(spec.magnitude.at(t, bin), 0.5, 1e-9);
}

TEST(Stft, ParsevalPerFrame) {
  StftConfig cfg;
  cfg.window_length = 64;
  cfg.hop_length = 32;
  StftLayer layer(cfg);
  std::mt19937_64 rng(12);
  const auto x = random_vector(500, rng);
  const auto spec = layer.forward(x);
  const auto l = layer.layout(x.size());
  std::vector<double> padded(l.padded_length, 0.0);
  std::copy(x.begin(), x.end(), padded.begin() + static_cast<std::ptrdiff_t>(l.left_pad));
  const auto w = cfg.window_samples();
  const double gain = layer.weights().analysis_gain;
  const double n_len = static_cast<double>(cfg.window_length);
  for (std::size_t t = 0; t < spec.frames; ++t) {
    double time_energy = 0.0;
    for (std::size_t n = 0; n < cfg.window_length; ++n) {
      const double v = w[n] * padded[t * cfg.hop_length + n];
      time_energy += v * v;
    }
    double freq_energy = 0.0;
    for (std::size_t f = 0; f < spec.bins; ++f) {
      const double c = (f == 0 || f == spec.bins - 1) ? 1.0 : 2.0;
      freq_energy += c * spec.magnitude.at(t, f) * spec.magnitude.at(t, f);
    }
    EXPECT_NEAR(freq_energy / (n_len * gain * gain), time_energy, 1e-10 * (1 + time_energy));
  }
}

TEST(Stft, PerfectReconstructionForVariousLengths) {
  StftLayer layer{StftConfig{}};
  std::mt19937_64 rng(13);
  for (std::size_t len : {512u, 777u, 4096u, 16000u}) {
    const auto x = random_vector(len, rng);
    const auto y = layer.inverse(layer.forward(x));
    ASSERT_EQ(y.size(), len);
    EXPECT_LT(interior_relative_error(x, y, 0), 1e-12) << len;
  }
}

TEST(Stft, QuarterOverlapHannAlsoReconstructs) {
  StftConfig cfg;
  cfg.window = WindowKind::hann;
  cfg.hop_length = 128;
  StftLayer layer(cfg);
  std::mt19937_64 rng(14);
  const auto x = random_vector(3000, rng);
  EXPECT_LT(interior_relative_error(x, layer.inverse(layer.forward(x)), 0), 1e-12);
}

TEST(Stft, EmptySignalIsRejected) {
  StftLayer layer{StftConfig{}};
  EXPECT_THROW(layer.forward(std::vector<double>{}), InputError);
}

TEST(Istft, GradientMatchesFiniteDifferences) {
  StftConfig cfg;
  cfg.window_length = 16;
  cfg.hop_length = 8;
  StftLayer layer(cfg);
  std::mt19937_64 rng(15);
  const auto x = random_vector(40, rng);
  const auto spec = layer.forward(x);
  Tensor re = spec.real.detach(true);
  Tensor im = spec.imag.detach(true);
  const auto probe = Tensor::from({40}, random_vector(40, rng));
  auto f = [&] { return dot(layer.inverse(re, im, 40), probe); };
  auto scalar = [&] {
    NoGradScope ng;
    return f().item();
  };
  for (Tensor leaf : {re, im}) {
    const auto g = spikes4::testing::tape_gradient(f, leaf);
    const auto n = spikes4::testing::numeric_gradient(scalar, leaf);
    EXPECT_LT(spikes4::testing::relative_error(g, n), 1e-7);
  }
}

TEST(ApplyMask, ScalesMagnitudeAndKeepsPhase) {
  StftLayer layer{StftConfig{}};
  std::mt19937_64 rng(16);
  const auto x = random_vector(2000, rng);
  const auto spec = layer.forward(x);
  std::vector<double> m(spec.magnitude.numel());
  std::uniform_real_distribution<double> u(0, 1);
  for (auto& v : m) v = u(rng);
  const auto out = apply_mask(spec, Tensor::from(spec.magnitude.shape(), m));
  for (std::size_t i = 0; i < m.size(); ++i) {
    EXPECT_NEAR(out.magnitude[i], m[i] * spec.magnitude[i], 1e-15);
    EXPECT_EQ(out.phase[i], spec.phase[i]);
  }
}

TEST(ApplyMask, UnitMaskIsIdentityAndOutOfRangeThrows) {
  StftLayer layer{StftConfig{}};
  std::mt19937_64 rng(17);
  const auto x = random_vector(1500, rng);
  const auto spec = layer.forward(x);
  const auto same = apply_mask(spec, Tensor::full(spec.magnitude.shape(), 1.0));
  EXPECT_EQ(same.real.to_vector(), spec.real.to_vector());
  EXPECT_THROW(apply_mask(spec, Tensor::full(spec.magnitude.shape(), 1.5)), ContractError);
  EXPECT_THROW(apply_mask(spec, Tensor::full({1, 1}, 0.5)), DimensionError);
}
