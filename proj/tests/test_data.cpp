#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <set>

#include "spikes4/data.hpp"
#include "spikes4/error.hpp"
#include "test_util.hpp"

using namespace spikes4;
using namespace spikes4::data;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("spikes4_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

void put16(std::vector<std::uint8_t>& b, std::uint16_t v) {
  b.push_back(v & 0xff);
  b.push_back(v >> 8);
}
void put32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back((v >> (8 * i)) & 0xff);
}
void tag(std::vector<std::uint8_t>& b, const char* t) { b.insert(b.end(), t, t + 4); }

std::vector<std::uint8_t> wav_header(std::uint16_t format, std::uint16_t channels,
                                     std::uint16_t bits, std::uint32_t data_bytes) {
  std::vector<std::uint8_t> b;
  tag(b, "RIFF");
  put32(b, 36 + data_bytes);
  tag(b, "WAVE");
  tag(b, "fmt ");
  put32(b, 16);
  put16(b, format);
  put16(b, channels);
  put32(b, 16000);
  put32(b, 16000 * channels * bits / 8);
  put16(b, channels * bits / 8);
  put16(b, bits);
  tag(b, "data");
  put32(b, data_bytes);
  b.resize(b.size() + data_bytes, 0);
  return b;
}

double dft_magnitude(const std::vector<double>& x, double freq, double rate) {
  std::complex<double> acc = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    acc += x[i] * std::polar(1.0, -2 * std::numbers::pi * freq * static_cast<double>(i) / rate);
  }
  return std::abs(acc);
}

std::string expect_format_error(const std::vector<std::uint8_t>& bytes) {
  try {
    decode_wav(bytes);
  } catch (const FormatError& e) {
    return e.what();
  }
  ADD_FAILURE() << "expected FormatError";
  return "";
}

}  // namespace

TEST(Wav, RoundTripWithinQuantisationBound) {
  std::mt19937_64 rng(61);
  AudioClip clip{spikes4::testing::random_vector(4000, rng), 16000};
  clip.samples.push_back(1.0);
  clip.samples.push_back(-1.0);
  const auto dir = temp_dir("wav");
  write_wav(clip, dir / "a.wav");
  const auto back = read_wav(dir / "a.wav");
  ASSERT_EQ(back.samples.size(), clip.samples.size());
  EXPECT_EQ(back.sample_rate, 16000.0);
  EXPECT_LE(spikes4::testing::max_abs_diff(back.samples, clip.samples), std::ldexp(1.0, -15));
}

TEST(Wav, ZeroLengthDataGivesEmptyClip) {
  EXPECT_TRUE(decode_wav(wav_header(1, 1, 16, 0)).samples.empty());
}

TEST(Wav, RejectsUnsupportedEncodings) {
  EXPECT_NE(expect_format_error(wav_header(1, 1, 24, 6)).find("bits per sample 24"), std::string::npos);
  EXPECT_NE(expect_format_error(wav_header(1, 2, 16, 8)).find("channel count 2"), std::string::npos);
  EXPECT_NE(expect_format_error(wav_header(3, 1, 32, 8)).find("audio format 3"), std::string::npos);
  auto bad = wav_header(1, 1, 16, 4);
  bad[0] = 'X';
  EXPECT_NE(expect_format_error(bad).find("RIFF"), std::string::npos);
  auto truncated = wav_header(1, 1, 16, 8);
  truncated.resize(truncated.size() - 3);
  expect_format_error(truncated);
}

TEST(Wav, SkipsUnknownChunks) {
  auto b = wav_header(1, 1, 16, 2);
  std::vector<std::uint8_t> list;
  tag(list, "LIST");
  put32(list, 3);
  list.insert(list.end(), {1, 2, 3, 0});  // odd size plus pad byte
  b.insert(b.begin() + 36, list.begin(), list.end());
  b[b.size() - 2] = 0x00;
  b[b.size() - 1] = 0x40;  // 16384 → 0.5
  const auto clip = decode_wav(b);
  ASSERT_EQ(clip.samples.size(), 1u);
  EXPECT_DOUBLE_EQ(clip.samples[0], 0.5);
}

TEST(Wav, MissingFileIsIoError) {
  EXPECT_THROW(read_wav("/nonexistent/nope.wav"), IoError);
}

TEST(Synth, ToneIsPeakNormalisedAndConcentratedAt440) {
  const auto tone = synth_clean(CleanKind::tone, 1.0, 0);
  ASSERT_EQ(tone.samples.size(), 16000u);
  double peak = 0;
  for (double v : tone.samples) peak = std::max(peak, std::abs(v));
  EXPECT_NEAR(peak, 0.9, 1e-12);
  const double at440 = dft_magnitude(tone.samples, 440, 16000);
  for (double f : {100.0, 430.0, 450.0, 880.0, 3000.0}) {
    EXPECT_LT(dft_magnitude(tone.samples, f, 16000), 1e-6 * at440) << f;
  }
}

TEST(Synth, SameSeedIsBitIdentical) {
  for (auto kind : {CleanKind::tone, CleanKind::chirp, CleanKind::harmonic_voice}) {
    EXPECT_EQ(synth_clean(kind, 0.5, 9).samples, synth_clean(kind, 0.5, 9).samples);
  }
  EXPECT_EQ(synth_noise(NoiseKind::pink, 0.5, 3).samples, synth_noise(NoiseKind::pink, 0.5, 3).samples);
  EXPECT_NE(synth_clean(CleanKind::harmonic_voice, 0.5, 1).samples,
            synth_clean(CleanKind::harmonic_voice, 0.5, 2).samples);
}

TEST(Synth, HarmonicVoiceStaysBelowNyquistBand) {
  const auto v = synth_clean(CleanKind::harmonic_voice, 0.25, 5);
  double low = 0;
  for (double f = 80; f < 1500; f += 20) low = std::max(low, dft_magnitude(v.samples, f, 16000));
  for (double f : {7300.0, 7600.0, 7900.0}) EXPECT_LT(dft_magnitude(v.samples, f, 16000), 1e-2 * low);
}

TEST(Synth, NonPositiveDurationRejected) {
  EXPECT_THROW(synth_clean(CleanKind::tone, 0.0, 1), InputError);
}

TEST(Mix, MeasuredSnrMatchesRequest) {
  std::mt19937_64 rng(62);
  std::uniform_real_distribution<double> snr(-5, 20);
  for (int trial = 0; trial < 20; ++trial) {
    const auto clean = synth_clean(CleanKind::harmonic_voice, 0.3, rng());
    const auto noise = synth_noise(trial % 2 ? NoiseKind::pink : NoiseKind::white, 0.2, rng());
    const double target = snr(rng);
    const auto t = mix(clean, noise, target);
    EXPECT_NEAR(measured_snr_db(t.clean.samples, t.noise.samples), target, 0.01);
    double peak = 0;
    for (std::size_t i = 0; i < t.noisy.samples.size(); ++i) {
      EXPECT_NEAR(t.noisy.samples[i], t.clean.samples[i] + t.noise.samples[i], 1e-15);
      peak = std::max(peak, std::abs(t.noisy.samples[i]));
    }
    EXPECT_LE(peak, 1.0);
    EXPECT_EQ(t.noisy.samples.size(), clean.samples.size());
  }
}

TEST(Mix, ZeroDbBalancesEnergies) {
  const auto t = mix(synth_clean(CleanKind::chirp, 0.5, 1), synth_noise(NoiseKind::white, 0.5, 2), 0.0);
  EXPECT_NEAR(measured_snr_db(t.clean.samples, t.noise.samples), 0.0, 0.01);
}

TEST(Mix, InfiniteSnrLeavesCleanUntouched) {
  const auto clean = synth_clean(CleanKind::tone, 0.2, 0);
  const auto t = mix(clean, synth_noise(NoiseKind::white, 0.2, 1), std::numeric_limits<double>::infinity());
  EXPECT_EQ(t.noisy.samples, clean.samples);
}

TEST(Mix, SilentCleanThrows) {
  AudioClip silent{std::vector<double>(100, 0.0), 16000};
  EXPECT_THROW(mix(silent, synth_noise(NoiseKind::white, 0.1, 1), 5.0), InputError);
}

TEST(Manifest, RoundTripAndValidation) {
  const auto dir = temp_dir("manifest");
  Manifest m;
  m.records.push_back({"a", Split::train, "audio/a_c.wav", "audio/a_n.wav", "audio/a_y.wav", 1.0, 3.25});
  m.records.push_back({"b", Split::val, "audio/b_c.wav", "audio/b_n.wav", "audio/b_y.wav", 0.5, -1.0});
  write_manifest(m, dir / "manifest.tsv");
  const auto back = read_manifest(dir / "manifest.tsv");
  ASSERT_EQ(back.records.size(), 2u);
  EXPECT_EQ(back.records[1].id, "b");
  EXPECT_EQ(back.records[1].split, Split::val);
  EXPECT_DOUBLE_EQ(back.records[0].snr_db, 3.25);
  EXPECT_EQ(back.resolve("x.wav"), dir / "x.wav");

  std::ofstream(dir / "bad.tsv") << "id\tsplit\n";
  EXPECT_THROW(read_manifest(dir / "bad.tsv"), FormatError);
  m.records.push_back(m.records[0]);
  write_manifest(m, dir / "dup.tsv");
  EXPECT_THROW(read_manifest(dir / "dup.tsv"), FormatError);
  EXPECT_THROW(parse_split("holdout"), FormatError);
}

TEST(Dataset, GenerationIsDeterministicAndSplitsDisjoint) {
  DatasetSpec spec;
  spec.n_train = 4;
  spec.n_val = 2;
  spec.n_test = 1;
  spec.duration_s = 0.1;
  const auto a = generate_dataset(spec, temp_dir("ds_a"));
  const auto b = generate_dataset(spec, temp_dir("ds_b"));
  ASSERT_EQ(a.records.size(), 7u);
  EXPECT_EQ(a.split(Split::train).size(), 4u);
  EXPECT_EQ(a.split(Split::val).size(), 2u);
  EXPECT_EQ(a.split(Split::test).size(), 1u);
  std::set<std::string> ids;
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    EXPECT_TRUE(ids.insert(a.records[i].id).second);
    const auto x = read_wav(a.resolve(a.records[i].noisy));
    const auto y = read_wav(b.resolve(b.records[i].noisy));
    EXPECT_EQ(x.samples, y.samples);
    const auto c = read_wav(a.resolve(a.records[i].clean));
    const auto n = read_wav(a.resolve(a.records[i].noise));
    EXPECT_NEAR(measured_snr_db(c.samples, n.samples), a.records[i].snr_db, 0.05);
    EXPECT_GE(a.records[i].snr_db, 0.0);
    EXPECT_LE(a.records[i].snr_db, 10.0);
  }
  // Triplet i depends only on (seed, i), so extra test clips leave the rest unchanged.
  DatasetSpec more = spec;
  more.n_test = 5;
  EXPECT_EQ(make_triplet(spec, 3).noisy.samples, make_triplet(more, 3).noisy.samples);
}

TEST(Dataset, ZeroCountRejected) {
  DatasetSpec spec;
  spec.n_train = spec.n_val = spec.n_test = 0;
  EXPECT_THROW(spec.validate(), ConfigError);
}
