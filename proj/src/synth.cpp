#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "spikes4/data.hpp"
#include "spikes4/error.hpp"

namespace spikes4::data {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream));
}

std::size_t sample_count(double duration_s, double sample_rate) {
  if (!(duration_s > 0)) throw InputError("duration must be positive");
  if (!(sample_rate > 0)) throw InputError("sample rate must be positive");
  return static_cast<std::size_t>(std::llround(duration_s * sample_rate));
}

void peak_normalize(std::vector<double>& x, double peak) {
  double m = 0.0;
  for (double v : x) m = std::max(m, std::abs(v));
  if (m > 0) {
    for (auto& v : x) v *= peak / m;
  }
}

constexpr double kTwoPi = 2.0 * std::numbers::pi;

}  // namespace

const char* to_string(CleanKind kind) {
  switch (kind) {
    case CleanKind::tone: return "tone";
    case CleanKind::chirp: return "chirp";
    case CleanKind::harmonic_voice: return "harmonic_voice";
  }
  return "unknown";
}

CleanKind parse_clean_kind(const std::string& text) {
  if (text == "tone") return CleanKind::tone;
  if (text == "chirp") return CleanKind::chirp;
  if (text == "harmonic_voice") return CleanKind::harmonic_voice;
  throw ConfigError("unknown clean kind '" + text + "'");
}

const char* to_string(NoiseKind kind) { return kind == NoiseKind::white ? "white" : "pink"; }

AudioClip synth_clean(CleanKind kind, double duration_s, std::uint64_t seed, double sample_rate) {
  const std::size_t n = sample_count(duration_s, sample_rate);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  AudioClip clip;
  clip.sample_rate = sample_rate;
  clip.samples.assign(n, 0.0);
  auto& x = clip.samples;

  switch (kind) {
    case CleanKind::tone: {
      for (std::size_t i = 0; i < n; ++i) x[i] = std::sin(kTwoPi * 440.0 * static_cast<double>(i) / sample_rate);
      break;
    }
    case CleanKind::chirp: {
      const double f0 = 200.0 + 400.0 * unit(rng);
      const double f1 = std::min(1500.0 + 2500.0 * unit(rng), 0.45 * sample_rate);
      const double sweep = (f1 - f0) / duration_s;
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / sample_rate;
        x[i] = std::sin(kTwoPi * (f0 * t + 0.5 * sweep * t * t));
      }
      break;
    }
    case CleanKind::harmonic_voice: {
      const double f0_base = 100.0 + 120.0 * unit(rng);
      const double drift_rate = 0.3 + 1.2 * unit(rng);
      const double drift_phase = kTwoPi * unit(rng);
      const double vibrato_rate = 5.0 + 1.5 * unit(rng);
      const int harmonics = 3 + static_cast<int>(unit(rng) * 4.0);  // 3..6
      std::vector<double> amp(static_cast<std::size_t>(harmonics));
      for (int k = 0; k < harmonics; ++k) amp[static_cast<std::size_t>(k)] = (0.7 + 0.6 * unit(rng)) / (k + 1);

      // Syllables: raised-cosine bumps with pauses between them.
      const int syllables = 2 + static_cast<int>(unit(rng) * 3.0);
      std::vector<double> centre(static_cast<std::size_t>(syllables)), width(static_cast<std::size_t>(syllables));
      for (int s = 0; s < syllables; ++s) {
        centre[static_cast<std::size_t>(s)] = duration_s * (s + 0.3 + 0.4 * unit(rng)) / syllables;
        width[static_cast<std::size_t>(s)] = duration_s * (0.5 + 0.4 * unit(rng)) / syllables;
      }

      std::vector<double> phase(static_cast<std::size_t>(harmonics), 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / sample_rate;
        const double f0 = f0_base * (1.0 + 0.15 * std::sin(kTwoPi * drift_rate * t + drift_phase)) *
                          (1.0 + 0.01 * std::sin(kTwoPi * vibrato_rate * t));
        double env = 0.0;
        for (int s = 0; s < syllables; ++s) {
          const double d = (t - centre[static_cast<std::size_t>(s)]) / width[static_cast<std::size_t>(s)];
          if (std::abs(d) < 0.5) env = std::max(env, 0.5 + 0.5 * std::cos(kTwoPi * d));
        }
        double v = 0.0;
        for (int k = 0; k < harmonics; ++k) {
          const auto kk = static_cast<std::size_t>(k);
          const double fk = (k + 1) * f0;
          phase[kk] += kTwoPi * fk / sample_rate;
          if (fk < 0.45 * sample_rate) v += amp[kk] * std::sin(phase[kk]);
        }
        x[i] = env * v;
      }
      break;
    }
  }
  peak_normalize(x, 0.9);
  return clip;
}

AudioClip synth_noise(NoiseKind kind, double duration_s, std::uint64_t seed, double sample_rate) {
  const std::size_t n = sample_count(duration_s, sample_rate);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  AudioClip clip;
  clip.sample_rate = sample_rate;
  clip.samples.resize(n);
  if (kind == NoiseKind::white) {
    for (auto& v : clip.samples) v = normal(rng);
  } else {
    // Paul Kellet's refined pink filter.
    double b0 = 0, b1 = 0, b2 = 0, b3 = 0, b4 = 0, b5 = 0, b6 = 0;
    for (auto& v : clip.samples) {
      const double w = normal(rng);
      b0 = 0.99886 * b0 + w * 0.0555179;
      b1 = 0.99332 * b1 + w * 0.0750759;
      b2 = 0.96900 * b2 + w * 0.1538520;
      b3 = 0.86650 * b3 + w * 0.3104856;
      b4 = 0.55000 * b4 + w * 0.5329522;
      b5 = -0.7616 * b5 - w * 0.0168980;
      v = b0 + b1 + b2 + b3 + b4 + b5 + b6 + w * 0.5362;
      b6 = w * 0.115926;
    }
  }
  const double rms = std::sqrt(energy(clip.samples) / static_cast<double>(n));
  if (rms > 0) {
    for (auto& v : clip.samples) v /= rms;
  }
  return clip;
}

double energy(const std::vector<double>& x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return e;
}

double measured_snr_db(const std::vector<double>& clean, const std::vector<double>& noise) {
  return 10.0 * std::log10(energy(clean) / energy(noise));
}

MixtureTriplet mix(const AudioClip& clean, const AudioClip& noise, double snr_db) {
  const double ec = energy(clean.samples);
  if (clean.samples.empty() || ec == 0.0) throw InputError("mix: clean clip is silent");
  const std::size_t n = clean.samples.size();

  MixtureTriplet t;
  t.snr_db = snr_db;
  t.clean = clean;
  t.noise.sample_rate = clean.sample_rate;
  t.noise.samples.assign(n, 0.0);
  if (!(std::isinf(snr_db) && snr_db > 0)) {
    if (std::isnan(snr_db)) throw InputError("mix: SNR is NaN");
    if (noise.samples.empty() || energy(noise.samples) == 0.0) {
      throw InputError("mix: noise clip is silent");
    }
    for (std::size_t i = 0; i < n; ++i) t.noise.samples[i] = noise.samples[i % noise.samples.size()];
    const double en = energy(t.noise.samples);
    const double gain = std::sqrt(ec / (en * std::pow(10.0, snr_db / 10.0)));
    for (auto& v : t.noise.samples) v *= gain;
  }
  t.noisy.sample_rate = clean.sample_rate;
  t.noisy.samples.resize(n);
  double peak = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    t.noisy.samples[i] = t.clean.samples[i] + t.noise.samples[i];
    peak = std::max(peak, std::abs(t.noisy.samples[i]));
  }
  if (peak > 1.0) {
    const double g = 0.99 / peak;
    for (auto* track : {&t.clean, &t.noise, &t.noisy}) {
      for (auto& v : track->samples) v *= g;
    }
  }
  return t;
}

void DatasetSpec::validate() const {
  if (total() == 0) throw ConfigError("dataset must contain at least one triplet");
  if (!(duration_s > 0)) throw ConfigError("duration_s must be positive");
  if (!(sample_rate > 0)) throw ConfigError("sample_rate must be positive");
  if (!(snr_min_db <= snr_max_db)) throw ConfigError("snr_min_db must not exceed snr_max_db");
}

MixtureTriplet make_triplet(const DatasetSpec& spec, std::size_t index) {
  const auto i = static_cast<std::uint64_t>(index);
  const AudioClip clean = synth_clean(spec.clean_kind, spec.duration_s, derive_seed(spec.seed, 3 * i),
                                      spec.sample_rate);
  const NoiseKind nk = index % 2 == 0 ? NoiseKind::white : NoiseKind::pink;
  const AudioClip noise = synth_noise(nk, spec.duration_s, derive_seed(spec.seed, 3 * i + 1),
                                      spec.sample_rate);
  std::mt19937_64 rng(derive_seed(spec.seed, 3 * i + 2));
  std::uniform_real_distribution<double> snr(spec.snr_min_db, spec.snr_max_db);
  const double snr_db = spec.snr_min_db == spec.snr_max_db ? spec.snr_min_db : snr(rng);
  return mix(clean, noise, snr_db);
}

}  // namespace spikes4::data
