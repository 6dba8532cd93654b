#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace spikes4::data {

inline constexpr double kDefaultSampleRate = 16000.0;

struct AudioClip {
  std::vector<double> samples;  // in [−1, 1]
  double sample_rate = kDefaultSampleRate;

  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
};

// --- WAV -------------------------------------------------------------------

/// Reads a 16-bit PCM mono RIFF/WAVE file. Throws FormatError naming the
/// offending field for anything else, IoError when the file cannot be read.
AudioClip read_wav(const std::filesystem::path& path);

/// Writes 16-bit PCM mono. Samples are clamped to [−1, 1] and rounded to the
/// nearest step of 2⁻¹⁵.
void write_wav(const AudioClip& clip, const std::filesystem::path& path);

std::vector<std::uint8_t> encode_wav(const AudioClip& clip);
AudioClip decode_wav(const std::vector<std::uint8_t>& bytes);

// --- Synthesis -------------------------------------------------------------

enum class CleanKind { tone, chirp, harmonic_voice };
enum class NoiseKind { white, pink };

const char* to_string(CleanKind kind);
CleanKind parse_clean_kind(const std::string& text);
const char* to_string(NoiseKind kind);

/// Deterministic clean stand-in signal, peak-normalized to 0.9.
///   tone: 440 Hz sinusoid
///   chirp: linear sweep between two seed-chosen frequencies
///   harmonic_voice: 3–6 harmonics of a drifting, vibrato-modulated pitch
///     under a syllabic amplitude envelope, harmonics kept below Nyquist
AudioClip synth_clean(CleanKind kind, double duration_s, std::uint64_t seed,
                      double sample_rate = kDefaultSampleRate);

AudioClip synth_noise(NoiseKind kind, double duration_s, std::uint64_t seed,
                      double sample_rate = kDefaultSampleRate);

struct MixtureTriplet {
  AudioClip clean;
  AudioClip noise;  // the scaled noise actually added
  AudioClip noisy;
  double snr_db = 0.0;
};

/// noisy = clean + g·noise with 10·log₁₀(‖clean‖²/‖g·noise‖²) = snr_db. The
/// noise is looped or truncated to the clean length; snr_db = +∞ yields a
/// silent noise track. If the mixture peaks above 1 the whole triplet is
/// scaled by the same gain. Throws InputError for a silent clean clip.
MixtureTriplet mix(const AudioClip& clean, const AudioClip& noise, double snr_db);

double energy(const std::vector<double>& x);
double measured_snr_db(const std::vector<double>& clean, const std::vector<double>& noise);

// --- Manifest --------------------------------------------------------------

enum class Split { train, val, test };
const char* to_string(Split split);
Split parse_split(const std::string& text);

struct ManifestRecord {
  std::string id;
  Split split = Split::train;
  std::string clean;  // paths relative to the manifest directory
  std::string noise;
  std::string noisy;
  double duration = 0.0;
  double snr_db = 0.0;
};

/// Tab-separated text, first line "# spikes4-manifest v1", second line the
/// column header, then one record per line.
struct Manifest {
  std::filesystem::path root;  // directory the relative paths resolve against
  std::vector<ManifestRecord> records;

  std::vector<ManifestRecord> split(Split s) const;
  std::filesystem::path resolve(const std::string& relative) const { return root / relative; }
};

Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);

struct DatasetSpec {
  std::size_t n_train = 200;
  std::size_t n_val = 50;
  std::size_t n_test = 0;
  double duration_s = 1.0;
  double sample_rate = kDefaultSampleRate;
  double snr_min_db = 0.0;
  double snr_max_db = 10.0;
  CleanKind clean_kind = CleanKind::harmonic_voice;
  std::uint64_t seed = 1234;

  std::size_t total() const { return n_train + n_val + n_test; }
  void validate() const;
};

/// Deterministic triplet i of a dataset (noise alternates white/pink).
MixtureTriplet make_triplet(const DatasetSpec& spec, std::size_t index);

/// Writes every triplet as WAV files plus manifest.tsv under `dir`.
Manifest generate_dataset(const DatasetSpec& spec, const std::filesystem::path& dir);

}  // namespace spikes4::data
