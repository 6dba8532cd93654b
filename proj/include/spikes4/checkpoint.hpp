#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "spikes4/model.hpp"
#include "spikes4/optim.hpp"

namespace spikes4::checkpoint {

inline constexpr std::uint32_t kFormatVersion = 1;

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_si_snr = 0.0;  // mean SI-SNR of enhanced validation clips, dB
  bool operator==(const EpochRecord&) const = default;
};

struct TrainingState {
  std::size_t epochs_done = 0;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  std::vector<EpochRecord> history;
};

struct ParamBlob {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

/// Binary layout (little-endian):
///   "SPS4CKPT" | u32 version | u64 payload size | payload | u32 CRC-32 of payload
/// payload:
///   u32 n + n bytes of JSON metadata (model config echo, run config echo,
///     training state)
///   u32 parameter count, then per parameter:
///     u32 name length, name bytes, u32 rank, u64 dims…, f64 values (row-major)
///   u8 optimizer flag; when set: u64 step, then per parameter the first and
///     second moment vectors (f64, same order and sizes as the parameters)
struct Checkpoint {
  model::ModelConfig model;
  std::string run_config;  // JSON echo of the training configuration, may be empty
  TrainingState state;
  std::vector<ParamBlob> params;
  bool has_optimizer = false;
  std::uint64_t optimizer_step = 0;
  std::vector<std::vector<double>> first_moments;
  std::vector<std::vector<double>> second_moments;
};

Checkpoint capture(const model::SpikingS4Model& model, const optim::RAdam* optimizer,
                   const std::string& run_config, const TrainingState& state);

/// Copies parameter values into the model. Throws FormatError when the
/// checkpoint's model config differs from the model's or when names/shapes
/// do not line up.
void restore(const Checkpoint& ckpt, model::SpikingS4Model& model);
void restore(const Checkpoint& ckpt, optim::RAdam& optimizer);

std::vector<std::uint8_t> serialize(const Checkpoint& ckpt);
Checkpoint deserialize(const std::vector<std::uint8_t>& bytes);

/// Writes through a temporary file and a rename so a crash never leaves a
/// truncated checkpoint behind.
void save(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load(const std::filesystem::path& path);

/// Builds a model from a checkpoint's config echo and restores its weights.
model::SpikingS4Model load_model(const std::filesystem::path& path);

}  // namespace spikes4::checkpoint
