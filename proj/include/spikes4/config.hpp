#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include "spikes4/data.hpp"
#include "spikes4/model.hpp"
#include "spikes4/optim.hpp"

namespace spikes4::config {

inline constexpr int kSchemaVersion = 1;

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 16;
  double lambda = 0.001;
  std::size_t workers = 0;  // 0 = one per hardware thread

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

/// Everything a command needs. Serialized as JSON:
///   {
///     "schema_version": 1,
///     "seed": 1234,
///     "data_dir": "data",
///     "output_dir": "runs/default",
///     "model": {"n_layers": 4, "hidden_size": 256, "latent_size": 128, ...},
///     "optim": {"lr": 0.001, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8},
///     "train": {"epochs": 50, "batch_size": 16, "lambda": 0.001, "workers": 0},
///     "data":  {"n_train": 200, "n_val": 50, "n_test": 0, "duration_s": 1.0,
///               "sample_rate": 16000, "snr_min_db": 0, "snr_max_db": 10,
///               "clean_kind": "harmonic_voice", "seed": 1234}
///   }
/// Every key is optional and defaults as above; unknown keys are rejected.
struct RunConfig {
  std::uint64_t seed = 1234;  // model initialization and batch shuffling
  std::filesystem::path data_dir = "data";
  std::filesystem::path output_dir = "runs/default";
  model::ModelConfig model;
  optim::RAdamConfig optim;
  TrainConfig train;
  data::DatasetSpec data;

  void validate() const;
};

RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::filesystem::path& path);
std::string to_json(const RunConfig& cfg, bool include_paths = true);

/// The model section alone, used to echo and compare checkpoint configs.
std::string model_to_json(const model::ModelConfig& cfg);
model::ModelConfig model_from_json(const std::string& json_text);

}  // namespace spikes4::config
