#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "spikes4/checkpoint.hpp"
#include "spikes4/config.hpp"
#include "spikes4/data.hpp"
#include "spikes4/dsp.hpp"
#include "spikes4/model.hpp"

namespace spikes4::trainer {

/// Precomputed per-clip tensors; the STFT weights are frozen, so features
/// and target masks never change during training.
struct Example {
  std::string id;
  dsp::Spectrogram noisy;
  Tensor target_mask;
  Tensor clean;  // reference waveform
  std::vector<double> noisy_samples;
};

std::vector<Example> prepare(const data::Manifest& manifest, data::Split split,
                             const dsp::StftLayer& stft);
Example prepare(const std::string& id, const std::vector<double>& clean,
                const std::vector<double>& noisy, const dsp::StftLayer& stft);

struct StepResult {
  double loss = 0.0;  // batch-mean total loss
};

/// One optimizer update on a batch: per-item forward/backward (in parallel
/// when workers > 1), gradients reduced in batch order, then RAdam. Throws
/// NumericalError on a non-finite loss before touching the parameters.
StepResult train_step(model::SpikingS4Model& model, optim::RAdam& optimizer,
                      const std::vector<const Example*>& batch, double lambda,
                      std::size_t workers);

struct Evaluation {
  double loss = 0.0;          // mean total loss
  double si_snr = 0.0;        // mean SI-SNR of enhanced clips
  double si_snr_noisy = 0.0;  // mean SI-SNR of the unprocessed mixtures
};

Evaluation evaluate(const model::SpikingS4Model& model, const std::vector<Example>& examples,
                    double lambda, std::size_t workers);

struct TrainOptions {
  config::RunConfig config;
  std::filesystem::path data_dir;
  std::filesystem::path output_dir;
  bool resume = false;  // continue from output_dir/last.ckpt
  std::ostream* log = nullptr;
};

struct TrainResult {
  std::vector<checkpoint::EpochRecord> history;
  std::filesystem::path last_checkpoint;
  std::filesystem::path best_checkpoint;
};

/// Trains for config.train.epochs epochs, writing last.ckpt, best.ckpt and
/// loss_curve.tsv under the output directory after every epoch.
TrainResult train(const TrainOptions& options);

struct UtteranceScore {
  std::string id;
  double si_snr_noisy = 0.0;
  double si_snr_enhanced = 0.0;
  double delta() const { return si_snr_enhanced - si_snr_noisy; }
};

struct EvalReport {
  std::vector<UtteranceScore> records;
  double mean_noisy = 0.0;
  double mean_enhanced = 0.0;
  double mean_delta = 0.0;
  double std_delta = 0.0;
};

/// Per-utterance SI-SNR on one split. Throws InputError for an empty split.
EvalReport evaluate_split(const model::SpikingS4Model& model, const data::Manifest& manifest,
                          data::Split split, bool identity_mask, std::size_t workers);

EvalReport summarize(std::vector<UtteranceScore> records);

/// Line-oriented report: a header, one tab-separated record per utterance,
/// then `# mean` and `# std` summary lines.
void write_report(const EvalReport& report, std::ostream& out);

std::size_t resolve_workers(std::size_t requested);

/// Runs fn(i) for i in [0, count) on up to `workers` threads; the first
/// exception thrown is rethrown after all threads join.
void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace spikes4::trainer
