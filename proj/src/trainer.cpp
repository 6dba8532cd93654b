#include "spikes4/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

#include "spikes4/error.hpp"
#include "spikes4/objective.hpp"
#include "spikes4/ops.hpp"

namespace spikes4::trainer {

namespace {

std::uint64_t epoch_seed(std::uint64_t seed, std::size_t epoch) {
  std::uint64_t x = seed + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(epoch) + 1);
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

void write_loss_curve(const std::vector<checkpoint::EpochRecord>& history,
                      const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write loss curve '" + path.string() + "'");
  out << "epoch\ttrain_loss\tval_loss\tval_si_snr_db\n";
  char line[160];
  for (const auto& r : history) {
    std::snprintf(line, sizeof line, "%zu\t%.10g\t%.10g\t%.10g\n", r.epoch, r.train_loss,
                  r.val_loss, r.val_si_snr);
    out << line;
  }
}

}  // namespace

std::size_t resolve_workers(std::size_t requested) {
  if (requested > 0) return requested;
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t count, std::size_t workers,
                  const std::function<void(std::size_t)>& fn) {
  if (workers <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first;
  std::mutex mu;
  auto run = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!first) first = std::current_exception();
        next = count;
      }
    }
  };
  std::vector<std::thread> pool;
  const std::size_t n = std::min(workers, count);
  pool.reserve(n);
  for (std::size_t t = 0; t < n; ++t) pool.emplace_back(run);
  for (auto& th : pool) th.join();
  if (first) std::rethrow_exception(first);
}

Example prepare(const std::string& id, const std::vector<double>& clean,
                const std::vector<double>& noisy, const dsp::StftLayer& stft) {
  if (clean.size() != noisy.size()) {
    throw InputError(id + ": clean has " + std::to_string(clean.size()) + " samples, noisy has " +
                     std::to_string(noisy.size()));
  }
  NoGradScope no_grad;
  Example ex;
  ex.id = id;
  ex.noisy = stft.forward(noisy);
  const dsp::Spectrogram c = stft.forward(clean);
  ex.target_mask = model::ideal_mask(c.magnitude, ex.noisy.magnitude);
  ex.clean = Tensor::from({clean.size()}, clean);
  ex.noisy_samples = noisy;
  return ex;
}

std::vector<Example> prepare(const data::Manifest& manifest, data::Split split,
                             const dsp::StftLayer& stft) {
  std::vector<Example> out;
  for (const auto& r : manifest.split(split)) {
    const auto clean = data::read_wav(manifest.resolve(r.clean));
    const auto noisy = data::read_wav(manifest.resolve(r.noisy));
    if (clean.sample_rate != stft.config().sample_rate || noisy.sample_rate != stft.config().sample_rate) {
      throw InputError(r.id + ": sample rate differs from the model's " +
                       std::to_string(stft.config().sample_rate) + " Hz");
    }
    out.push_back(prepare(r.id, clean.samples, noisy.samples, stft));
  }
  return out;
}

StepResult train_step(model::SpikingS4Model& model, optim::RAdam& optimizer,
                      const std::vector<const Example*>& batch, double lambda,
                      std::size_t workers) {
  if (batch.empty()) throw InputError("train_step on an empty batch");
  const bool conv = model.config().mode == model::SsmMode::convolution;
  const double inv_batch = 1.0 / static_cast<double>(batch.size());

  // Kernels are shared by every item, so they are built once on a main tape
  // and handed to the items as detached leaves.
  Tape main;
  std::vector<Tensor> kernels, kernel_leaves;
  if (conv) {
    std::size_t frames = 0;
    for (const auto* ex : batch) frames = std::max(frames, ex->noisy.frames);
    TapeScope scope(main);
    kernels = model.ssm_kernels(frames);
    for (const auto& k : kernels) kernel_leaves.push_back(k.detach(true));
  }

  std::vector<Gradients> grads(batch.size());
  std::vector<double> losses(batch.size());
  parallel_for(batch.size(), workers, [&](std::size_t i) {
    const Example& ex = *batch[i];
    Tape tape;
    TapeScope scope(tape);
    const auto fr = model.forward(ex.noisy, conv ? &kernel_leaves : nullptr);
    const auto report = objective::total_loss(fr.waveform, ex.clean, fr.mask, ex.target_mask, lambda);
    losses[i] = report.total.item();
    grads[i] = tape.gradients(scale(report.total, inv_batch));
  });

  StepResult result;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (!std::isfinite(losses[i])) {
      throw NumericalError("non-finite loss on clip '" + batch[i]->id + "'");
    }
    result.loss += losses[i] * inv_batch;
  }

  // Reduce in batch order so the sum does not depend on thread scheduling.
  optimizer.zero_grads();
  for (const auto& p : optimizer.params()) {
    std::vector<double> sum(p.tensor.numel(), 0.0);
    for (const auto& g : grads) {
      if (const auto* v = g.find(p.tensor)) {
        for (std::size_t j = 0; j < sum.size(); ++j) sum[j] += (*v)[j];
      }
    }
    Tensor t = p.tensor;
    t.accumulate_grad(sum);
  }
  if (conv) {
    std::vector<std::vector<double>> seeds;
    for (const auto& leaf : kernel_leaves) {
      std::vector<double> sum(leaf.numel(), 0.0);
      for (const auto& g : grads) {
        if (const auto* v = g.find(leaf)) {
          for (std::size_t j = 0; j < sum.size(); ++j) sum[j] += (*v)[j];
        }
      }
      seeds.push_back(std::move(sum));
    }
    const Gradients kg = main.gradients(kernels, seeds);
    for (const auto& p : optimizer.params()) {
      if (const auto* v = kg.find(p.tensor)) {
        Tensor t = p.tensor;
        t.accumulate_grad(*v);
      }
    }
  }
  optimizer.step();
  return result;
}

Evaluation evaluate(const model::SpikingS4Model& model, const std::vector<Example>& examples,
                    double lambda, std::size_t workers) {
  if (examples.empty()) throw InputError("evaluate on an empty set");
  std::vector<double> loss(examples.size()), enhanced(examples.size()), noisy(examples.size());
  const bool conv = model.config().mode == model::SsmMode::convolution;
  std::vector<Tensor> kernels;
  if (conv) {
    NoGradScope no_grad;
    std::size_t frames = 0;
    for (const auto& ex : examples) frames = std::max(frames, ex.noisy.frames);
    kernels = model.ssm_kernels(frames);
  }
  parallel_for(examples.size(), workers, [&](std::size_t i) {
    NoGradScope no_grad;
    const Example& ex = examples[i];
    const auto fr = model.forward(ex.noisy, conv ? &kernels : nullptr);
    loss[i] = objective::total_loss(fr.waveform, ex.clean, fr.mask, ex.target_mask, lambda).total.item();
    enhanced[i] = objective::si_snr(fr.waveform.data(), ex.clean.data());
    noisy[i] = objective::si_snr(ex.noisy_samples, ex.clean.data());
  });
  Evaluation e;
  const double n = static_cast<double>(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    e.loss += loss[i] / n;
    e.si_snr += enhanced[i] / n;
    e.si_snr_noisy += noisy[i] / n;
  }
  return e;
}

TrainResult train(const TrainOptions& options) {
  config::RunConfig cfg = options.config;
  cfg.validate();
  const std::size_t workers = resolve_workers(cfg.train.workers);
  const auto manifest = data::read_manifest(options.data_dir / "manifest.tsv");

  model::SpikingS4Model model(cfg.model, cfg.seed);
  const auto train_set = prepare(manifest, data::Split::train, model.stft());
  const auto val_set = prepare(manifest, data::Split::val, model.stft());
  if (train_set.empty()) throw InputError("manifest has no training clips");
  if (val_set.empty()) throw InputError("manifest has no validation clips");

  optim::RAdam optimizer(model.parameters(), cfg.optim);
  const std::string echo = config::to_json(cfg, false);

  std::error_code ec;
  std::filesystem::create_directories(options.output_dir, ec);
  if (ec) throw IoError("cannot create '" + options.output_dir.string() + "': " + ec.message());
  TrainResult result;
  result.last_checkpoint = options.output_dir / "last.ckpt";
  result.best_checkpoint = options.output_dir / "best.ckpt";

  checkpoint::TrainingState state;
  if (options.resume) {
    const auto ckpt = checkpoint::load(result.last_checkpoint);
    checkpoint::restore(ckpt, model);
    checkpoint::restore(ckpt, optimizer);
    state = ckpt.state;
    if (options.log) *options.log << "resumed from " << result.last_checkpoint.string() << " after epoch " << state.epochs_done << "\n";
  }

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t epoch = state.epochs_done + 1; epoch <= cfg.train.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(epoch_seed(cfg.seed, epoch));
    std::shuffle(order.begin(), order.end(), rng);

    double train_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.train.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.train.batch_size);
      std::vector<const Example*> batch;
      for (std::size_t i = start; i < end; ++i) batch.push_back(&train_set[order[i]]);
      try {
        train_loss += train_step(model, optimizer, batch, cfg.train.lambda, workers).loss *
                      static_cast<double>(batch.size());
      } catch (const NumericalError& e) {
        throw NumericalError(std::string(e.what()) + " in epoch " + std::to_string(epoch) +
                             "; last good checkpoint: " +
                             (state.epochs_done > 0 ? result.last_checkpoint.string() : "none"));
      }
    }
    train_loss /= static_cast<double>(order.size());

    const Evaluation val = evaluate(model, val_set, cfg.train.lambda, workers);
    if (!std::isfinite(val.loss)) {
      throw NumericalError("non-finite validation loss in epoch " + std::to_string(epoch) +
                           "; last good checkpoint: " +
                           (state.epochs_done > 0 ? result.last_checkpoint.string() : "none"));
    }
    state.history.push_back({epoch, train_loss, val.loss, val.si_snr});
    state.epochs_done = epoch;
    const bool improved = state.best_epoch == 0 || val.loss < state.best_val_loss;
    if (improved) {
      state.best_epoch = epoch;
      state.best_val_loss = val.loss;
    }
    const auto ckpt = checkpoint::capture(model, &optimizer, echo, state);
    checkpoint::save(ckpt, result.last_checkpoint);
    if (improved) checkpoint::save(ckpt, result.best_checkpoint);
    write_loss_curve(state.history, options.output_dir / "loss_curve.tsv");

    if (options.log) {
      char line[200];
      std::snprintf(line, sizeof line,
                    "epoch %zu/%zu  train_loss %.4f  val_loss %.4f  val_si_snr %.3f dB (noisy %.3f dB)%s\n",
                    epoch, cfg.train.epochs, train_loss, val.loss, val.si_snr, val.si_snr_noisy,
                    improved ? "  *" : "");
      *options.log << line << std::flush;
    }
  }
  result.history = state.history;
  return result;
}

EvalReport summarize(std::vector<UtteranceScore> records) {
  if (records.empty()) throw InputError("no utterances to summarize");
  EvalReport r;
  const double n = static_cast<double>(records.size());
  for (const auto& u : records) {
    r.mean_noisy += u.si_snr_noisy / n;
    r.mean_enhanced += u.si_snr_enhanced / n;
    r.mean_delta += u.delta() / n;
  }
  double var = 0.0;
  for (const auto& u : records) var += (u.delta() - r.mean_delta) * (u.delta() - r.mean_delta) / n;
  r.std_delta = std::sqrt(var);
  r.records = std::move(records);
  return r;
}

EvalReport evaluate_split(const model::SpikingS4Model& model, const data::Manifest& manifest,
                          data::Split split, bool identity_mask, std::size_t workers) {
  const auto records = manifest.split(split);
  if (records.empty()) {
    throw InputError(std::string("split '") + data::to_string(split) + "' is empty");
  }
  std::vector<UtteranceScore> scores(records.size());
  parallel_for(records.size(), resolve_workers(workers), [&](std::size_t i) {
    const auto& r = records[i];
    const auto clean = data::read_wav(manifest.resolve(r.clean));
    const auto noisy = data::read_wav(manifest.resolve(r.noisy));
    if (clean.samples.size() != noisy.samples.size()) {
      throw InputError(r.id + ": clean and noisy lengths differ");
    }
    const auto enhanced = model.enhance(noisy.samples, identity_mask);
    scores[i] = {r.id, objective::si_snr(noisy.samples, clean.samples),
                 objective::si_snr(enhanced.waveform, clean.samples)};
  });
  return summarize(std::move(scores));
}

void write_report(const EvalReport& report, std::ostream& out) {
  out << "# spikes4-eval v1\n";
  out << "id\tsi_snr_noisy\tsi_snr_enhanced\tdelta\n";
  char line[256];
  for (const auto& u : report.records) {
    std::snprintf(line, sizeof line, "%s\t%.9f\t%.9f\t%.9f\n", u.id.c_str(), u.si_snr_noisy,
                  u.si_snr_enhanced, u.delta());
    out << line;
  }
  std::snprintf(line, sizeof line, "# mean\t%.9f\t%.9f\t%.9f\n", report.mean_noisy,
                report.mean_enhanced, report.mean_delta);
  out << line;
  std::snprintf(line, sizeof line, "# std_delta\t%.9f\n", report.std_delta);
  out << line;
  out << "# count\t" << report.records.size() << "\n";
}

}  // namespace spikes4::trainer
