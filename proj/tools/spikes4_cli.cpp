#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "spikes4/checkpoint.hpp"
#include "spikes4/config.hpp"
#include "spikes4/data.hpp"
#include "spikes4/error.hpp"
#include "spikes4/objective.hpp"
#include "spikes4/profile.hpp"
#include "spikes4/trainer.hpp"

namespace {

using namespace spikes4;

enum ExitCode : int {
  kOk = 0,
  kOther = 1,
  kConfig = 2,
  kData = 3,
  kNumerical = 4,
  kIo = 5,
};

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return kConfig;
    case ErrorKind::input:
    case ErrorKind::format:
    case ErrorKind::dimension: return kData;
    case ErrorKind::numerical:
    case ErrorKind::training: return kNumerical;
    case ErrorKind::io: return kIo;
    case ErrorKind::contract: return kOther;
  }
  return kOther;
}

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string mode;
};

void add_common(CLI::App* cmd, Common& c, bool with_mode) {
  cmd->add_option("--config", c.config_path, "JSON run configuration");
  cmd->add_option("--seed", c.seed, "override the seed");
  if (with_mode) cmd->add_option("--mode", c.mode, "SSM execution mode: convolution or recurrent");
}

config::RunConfig load(const Common& c) {
  config::RunConfig cfg = c.config_path.empty() ? config::RunConfig{} : config::load_config(c.config_path);
  if (!c.mode.empty()) cfg.model.mode = model::parse_mode(c.mode);
  cfg.validate();
  return cfg;
}

int cmd_synth(const Common& c, const std::string& out_dir, std::optional<std::size_t> n_test) {
  config::RunConfig cfg = load(c);
  if (c.seed) cfg.data.seed = *c.seed;
  if (n_test) cfg.data.n_test = *n_test;
  cfg.data.validate();
  const std::filesystem::path dir = out_dir.empty() ? cfg.data_dir : std::filesystem::path(out_dir);
  const auto manifest = data::generate_dataset(cfg.data, dir);
  std::cout << "wrote " << manifest.records.size() << " triplets and "
            << (dir / "manifest.tsv").string() << "\n";
  return kOk;
}

int cmd_train(const Common& c, const std::string& data_dir, const std::string& out_dir,
              std::optional<std::size_t> epochs, bool resume) {
  trainer::TrainOptions opts;
  opts.config = load(c);
  if (c.seed) opts.config.seed = *c.seed;
  if (epochs) opts.config.train.epochs = *epochs;
  opts.config.validate();
  opts.data_dir = data_dir.empty() ? opts.config.data_dir : std::filesystem::path(data_dir);
  opts.output_dir = out_dir.empty() ? opts.config.output_dir : std::filesystem::path(out_dir);
  opts.resume = resume;
  opts.log = &std::cout;
  const auto result = trainer::train(opts);
  std::cout << "checkpoints: " << result.last_checkpoint.string() << ", "
            << result.best_checkpoint.string() << "\n";
  return kOk;
}

model::SpikingS4Model load_for_inference(const Common& c, const std::string& ckpt_path) {
  const auto ckpt = checkpoint::load(ckpt_path);
  if (!c.config_path.empty()) {
    const auto cfg = config::load_config(c.config_path);
    model::ModelConfig expected = cfg.model;
    expected.mode = ckpt.model.mode;
    if (!(expected == ckpt.model)) {
      throw FormatError("checkpoint format v" + std::to_string(checkpoint::kFormatVersion) +
                        ": model config " + config::model_to_json(ckpt.model) +
                        " does not match --config model " + config::model_to_json(cfg.model));
    }
  }
  model::SpikingS4Model m(ckpt.model, 0);
  checkpoint::restore(ckpt, m);
  if (!c.mode.empty()) m.set_mode(model::parse_mode(c.mode));
  return m;
}

int cmd_enhance(const Common& c, const std::string& ckpt_path, const std::string& in_path,
                const std::string& out_path, const std::string& reference) {
  const auto m = load_for_inference(c, ckpt_path);
  const auto noisy = data::read_wav(in_path);
  if (noisy.sample_rate != m.stft().config().sample_rate) {
    throw InputError(in_path + ": sample rate " + std::to_string(noisy.sample_rate) +
                     " Hz, model expects " + std::to_string(m.stft().config().sample_rate));
  }
  const auto result = m.enhance(noisy.samples);
  data::AudioClip out{result.waveform, noisy.sample_rate};
  data::write_wav(out, out_path);
  std::cout << "wrote " << out_path << " (" << out.samples.size() << " samples)\n";
  if (!reference.empty()) {
    const auto clean = data::read_wav(reference);
    const double before = objective::si_snr(noisy.samples, clean.samples);
    const double after = objective::si_snr(out.samples, clean.samples);
    std::printf("si_snr_noisy=%.4f si_snr_enhanced=%.4f delta=%.4f\n", before, after, after - before);
  }
  return kOk;
}

int cmd_eval(const Common& c, const std::string& ckpt_path, const std::string& data_path,
             const std::string& split, bool identity, const std::string& report_path) {
  const auto m = load_for_inference(c, ckpt_path);
  std::filesystem::path manifest_path = data_path.empty() ? load(c).data_dir : std::filesystem::path(data_path);
  if (std::filesystem::is_directory(manifest_path)) manifest_path /= "manifest.tsv";
  const auto manifest = data::read_manifest(manifest_path);
  const std::size_t workers = c.config_path.empty() ? 0 : config::load_config(c.config_path).train.workers;
  const auto report = trainer::evaluate_split(m, manifest, data::parse_split(split), identity, workers);
  if (report_path.empty()) {
    trainer::write_report(report, std::cout);
  } else {
    std::ofstream out(report_path);
    if (!out) throw IoError("cannot write report '" + report_path + "'");
    trainer::write_report(report, out);
    std::printf("%zu utterances: mean si_snr noisy %.4f dB, enhanced %.4f dB, delta %.4f +- %.4f dB\n",
                report.records.size(), report.mean_noisy, report.mean_enhanced, report.mean_delta,
                report.std_delta);
  }
  return kOk;
}

int cmd_profile(const Common& c, const std::string& ckpt_path, double seconds, bool records) {
  const config::RunConfig cfg = load(c);
  std::optional<model::SpikingS4Model> m;
  if (ckpt_path.empty()) {
    m.emplace(cfg.model, c.seed.value_or(cfg.seed));
  } else {
    m.emplace(load_for_inference(c, ckpt_path));
  }
  if (!(seconds > 0)) throw ConfigError("--seconds must be positive");
  const auto samples = static_cast<std::size_t>(seconds * m->stft().config().sample_rate);
  const std::size_t frames = profile::frames_for(m->config(), samples);
  auto report = profile::profile(*m, frames);
  const auto probe = data::make_triplet(cfg.data, 0).noisy;
  report.spike_sparsity = profile::spike_sparsity(*m, probe.samples);
  if (records) {
    profile::write_records(report, std::cout);
  } else {
    profile::write_text(report, m->config(), std::cout);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spikes4: spiking state-space speech enhancement"};
  app.require_subcommand(1);
  Common common;

  auto* synth = app.add_subcommand("synth", "generate a synthetic clean/noise/noisy dataset");
  std::string synth_out;
  std::optional<std::size_t> n_test;
  add_common(synth, common, false);
  synth->add_option("--out", synth_out, "output directory (default: config data_dir)");
  synth->add_option("--n-test", n_test, "number of extra held-out test triplets");

  auto* train = app.add_subcommand("train", "train a model on a generated dataset");
  std::string train_data, train_out;
  std::optional<std::size_t> epochs;
  bool resume = false;
  add_common(train, common, true);
  train->add_option("--data", train_data, "dataset directory holding manifest.tsv");
  train->add_option("--out", train_out, "run directory for checkpoints and loss curve");
  train->add_option("--epochs", epochs, "override train.epochs");
  train->add_flag("--resume", resume, "continue from <out>/last.ckpt");

  auto* enhance = app.add_subcommand("enhance", "denoise one WAV file");
  std::string ckpt, in_wav, out_wav, reference;
  add_common(enhance, common, true);
  enhance->add_option("--checkpoint", ckpt, "model checkpoint")->required();
  enhance->add_option("--input", in_wav, "noisy 16-bit mono WAV")->required();
  enhance->add_option("--output", out_wav, "where to write the enhanced WAV")->required();
  enhance->add_option("--reference", reference, "clean reference WAV for an SI-SNR delta");

  auto* eval = app.add_subcommand("eval", "SI-SNR report on one manifest split");
  std::string eval_ckpt, eval_data, split = "val", report_path;
  bool identity = false;
  add_common(eval, common, true);
  eval->add_option("--checkpoint", eval_ckpt, "model checkpoint")->required();
  eval->add_option("--data", eval_data, "dataset directory or manifest file");
  eval->add_option("--split", split, "train, val or test");
  eval->add_flag("--identity-mask", identity, "score the unit-mask baseline instead of the model");
  eval->add_option("--report", report_path, "write the per-utterance report here");

  auto* prof = app.add_subcommand("profile", "parameter and FLOP accounting");
  std::string prof_ckpt;
  double seconds = 1.0;
  bool records = false;
  add_common(prof, common, true);
  prof->add_option("--checkpoint", prof_ckpt, "profile a trained checkpoint");
  prof->add_option("--seconds", seconds, "sample length in seconds (default 1)");
  prof->add_flag("--records", records, "emit key=value records");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    if (*synth) return cmd_synth(common, synth_out, n_test);
    if (*train) return cmd_train(common, train_data, train_out, epochs, resume);
    if (*enhance) return cmd_enhance(common, ckpt, in_wav, out_wav, reference);
    if (*eval) return cmd_eval(common, eval_ckpt, eval_data, split, identity, report_path);
    if (*prof) return cmd_profile(common, prof_ckpt, seconds, records);
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kOther;
  }
  return kOther;
}
