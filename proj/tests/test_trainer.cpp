#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>

#include "spikes4/error.hpp"
#include "spikes4/trainer.hpp"

using namespace spikes4;
using namespace spikes4::trainer;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("spikes4_trainer_" + name);
  fs::remove_all(p);
  return p;
}

config::RunConfig tiny_config() {
  config::RunConfig c;
  c.seed = 11;
  c.model.n_layers = 1;
  c.model.hidden_size = 4;
  c.model.latent_size = 6;
  c.model.window_length = 64;
  c.model.hop = 32;
  c.train.epochs = 2;
  c.train.batch_size = 2;
  c.train.workers = 1;
  c.data.n_train = 5;
  c.data.n_val = 2;
  c.data.n_test = 0;
  c.data.duration_s = 0.05;
  return c;
}

const fs::path& dataset() {
  static const fs::path dir = [] {
    auto d = temp_dir("data");
    data::generate_dataset(tiny_config().data, d);
    return d;
  }();
  return dir;
}

TrainResult run(const config::RunConfig& cfg, const fs::path& out, bool resume = false) {
  TrainOptions o;
  o.config = cfg;
  o.data_dir = dataset();
  o.output_dir = out;
  o.resume = resume;
  return train(o);
}

std::vector<char> bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST(Trainer, RepeatedRunsWriteIdenticalCheckpoints) {
  const auto a = run(tiny_config(), temp_dir("rep_a"));
  const auto b = run(tiny_config(), temp_dir("rep_b"));
  ASSERT_EQ(a.history.size(), 2u);
  EXPECT_EQ(a.history, b.history);
  EXPECT_EQ(bytes(a.last_checkpoint), bytes(b.last_checkpoint));
  EXPECT_TRUE(fs::exists(a.best_checkpoint));
  std::ifstream curve(a.last_checkpoint.parent_path() / "loss_curve.tsv");
  std::string line;
  std::size_t rows = 0;
  while (std::getline(curve, line)) rows += !line.empty() && line[0] != '#' && line[0] != 'e';
  EXPECT_EQ(rows, 2u);
}

TEST(Trainer, WorkerCountDoesNotChangeResult) {
  auto cfg = tiny_config();
  const auto a = run(cfg, temp_dir("w1"));
  cfg.train.workers = 3;
  const auto b = run(cfg, temp_dir("w3"));
  const auto ca = checkpoint::load(a.last_checkpoint);
  const auto cb = checkpoint::load(b.last_checkpoint);
  ASSERT_EQ(ca.params.size(), cb.params.size());
  for (std::size_t i = 0; i < ca.params.size(); ++i) EXPECT_EQ(ca.params[i].values, cb.params[i].values);
  EXPECT_EQ(ca.first_moments, cb.first_moments);
  EXPECT_EQ(ca.second_moments, cb.second_moments);
}

TEST(Trainer, ResumeIsBitExact) {
  auto cfg = tiny_config();
  cfg.train.epochs = 3;
  const auto full = run(cfg, temp_dir("full"));
  const auto dir = temp_dir("resumed");
  auto first = cfg;
  first.train.epochs = 1;
  run(first, dir);
  const auto resumed = run(cfg, dir, true);
  EXPECT_EQ(resumed.history, full.history);
  EXPECT_EQ(bytes(resumed.last_checkpoint), bytes(full.last_checkpoint));
}

TEST(Trainer, ResumeWithoutCheckpointFails) {
  EXPECT_THROW(run(tiny_config(), temp_dir("nothing"), true), IoError);
}

TEST(Evaluation, IdentityMaskScoresNoImprovement) {
  model::SpikingS4Model m(tiny_config().model, 1);
  const auto manifest = data::read_manifest(dataset() / "manifest.tsv");
  const auto r = evaluate_split(m, manifest, data::Split::val, true, 1);
  ASSERT_EQ(r.records.size(), 2u);
  for (const auto& u : r.records) EXPECT_NEAR(u.delta(), 0.0, 1e-6);
  EXPECT_THROW(evaluate_split(m, manifest, data::Split::test, false, 1), InputError);
}

TEST(Evaluation, SummaryAndReportAgree) {
  const auto r = summarize({{"a", 1.0, 4.0}, {"b", 2.0, 3.0}, {"c", 0.0, 5.0}});
  EXPECT_DOUBLE_EQ(r.mean_noisy, 1.0);
  EXPECT_DOUBLE_EQ(r.mean_enhanced, 4.0);
  EXPECT_DOUBLE_EQ(r.mean_delta, 3.0);
  // deltas 3, 1, 5
  EXPECT_NEAR(r.std_delta, std::sqrt(8.0 / 3.0), 1e-12);
  std::ostringstream out;
  write_report(r, out);
  std::istringstream in(out.str());
  std::string line;
  double sum = 0;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line.starts_with("id\t")) continue;
    std::istringstream fields(line);
    std::string id;
    double noisy = 0, enhanced = 0, delta = 0;
    fields >> id >> noisy >> enhanced >> delta;
    sum += delta;
    ++n;
  }
  EXPECT_EQ(n, 3u);
  EXPECT_NEAR(sum / 3, r.mean_delta, 1e-9);
}

TEST(ParallelFor, VisitsEveryIndexAndRethrows) {
  std::vector<int> hits(50, 0);
  parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
  for (int h : hits) EXPECT_EQ(h, 1);
  EXPECT_THROW(parallel_for(10, 3,
                            [](std::size_t i) {
                              if (i == 7) throw std::runtime_error("boom");
                            }),
               std::runtime_error);
  EXPECT_GE(resolve_workers(0), 1u);
  EXPECT_EQ(resolve_workers(5), 5u);
}
