#include "spikes4/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "spikes4/error.hpp"

namespace spikes4::config {

using nlohmann::json;

namespace {

// Reads typed fields out of one JSON object and remembers which keys were
// consumed so leftovers can be reported as unknown.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where() + "." + key + " has the wrong type");
    }
  }

  void get_count(const char* key, std::size_t& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    if (!it->is_number_integer() || it->get<long long>() < 0) {
      throw ConfigError(where() + "." + key + " must be a non-negative integer");
    }
    out = it->get<std::size_t>();
  }

  const json* child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown key " + where() + "." + it.key());
    }
  }

 private:
  std::string where() const { return path_.empty() ? "<root>" : path_; }
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_model(const json& j, model::ModelConfig& m) {
  Section s(j, "model");
  s.get_count("n_layers", m.n_layers);
  s.get_count("hidden_size", m.hidden_size);
  s.get_count("latent_size", m.latent_size);
  s.get_count("window_length", m.window_length);
  s.get_count("hop", m.hop);
  s.get("v_threshold", m.v_threshold);
  s.get("v_reset", m.v_reset);
  s.get("tau_init", m.tau_init);
  s.get("surrogate_alpha", m.surrogate_alpha);
  std::string mode = model::to_string(m.mode);
  s.get("mode", mode);
  m.mode = model::parse_mode(mode);
  s.finish();
}

json write_model(const model::ModelConfig& m) {
  return json{{"n_layers", m.n_layers},       {"hidden_size", m.hidden_size},
              {"latent_size", m.latent_size}, {"window_length", m.window_length},
              {"hop", m.hop},                 {"v_threshold", m.v_threshold},
              {"v_reset", m.v_reset},         {"tau_init", m.tau_init},
              {"surrogate_alpha", m.surrogate_alpha}, {"mode", model::to_string(m.mode)}};
}

void read_data(const json& j, data::DatasetSpec& d) {
  Section s(j, "data");
  s.get_count("n_train", d.n_train);
  s.get_count("n_val", d.n_val);
  s.get_count("n_test", d.n_test);
  s.get("duration_s", d.duration_s);
  s.get("sample_rate", d.sample_rate);
  s.get("snr_min_db", d.snr_min_db);
  s.get("snr_max_db", d.snr_max_db);
  std::string kind = data::to_string(d.clean_kind);
  s.get("clean_kind", kind);
  d.clean_kind = data::parse_clean_kind(kind);
  s.get("seed", d.seed);
  s.finish();
}

json parse_text(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(lambda >= 0)) throw ConfigError("train.lambda must be >= 0");
}

void RunConfig::validate() const {
  model.validate();
  optim.validate();
  train.validate();
  data.validate();
}

RunConfig parse_config(const std::string& json_text) {
  const json root = parse_text(json_text);
  Section s(root, "");
  int version = kSchemaVersion;
  s.get("schema_version", version);
  if (version != kSchemaVersion) {
    throw ConfigError("unsupported schema_version " + std::to_string(version) + " (expected " +
                      std::to_string(kSchemaVersion) + ")");
  }
  RunConfig cfg;
  s.get("seed", cfg.seed);
  std::string data_dir = cfg.data_dir.string(), output_dir = cfg.output_dir.string();
  s.get("data_dir", data_dir);
  s.get("output_dir", output_dir);
  cfg.data_dir = data_dir;
  cfg.output_dir = output_dir;
  if (const json* m = s.child("model")) read_model(*m, cfg.model);
  if (const json* o = s.child("optim")) {
    Section os(*o, "optim");
    os.get("lr", cfg.optim.lr);
    os.get("beta1", cfg.optim.beta1);
    os.get("beta2", cfg.optim.beta2);
    os.get("eps", cfg.optim.eps);
    os.finish();
  }
  if (const json* t = s.child("train")) {
    Section ts(*t, "train");
    ts.get_count("epochs", cfg.train.epochs);
    ts.get_count("batch_size", cfg.train.batch_size);
    ts.get("lambda", cfg.train.lambda);
    ts.get_count("workers", cfg.train.workers);
    ts.finish();
  }
  if (const json* d = s.child("data")) read_data(*d, cfg.data);
  s.finish();
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string to_json(const RunConfig& cfg, bool include_paths) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["seed"] = cfg.seed;
  if (include_paths) {
    j["data_dir"] = cfg.data_dir.string();
    j["output_dir"] = cfg.output_dir.string();
  }
  j["model"] = write_model(cfg.model);
  j["optim"] = {{"lr", cfg.optim.lr}, {"beta1", cfg.optim.beta1},
                {"beta2", cfg.optim.beta2}, {"eps", cfg.optim.eps}};
  j["train"] = {{"epochs", cfg.train.epochs}, {"batch_size", cfg.train.batch_size},
                {"lambda", cfg.train.lambda}, {"workers", cfg.train.workers}};
  const auto& d = cfg.data;
  j["data"] = {{"n_train", d.n_train},         {"n_val", d.n_val},
               {"n_test", d.n_test},           {"duration_s", d.duration_s},
               {"sample_rate", d.sample_rate}, {"snr_min_db", d.snr_min_db},
               {"snr_max_db", d.snr_max_db},   {"clean_kind", data::to_string(d.clean_kind)},
               {"seed", d.seed}};
  return j.dump(2);
}

std::string model_to_json(const model::ModelConfig& cfg) { return write_model(cfg).dump(); }

model::ModelConfig model_from_json(const std::string& json_text) {
  model::ModelConfig m;
  read_model(parse_text(json_text), m);
  m.validate();
  return m;
}

}  // namespace spikes4::config
