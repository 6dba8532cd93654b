#include "spikes4/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "json.hpp"
#include "spikes4/config.hpp"
#include "spikes4/error.hpp"

namespace spikes4::checkpoint {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'S', 'P', 'S', '4', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

class Writer {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { raw(&v, 1); }
  void u32(std::uint32_t v) { raw(&v, 4); }
  void u64(std::uint64_t v) { raw(&v, 8); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  void f64s(const std::vector<double>& v) { raw(v.data(), v.size() * sizeof(double)); }
  std::vector<std::uint8_t>& bytes() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  Reader(const std::uint8_t* p, std::size_t n) : p_(p), n_(n) {}
  void raw(void* dst, std::size_t n, const char* what) {
    if (n_ - pos_ < n) throw FormatError(std::string("checkpoint truncated while reading ") + what);
    std::memcpy(dst, p_ + pos_, n);
    pos_ += n;
  }
  std::uint8_t u8(const char* what) { std::uint8_t v; raw(&v, 1, what); return v; }
  std::uint32_t u32(const char* what) { std::uint32_t v; raw(&v, 4, what); return v; }
  std::uint64_t u64(const char* what) { std::uint64_t v; raw(&v, 8, what); return v; }
  std::string str(const char* what) {
    std::string s(u32(what), '\0');
    raw(s.data(), s.size(), what);
    return s;
  }
  std::vector<double> f64s(std::size_t count, const char* what) {
    if ((n_ - pos_) / sizeof(double) < count) {
      throw FormatError(std::string("checkpoint truncated while reading ") + what);
    }
    std::vector<double> v(count);
    raw(v.data(), count * sizeof(double), what);
    return v;
  }
  bool done() const { return pos_ == n_; }

 private:
  const std::uint8_t* p_;
  std::size_t n_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32_of(const std::uint8_t* p, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in bounded chunks.
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, p, chunk);
    p += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

json state_to_json(const TrainingState& s) {
  json history = json::array();
  for (const auto& r : s.history) {
    history.push_back({{"epoch", r.epoch},
                       {"train_loss", r.train_loss},
                       {"val_loss", r.val_loss},
                       {"val_si_snr", r.val_si_snr}});
  }
  return {{"epochs_done", s.epochs_done},
          {"best_epoch", s.best_epoch},
          {"best_val_loss", s.best_val_loss},
          {"history", history}};
}

TrainingState state_from_json(const json& j) {
  TrainingState s;
  s.epochs_done = j.at("epochs_done").get<std::size_t>();
  s.best_epoch = j.at("best_epoch").get<std::size_t>();
  s.best_val_loss = j.at("best_val_loss").get<double>();
  for (const auto& r : j.at("history")) {
    s.history.push_back({r.at("epoch").get<std::size_t>(), r.at("train_loss").get<double>(),
                         r.at("val_loss").get<double>(), r.at("val_si_snr").get<double>()});
  }
  return s;
}

}  // namespace

Checkpoint capture(const model::SpikingS4Model& model, const optim::RAdam* optimizer,
                   const std::string& run_config, const TrainingState& state) {
  Checkpoint c;
  c.model = model.config();
  c.run_config = run_config;
  c.state = state;
  for (const auto& p : model.parameters()) {
    c.params.push_back({p.name, p.tensor.shape(), p.tensor.to_vector()});
  }
  if (optimizer) {
    c.has_optimizer = true;
    c.optimizer_step = optimizer->step_count();
    c.first_moments = optimizer->first_moments();
    c.second_moments = optimizer->second_moments();
  }
  return c;
}

void restore(const Checkpoint& ckpt, model::SpikingS4Model& model) {
  if (!(ckpt.model == model.config())) {
    throw FormatError("checkpoint model config " + config::model_to_json(ckpt.model) +
                      " does not match " + config::model_to_json(model.config()));
  }
  auto params = model.parameters();
  if (params.size() != ckpt.params.size()) {
    throw FormatError("checkpoint has " + std::to_string(ckpt.params.size()) +
                      " parameters, model has " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& blob = ckpt.params[i];
    if (blob.name != params[i].name || blob.shape != params[i].tensor.shape()) {
      throw FormatError("checkpoint parameter '" + blob.name + "' " + shape_string(blob.shape) +
                        " does not match model parameter '" + params[i].name + "' " +
                        shape_string(params[i].tensor.shape()));
    }
    auto dst = params[i].tensor.mutable_data();
    std::copy(blob.values.begin(), blob.values.end(), dst.begin());
  }
}

void restore(const Checkpoint& ckpt, optim::RAdam& optimizer) {
  if (!ckpt.has_optimizer) throw FormatError("checkpoint carries no optimizer state");
  const auto& params = optimizer.params();
  if (ckpt.first_moments.size() != params.size() || ckpt.second_moments.size() != params.size()) {
    throw FormatError("checkpoint optimizer state does not match the parameter list");
  }
  optimizer.load_state(ckpt.optimizer_step, ckpt.first_moments, ckpt.second_moments);
}

std::vector<std::uint8_t> serialize(const Checkpoint& ckpt) {
  json meta;
  meta["model"] = json::parse(config::model_to_json(ckpt.model));
  meta["run_config"] = ckpt.run_config.empty() ? json() : json::parse(ckpt.run_config);
  meta["state"] = state_to_json(ckpt.state);

  Writer payload;
  payload.str(meta.dump());
  payload.u32(static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& p : ckpt.params) {
    if (numel_of(p.shape) != p.values.size()) {
      throw ContractError("checkpoint parameter '" + p.name + "' shape/value count mismatch");
    }
    payload.str(p.name);
    payload.u32(static_cast<std::uint32_t>(p.shape.size()));
    for (auto d : p.shape) payload.u64(d);
    payload.f64s(p.values);
  }
  payload.u8(ckpt.has_optimizer ? 1 : 0);
  if (ckpt.has_optimizer) {
    payload.u64(ckpt.optimizer_step);
    for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
      payload.f64s(ckpt.first_moments.at(i));
      payload.f64s(ckpt.second_moments.at(i));
    }
  }

  const auto& body = payload.bytes();
  Writer out;
  out.raw(kMagic, sizeof kMagic);
  out.u32(kFormatVersion);
  out.u64(body.size());
  out.raw(body.data(), body.size());
  out.u32(crc32_of(body.data(), body.size()));
  return std::move(out.bytes());
}

Checkpoint deserialize(const std::vector<std::uint8_t>& bytes) {
  Reader head(bytes.data(), bytes.size());
  char magic[8];
  head.raw(magic, 8, "magic");
  if (std::memcmp(magic, kMagic, 8) != 0) throw FormatError("not a checkpoint file (bad magic)");
  const std::uint32_t version = head.u32("version");
  if (version != kFormatVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version) +
                      " (expected " + std::to_string(kFormatVersion) + ")");
  }
  const std::uint64_t size = head.u64("payload size");
  if (bytes.size() != 20 + size + 4) {
    throw FormatError("checkpoint size mismatch: header declares " + std::to_string(size) +
                      " payload bytes, file holds " + std::to_string(bytes.size()));
  }
  const std::uint8_t* body = bytes.data() + 20;
  std::uint32_t stored;
  std::memcpy(&stored, body + size, 4);
  if (stored != crc32_of(body, size)) throw FormatError("checkpoint checksum mismatch");

  Reader r(body, size);
  Checkpoint c;
  try {
    const json meta = json::parse(r.str("metadata"));
    c.model = config::model_from_json(meta.at("model").dump());
    if (!meta.at("run_config").is_null()) c.run_config = meta.at("run_config").dump();
    c.state = state_from_json(meta.at("state"));
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint metadata is malformed: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint model config is invalid: ") + e.what());
  }
  const std::uint32_t n = r.u32("parameter count");
  for (std::uint32_t i = 0; i < n; ++i) {
    ParamBlob p;
    p.name = r.str("parameter name");
    const std::uint32_t rank = r.u32("parameter rank");
    for (std::uint32_t d = 0; d < rank; ++d) p.shape.push_back(r.u64("parameter dim"));
    p.values = r.f64s(numel_of(p.shape), "parameter values");
    c.params.push_back(std::move(p));
  }
  c.has_optimizer = r.u8("optimizer flag") != 0;
  if (c.has_optimizer) {
    c.optimizer_step = r.u64("optimizer step");
    for (const auto& p : c.params) {
      c.first_moments.push_back(r.f64s(p.values.size(), "first moments"));
      c.second_moments.push_back(r.f64s(p.values.size(), "second moments"));
    }
  }
  if (!r.done()) throw FormatError("checkpoint has trailing payload bytes");
  return c;
}

void save(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = serialize(ckpt);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at '" + path.string() + "': " + ec.message());
}

Checkpoint load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return deserialize(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

model::SpikingS4Model load_model(const std::filesystem::path& path) {
  const Checkpoint c = load(path);
  model::SpikingS4Model m(c.model, 0);
  restore(c, m);
  return m;
}

}  // namespace spikes4::checkpoint
