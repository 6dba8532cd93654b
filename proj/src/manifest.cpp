#include <cstdio>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "spikes4/data.hpp"
#include "spikes4/error.hpp"

namespace spikes4::data {

namespace {
constexpr const char* kMagic = "# spikes4-manifest v1";
constexpr const char* kHeader = "id\tsplit\tclean\tnoise\tnoisy\tduration\tsnr_db";

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, '\t')) out.push_back(field);
  return out;
}

double parse_double(const std::string& s, const std::string& what, std::size_t line) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw FormatError("manifest line " + std::to_string(line) + ": bad " + what + " '" + s + "'");
  }
}
}  // namespace

const char* to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "unknown";
}

Split parse_split(const std::string& text) {
  if (text == "train") return Split::train;
  if (text == "val") return Split::val;
  if (text == "test") return Split::test;
  throw FormatError("unknown split '" + text + "'");
}

std::vector<ManifestRecord> Manifest::split(Split s) const {
  std::vector<ManifestRecord> out;
  for (const auto& r : records) {
    if (r.split == s) out.push_back(r);
  }
  return out;
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || line != kMagic) {
    throw FormatError(path.string() + ": missing manifest version header '" + kMagic + "'");
  }
  if (!std::getline(in, line) || line != kHeader) {
    throw FormatError(path.string() + ": unexpected column header");
  }
  Manifest m;
  m.root = path.parent_path();
  std::set<std::string> ids;
  std::size_t line_no = 2;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_tabs(line);
    if (f.size() != 7) {
      throw FormatError(path.string() + ": line " + std::to_string(line_no) + " has " +
                        std::to_string(f.size()) + " fields, expected 7");
    }
    ManifestRecord r;
    r.id = f[0];
    r.split = parse_split(f[1]);
    r.clean = f[2];
    r.noise = f[3];
    r.noisy = f[4];
    r.duration = parse_double(f[5], "duration", line_no);
    r.snr_db = parse_double(f[6], "snr_db", line_no);
    if (!ids.insert(r.id).second) {
      throw FormatError(path.string() + ": duplicate id '" + r.id + "'");
    }
    m.records.push_back(std::move(r));
  }
  return m;
}

void write_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open manifest '" + path.string() + "' for writing");
  out << kMagic << '\n' << kHeader << '\n';
  for (const auto& r : manifest.records) {
    char dur[64], snr[64];
    std::snprintf(dur, sizeof dur, "%.6f", r.duration);
    std::snprintf(snr, sizeof snr, "%.17g", r.snr_db);
    out << r.id << '\t' << to_string(r.split) << '\t' << r.clean << '\t' << r.noise << '\t'
        << r.noisy << '\t' << dur << '\t' << snr << '\n';
  }
  if (!out) throw IoError("failed writing manifest '" + path.string() + "'");
}

Manifest generate_dataset(const DatasetSpec& spec, const std::filesystem::path& dir) {
  spec.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir / "audio", ec);
  if (ec) throw IoError("cannot create '" + (dir / "audio").string() + "': " + ec.message());

  Manifest m;
  m.root = dir;
  for (std::size_t i = 0; i < spec.total(); ++i) {
    const MixtureTriplet t = make_triplet(spec, i);
    char id[32];
    std::snprintf(id, sizeof id, "utt%05zu", i);
    ManifestRecord r;
    r.id = id;
    r.split = i < spec.n_train ? Split::train
              : i < spec.n_train + spec.n_val ? Split::val
                                              : Split::test;
    r.clean = "audio/" + r.id + "_clean.wav";
    r.noise = "audio/" + r.id + "_noise.wav";
    r.noisy = "audio/" + r.id + "_noisy.wav";
    r.duration = t.clean.duration();
    r.snr_db = t.snr_db;
    write_wav(t.clean, dir / r.clean);
    write_wav(t.noise, dir / r.noise);
    write_wav(t.noisy, dir / r.noisy);
    m.records.push_back(std::move(r));
  }
  write_manifest(m, dir / "manifest.tsv");
  return m;
}

}  // namespace spikes4::data
