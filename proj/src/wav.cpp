#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "spikes4/data.hpp"
#include "spikes4/error.hpp"

namespace spikes4::data {

namespace {

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_tag(std::vector<std::uint8_t>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::size_t position() const { return pos_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      throw FormatError(std::string("truncated WAV: ") + what + " at byte " + std::to_string(pos_));
    }
  }
  std::string tag(const char* what) {
    need(4, what);
    std::string t(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + 4));
    pos_ += 4;
    return t;
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    std::uint16_t v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  void skip(std::size_t n) { pos_ += std::min(n, remaining()); }
  const std::uint8_t* here() const { return bytes_.data() + pos_; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_wav(const AudioClip& clip) {
  const auto n = clip.samples.size();
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(n * 2);
  const auto rate = static_cast<std::uint32_t>(std::lround(clip.sample_rate));
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  put_tag(out, "RIFF");
  put_u32(out, 36 + data_bytes);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, 1);         // PCM
  put_u16(out, 1);         // mono
  put_u32(out, rate);
  put_u32(out, rate * 2);  // byte rate
  put_u16(out, 2);         // block align
  put_u16(out, 16);        // bits per sample
  put_tag(out, "data");
  put_u32(out, data_bytes);
  for (double s : clip.samples) {
    const double clamped = std::clamp(std::isfinite(s) ? s : 0.0, -1.0, 1.0);
    const long q = std::clamp(std::lround(clamped * 32768.0), -32768L, 32767L);
    put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  return out;
}

AudioClip decode_wav(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (r.tag("RIFF header") != "RIFF") throw FormatError("WAV: missing RIFF tag");
  r.u32("RIFF size");
  if (r.tag("WAVE tag") != "WAVE") throw FormatError("WAV: missing WAVE tag");

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  while (r.remaining() >= 8) {
    const std::string id = r.tag("chunk id");
    const std::uint32_t size = r.u32("chunk size");
    if (id == "fmt ") {
      if (size < 16) throw FormatError("WAV: fmt chunk too small (" + std::to_string(size) + ")");
      format = r.u16("audio format");
      channels = r.u16("channel count");
      rate = r.u32("sample rate");
      r.u32("byte rate");
      r.u16("block align");
      bits = r.u16("bits per sample");
      if (format == 0xFFFE && size >= 40) {
        // WAVE_FORMAT_EXTENSIBLE: the subformat GUID starts with the real tag.
        r.u16("extension size");
        r.u16("valid bits");
        r.u32("channel mask");
        format = r.u16("subformat");
        r.skip(size - 26);
      } else {
        r.skip(size - 16);
      }
      have_fmt = true;
      if (format != 1) {
        throw FormatError("WAV: unsupported encoding, audio format " + std::to_string(format) +
                          " (only PCM = 1)");
      }
      if (channels != 1) {
        throw FormatError("WAV: unsupported channel count " + std::to_string(channels) +
                          " (only mono)");
      }
      if (bits != 16) {
        throw FormatError("WAV: unsupported encoding, bits per sample " + std::to_string(bits) +
                          " (only 16)");
      }
      if (rate == 0) throw FormatError("WAV: sample rate is zero");
    } else if (id == "data") {
      if (!have_fmt) throw FormatError("WAV: data chunk before fmt chunk");
      if (size % 2 != 0) throw FormatError("WAV: data chunk size " + std::to_string(size) + " is not a multiple of 2");
      r.need(size, "data chunk");
      AudioClip clip;
      clip.sample_rate = rate;
      clip.samples.resize(size / 2);
      const std::uint8_t* p = r.here();
      for (std::size_t i = 0; i < clip.samples.size(); ++i) {
        const auto v = static_cast<std::int16_t>(p[2 * i] | (p[2 * i + 1] << 8));
        clip.samples[i] = static_cast<double>(v) / 32768.0;
      }
      return clip;
    } else {
      r.skip(size + (size & 1));
    }
  }
  throw FormatError(have_fmt ? "WAV: missing data chunk" : "WAV: missing fmt chunk");
}

AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_wav(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_wav(const AudioClip& clip, const std::filesystem::path& path) {
  const auto bytes = encode_wav(clip);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace spikes4::data
