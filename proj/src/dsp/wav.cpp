#include "se/dsp/wav.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

namespace se::dsp {

namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

void put_tag(std::vector<unsigned char>& out, const char* tag) { out.insert(out.end(), tag, tag + 4); }

}  // namespace

SampleRateMismatch::SampleRateMismatch(int expected_rate, int actual_rate)
    : DataError("sample rate " + std::to_string(actual_rate) + " Hz does not match required " +
                std::to_string(expected_rate) + " Hz; resample the file first"),
      expected(expected_rate),
      actual(actual_rate) {}

Signal read_wav(const std::filesystem::path& path, std::optional<int> expected_rate) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string where = path.string() + ": ";
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw DataError(where + "not a RIFF/WAVE file");
  }

  bool have_fmt = false;
  int rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::size_t size = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) throw DataError(where + "truncated chunk");
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw DataError(where + "short fmt chunk");
      const unsigned char* f = bytes.data() + body;
      const auto format = read_u16(f);
      const auto channels = read_u16(f + 2);
      rate = static_cast<int>(read_u32(f + 4));
      const auto bits = read_u16(f + 14);
      if (format != 1) throw DataError(where + "only PCM is supported");
      if (channels != 1) throw DataError(where + "only mono is supported, got " + std::to_string(channels) + " channels");
      if (bits != 16) throw DataError(where + "only 16-bit samples are supported, got " + std::to_string(bits));
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      data_size = size;
    }
    pos = body + size + (size & 1);
  }
  if (!have_fmt) throw DataError(where + "missing fmt chunk");
  if (data == nullptr) throw DataError(where + "missing data chunk");
  if (expected_rate && *expected_rate != rate) throw SampleRateMismatch(*expected_rate, rate);

  Signal out;
  out.sample_rate = rate;
  out.samples.resize(data_size / 2);
  for (std::size_t i = 0; i < out.samples.size(); ++i) {
    const auto raw = static_cast<std::int16_t>(read_u16(data + 2 * i));
    out.samples[i] = static_cast<double>(raw) / 32768.0;
  }
  return out;
}

void write_wav(const std::filesystem::path& path, const Signal& signal) {
  if (signal.sample_rate <= 0) throw ContractError("write_wav: sample rate must be positive");
  const auto data_bytes = static_cast<std::uint32_t>(signal.samples.size() * 2);
  std::vector<unsigned char> out;
  out.reserve(44 + data_bytes);
  put_tag(out, "RIFF");
  put_u32(out, 36 + data_bytes);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(signal.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(signal.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  put_tag(out, "data");
  put_u32(out, data_bytes);
  for (double s : signal.samples) {
    if (!std::isfinite(s)) throw NumericError("write_wav: non-finite sample");
    const double scaled = std::clamp(std::round(s * 32768.0), -32768.0, 32767.0);
    put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(scaled)));
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream file(path, std::ios::binary);
  if (!file) throw DataError("cannot write " + path.string());
  file.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!file) throw DataError("write failed for " + path.string());
}

}  // namespace se::dsp
