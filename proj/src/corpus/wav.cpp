#include "nicu/corpus/wav.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>

namespace nicu::corpus {

namespace {

static_assert(std::endian::native == std::endian::little, "wav I/O assumes a little-endian host");

template <typename T>
T get(const std::vector<char>& b, std::size_t pos) {
  T v;
  std::memcpy(&v, b.data() + pos, sizeof(T));
  return v;
}

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

}  // namespace

WavData read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("wav: cannot open " + path.string());
  const std::vector<char> b((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string where = "wav: " + path.string() + ": ";
  if (b.size() < 12 || std::memcmp(b.data(), "RIFF", 4) != 0 || std::memcmp(b.data() + 8, "WAVE", 4) != 0) {
    throw std::runtime_error(where + "not a RIFF/WAVE file");
  }
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= b.size()) {
    const std::string id(b.data() + pos, 4);
    const auto size = get<std::uint32_t>(b, pos + 4);
    const std::size_t body = pos + 8;
    if (id == "fmt ") {
      if (size < 16 || body + 16 > b.size()) throw std::runtime_error(where + "short fmt chunk");
      format = get<std::uint16_t>(b, body);
      channels = get<std::uint16_t>(b, body + 2);
      rate = get<std::uint32_t>(b, body + 4);
      bits = get<std::uint16_t>(b, body + 14);
      if (format == 0xfffe && size >= 26) format = get<std::uint16_t>(b, body + 24);
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw std::runtime_error(where + "data chunk before fmt chunk");
      if (channels != 1) throw std::runtime_error(where + std::to_string(channels) + " channels; mono required");
      const std::size_t avail = std::min<std::size_t>(size, b.size() - body);
      WavData w;
      w.sample_rate_hz = static_cast<int>(rate);
      if (format == 1 && bits == 16) {
        w.samples.resize(avail / 2);
        for (std::size_t i = 0; i < w.samples.size(); ++i) {
          w.samples[i] = get<std::int16_t>(b, body + 2 * i) / 32768.0;
        }
      } else if (format == 3 && bits == 32) {
        w.samples.resize(avail / 4);
        for (std::size_t i = 0; i < w.samples.size(); ++i) w.samples[i] = get<float>(b, body + 4 * i);
      } else {
        throw std::runtime_error(where + "unsupported encoding (format " + std::to_string(format) +
                                 ", " + std::to_string(bits) + " bits)");
      }
      return w;
    }
    pos = body + size + (size & 1u);
  }
  throw std::runtime_error(where + "no data chunk");
}

void write_wav(const std::filesystem::path& path, std::span<const double> samples, int sample_rate_hz) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("wav: cannot open " + path.string() + " for writing");
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  out.write("RIFF", 4);
  put<std::uint32_t>(out, 36 + data_bytes);
  out.write("WAVEfmt ", 8);
  put<std::uint32_t>(out, 16);
  put<std::uint16_t>(out, 1);
  put<std::uint16_t>(out, 1);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(sample_rate_hz));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(sample_rate_hz) * 2);
  put<std::uint16_t>(out, 2);
  put<std::uint16_t>(out, 16);
  out.write("data", 4);
  put<std::uint32_t>(out, data_bytes);
  for (double s : samples) {
    const double c = std::clamp(s, -1.0, 1.0);
    put<std::int16_t>(out, static_cast<std::int16_t>(std::clamp(std::lround(c * 32768.0), -32768L, 32767L)));
  }
  if (!out) throw std::runtime_error("wav: write failed for " + path.string());
}

}  // namespace nicu::corpus
