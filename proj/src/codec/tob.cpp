#include "nicu/codec/tob.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <iostream>
#include <iterator>
#include <stdexcept>

namespace nicu::codec {

namespace {

static_assert(std::endian::native == std::endian::little,
              "tob codec assumes a little-endian host");

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
  const auto* bytes = reinterpret_cast<const std::uint8_t*>(&value);
  out.insert(out.end(), bytes, bytes + sizeof(T));
}

template <typename T>
T take(const std::vector<std::uint8_t>& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) {
    throw std::runtime_error("tob: header truncated at byte " + std::to_string(pos));
  }
  T value;
  std::memcpy(&value, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return value;
}

}  // namespace

void TobHeader::validate() const {
  if (magic != kMagic) throw std::invalid_argument("tob: bad magic");
  if (version != kVersion) {
    throw std::invalid_argument("tob: unsupported version " + std::to_string(version));
  }
  if (frame_ms != kFrameMs) throw std::invalid_argument("tob: frame_ms must be 125");
  if (sample_rate_hz == 0) throw std::invalid_argument("tob: zero sample rate");
  if (band_centers_hz.empty() || band_centers_hz.size() > 0xffff) {
    throw std::invalid_argument("tob: band count out of range");
  }
  for (std::size_t i = 1; i < band_centers_hz.size(); ++i) {
    if (!(band_centers_hz[i - 1] < band_centers_hz[i])) {
      throw std::invalid_argument("tob: band centers not strictly increasing");
    }
  }
}

TobHeader TobHeader::for_spec(const dsp::FilterbankSpec& spec,
                              std::uint64_t start_time_unix_ms,
                              float calibration_db) {
  TobHeader h;
  h.sample_rate_hz = static_cast<std::uint32_t>(spec.sample_rate_hz);
  h.frame_ms = static_cast<std::uint16_t>(std::lround(spec.frame_seconds() * 1000.0));
  for (const auto& band : spec.bands) h.band_centers_hz.push_back(static_cast<float>(band.center_hz));
  h.calibration_db = calibration_db;
  h.start_time_unix_ms = start_time_unix_ms;
  h.validate();
  return h;
}

std::vector<std::uint8_t> encode_header(const TobHeader& header) {
  std::vector<std::uint8_t> out;
  out.reserve(header.byte_size());
  out.insert(out.end(), header.magic.begin(), header.magic.end());
  put(out, header.version);
  put(out, header.sample_rate_hz);
  put(out, header.frame_ms);
  put(out, header.n_bands());
  for (float c : header.band_centers_hz) put(out, c);
  put(out, header.calibration_db);
  put(out, header.start_time_unix_ms);
  return out;
}

TobWriter::TobWriter(const std::filesystem::path& path, TobHeader header)
    : header_(std::move(header)) {
  header_.validate();
  out_.open(path, std::ios::binary | std::ios::trunc);
  if (!out_) throw std::runtime_error("tob: cannot open " + path.string() + " for writing");
  const auto bytes = encode_header(header_);
  out_.write(reinterpret_cast<const char*>(bytes.data()),
             static_cast<std::streamsize>(bytes.size()));
  out_.flush();
  if (!out_) throw std::runtime_error("tob: failed writing header to " + path.string());
  scratch_.reserve(header_.frame_bytes());
}

void TobWriter::append(const dsp::ThirdOctaveFrame& frame) {
  append(frame.band_power.cast<float>());
}

void TobWriter::append(const Eigen::Ref<const Eigen::VectorXf>& band_power) {
  if (band_power.size() != header_.n_bands()) {
    throw std::invalid_argument("tob: frame has " + std::to_string(band_power.size()) +
                                " bands, header declares " +
                                std::to_string(header_.n_bands()));
  }
  scratch_.clear();
  for (Eigen::Index i = 0; i < band_power.size(); ++i) put(scratch_, band_power(i));
  out_.write(reinterpret_cast<const char*>(scratch_.data()),
             static_cast<std::streamsize>(scratch_.size()));
  out_.flush();
  if (!out_) throw std::runtime_error("tob: write failed");
  ++frames_;
}

dsp::FilterbankSpec spec_from_header(const TobHeader& header) {
  dsp::FilterbankSpec spec;
  spec.sample_rate_hz = static_cast<int>(header.sample_rate_hz);
  spec.frame_samples = static_cast<int>(header.sample_rate_hz / 8);
  for (float c : header.band_centers_hz) {
    const int b = static_cast<int>(std::lround(10.0 * std::log10(c / 1000.0)));
    if (static_cast<float>(dsp::band_center_hz(b)) != c) {
      throw std::runtime_error("tob: band center " + std::to_string(c) +
                               " Hz is not an IEC base-ten band");
    }
    spec.bands.push_back({b, dsp::band_center_hz(b), dsp::band_upper_edge_hz(b - 1),
                          dsp::band_upper_edge_hz(b), dsp::nominal_center_hz(b)});
  }
  spec.validate();
  return spec;
}

TobContents read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("tob: cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());

  TobContents contents;
  TobHeader& h = contents.header;
  std::size_t pos = 0;
  if (bytes.size() < 4) throw std::runtime_error("tob: header truncated at byte 0");
  std::memcpy(h.magic.data(), bytes.data(), 4);
  pos = 4;
  if (h.magic != kMagic) throw std::runtime_error("tob: bad magic in " + path.string());
  h.version = take<std::uint16_t>(bytes, pos);
  if (h.version != kVersion) {
    throw std::runtime_error("tob: unsupported version " + std::to_string(h.version));
  }
  h.sample_rate_hz = take<std::uint32_t>(bytes, pos);
  h.frame_ms = take<std::uint16_t>(bytes, pos);
  const auto n_bands = take<std::uint16_t>(bytes, pos);
  h.band_centers_hz.resize(n_bands);
  for (auto& c : h.band_centers_hz) c = take<float>(bytes, pos);
  h.calibration_db = take<float>(bytes, pos);
  h.start_time_unix_ms = take<std::uint64_t>(bytes, pos);
  try {
    h.validate();
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(e.what());
  }

  auto& tob = contents.spectrogram;
  tob.spec = spec_from_header(h);
  tob.start_time_ms = static_cast<std::int64_t>(h.start_time_unix_ms);

  const std::size_t payload = bytes.size() - pos;
  const std::size_t frame_bytes = h.frame_bytes();
  const std::size_t n_frames = payload / frame_bytes;
  contents.dropped_bytes = payload - n_frames * frame_bytes;
  if (contents.dropped_bytes != 0) {
    std::cerr << "warning: " << path.string() << ": dropping torn trailing frame ("
              << contents.dropped_bytes << " bytes)\n";
  }
  tob.frames.reserve(n_frames);
  for (std::size_t t = 0; t < n_frames; ++t) {
    dsp::ThirdOctaveFrame frame;
    frame.frame_index = static_cast<std::int64_t>(t);
    frame.band_power.resize(n_bands);
    for (std::uint16_t b = 0; b < n_bands; ++b) {
      frame.band_power(b) = take<float>(bytes, pos);
    }
    tob.frames.push_back(std::move(frame));
  }
  return contents;
}

double payload_bitrate(const TobHeader& header) {
  return static_cast<double>(header.frame_bytes()) * 1000.0 / header.frame_ms;
}

}  // namespace nicu::codec
