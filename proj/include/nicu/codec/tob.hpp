#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "nicu/dsp/thirdoctave.hpp"

namespace nicu::codec {

// .tob layout, all integers little-endian:
//
//   offset  size        field
//   0       4           magic "TOB1"
//   4       2   u16     version (1)
//   6       4   u32     sample_rate_hz
//   10      2   u16     frame_ms (125)
//   12      2   u16     n_bands
//   14      4*n f32     band_centers_hz, strictly increasing
//   14+4n   4   f32     calibration_db
//   18+4n   8   u64     start_time_unix_ms
//   26+4n   ...         payload: frames of n_bands f32 band powers
//
// 142 bytes of header for the 29-band profile.
inline constexpr std::array<char, 4> kMagic = {'T', 'O', 'B', '1'};
inline constexpr std::uint16_t kVersion = 1;
inline constexpr std::uint16_t kFrameMs = 125;

struct TobHeader {
  std::array<char, 4> magic = kMagic;
  std::uint16_t version = kVersion;
  std::uint32_t sample_rate_hz = 32000;
  std::uint16_t frame_ms = kFrameMs;
  std::vector<float> band_centers_hz;
  float calibration_db = 0.0f;
  std::uint64_t start_time_unix_ms = 0;

  std::uint16_t n_bands() const { return static_cast<std::uint16_t>(band_centers_hz.size()); }
  std::size_t byte_size() const { return 26 + 4 * band_centers_hz.size(); }
  std::size_t frame_bytes() const { return 4 * band_centers_hz.size(); }

  // Throws std::invalid_argument when the header breaks the format contract.
  void validate() const;

  static TobHeader for_spec(const dsp::FilterbankSpec& spec,
                            std::uint64_t start_time_unix_ms,
                            float calibration_db = 0.0f);
};

std::vector<std::uint8_t> encode_header(const TobHeader& header);

// Append-only writer. Each frame is flushed as soon as it is appended so a
// power cut costs at most the frame being written.
class TobWriter {
 public:
  TobWriter(const std::filesystem::path& path, TobHeader header);

  TobWriter(const TobWriter&) = delete;
  TobWriter& operator=(const TobWriter&) = delete;
  TobWriter(TobWriter&&) = default;
  TobWriter& operator=(TobWriter&&) = default;

  void append(const dsp::ThirdOctaveFrame& frame);
  void append(const Eigen::Ref<const Eigen::VectorXf>& band_power);

  std::uint64_t frames_written() const { return frames_; }
  std::uint64_t bytes_written() const { return header_.byte_size() + frames_ * header_.frame_bytes(); }
  const TobHeader& header() const { return header_; }

 private:
  std::ofstream out_;
  TobHeader header_;
  std::uint64_t frames_ = 0;
  std::vector<std::uint8_t> scratch_;
};

inline TobWriter open_writer(const std::filesystem::path& path, TobHeader header) {
  return TobWriter(path, std::move(header));
}

struct TobContents {
  TobHeader header;
  dsp::ThirdOctaveSpectrogram spectrogram;
  // Bytes of a torn trailing frame that were ignored (0 for a clean file).
  std::size_t dropped_bytes = 0;
};

// Reads a whole file. A trailing partial frame is dropped and reported via
// `dropped_bytes` and a warning on stderr.
TobContents read_file(const std::filesystem::path& path);

// Reconstructs the analysis spec from stored band centers (IEC band numbers
// are recovered from the centers).
dsp::FilterbankSpec spec_from_header(const TobHeader& header);

// Payload bytes per second of recording for a header's profile.
double payload_bitrate(const TobHeader& header);

}  // namespace nicu::codec
