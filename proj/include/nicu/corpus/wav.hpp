#pragma once

#include <filesystem>
#include <span>
#include <vector>

namespace nicu::corpus {

struct WavData {
  int sample_rate_hz = 0;
  std::vector<double> samples;  // [-1, 1)
};

// Mono RIFF/WAVE, 16-bit PCM or 32-bit IEEE float. Throws std::runtime_error
// on anything else (multichannel, compressed, truncated).
WavData read_wav(const std::filesystem::path& path);

// Mono 16-bit PCM. Samples are clipped to [-1, 1] and rounded.
void write_wav(const std::filesystem::path& path, std::span<const double> samples,
               int sample_rate_hz);

}  // namespace nicu::corpus
