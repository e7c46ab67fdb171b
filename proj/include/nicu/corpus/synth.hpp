#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace nicu::corpus {

enum class SoundClass : int { conversation = 0, footsteps = 1, oxygenator = 2, alarm = 3 };

inline constexpr int kNumClasses = 4;
inline constexpr std::array<SoundClass, kNumClasses> kAllClasses = {
    SoundClass::conversation, SoundClass::footsteps, SoundClass::oxygenator, SoundClass::alarm};

std::string_view class_name(SoundClass c);

// One synthetic clip. An empty class set gives pink background noise only;
// target_rms == 0 gives digital silence.
struct ClipRecipe {
  std::array<bool, kNumClasses> classes{};
  double duration_s = 10.0;
  std::uint64_t seed = 0;
  double snr_db = 10.0;       // event mix RMS over background RMS
  double target_rms = 0.05;   // final clip RMS (full scale 1.0)
  int sample_rate_hz = 32000;

  bool has(SoundClass c) const { return classes[static_cast<std::size_t>(c)]; }
  ClipRecipe& with(SoundClass c) {
    classes[static_cast<std::size_t>(c)] = true;
    return *this;
  }
  Eigen::Vector4d target() const;
};

struct Clip {
  std::vector<double> samples;
  Eigen::Vector4d target;  // multilabel, indexed by SoundClass
};

// Deterministic in the recipe: equal recipes give bit-identical samples.
Clip synthesize(const ClipRecipe& recipe);

// Individual unit-RMS sources, exposed for tests and scenario scripting.
std::vector<double> pink_noise(std::size_t n, std::uint64_t seed);
std::vector<double> conversation(std::size_t n, int sample_rate_hz, std::uint64_t seed);
std::vector<double> footsteps(std::size_t n, int sample_rate_hz, std::uint64_t seed);
std::vector<double> oxygenator(std::size_t n, int sample_rate_hz, std::uint64_t seed);
std::vector<double> alarm(std::size_t n, int sample_rate_hz, std::uint64_t seed);

double rms(const std::vector<double>& x);

struct DatasetConfig {
  int n_per_class = 100;    // single-class clips per class
  int n_mixtures = 40;      // random two- or three-class mixtures
  int n_background = 20;    // background-only clips, all-zero target
  int n_silent = 10;        // digital silence, all-zero target
  std::uint64_t seed = 1;
  double snr_db_min = 6.0;
  double snr_db_max = 20.0;
  double level_dbfs_min = -32.0;  // target RMS range
  double level_dbfs_max = -18.0;
};

struct Dataset {
  std::vector<ClipRecipe> train;
  std::vector<ClipRecipe> val;
  std::vector<ClipRecipe> test;

  std::size_t size() const { return train.size() + val.size() + test.size(); }
};

// Each group (every single class, mixtures, background, silence) is split
// 80/10/10 after a seeded shuffle. Every recipe carries a distinct seed, so no
// clip can appear in two splits.
Dataset build_dataset(const DatasetConfig& cfg);

}  // namespace nicu::corpus
