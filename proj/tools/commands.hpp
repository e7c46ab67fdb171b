#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "nicu/classify/classify.hpp"
#include "nicu/corpus/synth.hpp"
#include "nicu/distill/distill.hpp"
#include "nicu/mel/melspace.hpp"
#include "nicu/report/report.hpp"

// Subcommand bodies, callable without going through argument parsing.
namespace nicu::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kUsage = 2, kDiverged = 3 };

inline constexpr int kRequiredRateHz = 32000;

struct AnalyzeOptions {
  std::filesystem::path wav_in;
  std::filesystem::path tob_out;
  std::int64_t start_ms = 0;
  std::size_t queue_capacity = 64;
};

struct AnalyzeSummary {
  std::uint64_t frames = 0;
  std::uint64_t bytes = 0;
  double payload_bytes_per_s = 0.0;
};

// Throws std::runtime_error for a WAV that is not 32 kHz mono.
AnalyzeSummary cmd_analyze(const AnalyzeOptions& opts, std::ostream& out);

struct SynthOptions {
  std::filesystem::path out;
  // Stream mode: one WAV of `seconds` built from consecutive 10 s clips.
  bool stream = false;
  std::vector<std::string> classes;
  double seconds = 60.0;
  std::uint64_t seed = 1;
  double level_dbfs = -26.0;
  double snr_db = 12.0;
  // Dataset mode.
  corpus::DatasetConfig dataset;
};

void cmd_synth(const SynthOptions& opts, std::ostream& out);

struct TrainOptions {
  corpus::DatasetConfig dataset;
  distill::TeacherConfig teacher;
  std::filesystem::path out;
  std::filesystem::path log_csv;
  std::size_t queue_capacity = 8;
};

// Returns kDiverged when the final loss exceeds the initial one.
int cmd_train(const TrainOptions& opts, std::ostream& out);

struct DistillOptions {
  corpus::DatasetConfig dataset;
  distill::DistillConfig distill;
  std::filesystem::path teacher;
  std::filesystem::path out;
  std::filesystem::path log_csv;
  std::size_t queue_capacity = 8;
};

int cmd_distill(const DistillOptions& opts, std::ostream& out);

struct DetectOptions {
  std::filesystem::path tob_in;
  std::filesystem::path teacher;
  std::filesystem::path student;
  std::filesystem::path external_scores;  // replaces teacher and student when set
  std::filesystem::path label_map;        // default mapping when empty
  std::filesystem::path csv_out;
  double alpha = classify::kDefaultAlpha;
  std::size_t queue_capacity = 64;
};

classify::DetectionTimeline cmd_detect(const DetectOptions& opts, std::ostream& out);

struct ReportOptions {
  std::filesystem::path detections;
  std::filesystem::path badges;
  std::filesystem::path out_dir;
  double bin_s = 180.0;
  int threshold = 2;
  std::optional<std::int64_t> start_ms;  // default: UTC midnight before the first window
  std::optional<std::size_t> n_bins;      // default: one day
  // Optional spectrogram comparison for one clip.
  std::filesystem::path clip_wav;
  std::filesystem::path student;
};

report::AlignmentReport cmd_report(const ReportOptions& opts, std::ostream& out);

struct AuditOptions {
  std::filesystem::path tob_in;
  std::filesystem::path wav_out;
  int iterations = 60;
  std::uint64_t seed = 0x9e3779b9;
};

mel::GriffinLimResult cmd_audit(const AuditOptions& opts, std::ostream& out);

}  // namespace nicu::cli
