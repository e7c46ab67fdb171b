#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nicu/classify/classify.hpp"
#include "nicu/mel/melspace.hpp"

namespace nicu::report {

enum class Role { parent, professional };
const char* role_name(Role r);

// Presence interval [enter_ms, exit_ms) in UTC milliseconds.
struct BadgeEvent {
  std::string badge_id;
  Role role = Role::professional;
  std::int64_t enter_ms = 0;
  std::int64_t exit_ms = 0;
};

// CSV header badge_id,role,enter_iso8601,exit_iso8601. Intervals of one badge
// that overlap or touch are merged. Output is sorted by badge then time.
std::vector<BadgeEvent> parse_badges(const std::filesystem::path& path);
std::vector<BadgeEvent> parse_badges_text(const std::string& text, const std::string& origin);
std::vector<BadgeEvent> merge_badges(std::vector<BadgeEvent> events);

struct Occupancy {
  std::int64_t start_ms = 0;
  std::int64_t bin_ms = 180'000;
  std::vector<int> counts;  // distinct badges overlapping each bin

  std::int64_t bin_start(std::size_t i) const { return start_ms + static_cast<std::int64_t>(i) * bin_ms; }
  std::int64_t end_ms() const { return bin_start(counts.size()); }
};

// Bins [start, start + n_bins * bin_s). Parts of events outside are ignored.
Occupancy occupancy(const std::vector<BadgeEvent>& events, double bin_s, std::int64_t start_ms,
                    std::size_t n_bins);

struct ClassAlignment {
  std::string label;
  double mean_multi = 0.0;  // NaN when the partition is empty
  double mean_other = 0.0;
  double difference = 0.0;  // mean_multi - mean_other, NaN if either is empty
};

struct AlignmentReport {
  int threshold = 2;
  std::size_t n_multi = 0;  // covered bins with count >= threshold
  std::size_t n_other = 0;
  bool multi_empty() const { return n_multi == 0; }
  std::vector<ClassAlignment> classes;
  // Per bin: mean y of the detection windows starting inside it (NaN where
  // there are none), [n_bins x n_labels].
  Eigen::MatrixXd bin_means;
  std::vector<bool> covered;
};

// Detection windows are assigned to the bin holding their start and averaged.
// Only bins reached by both modalities enter the means. Throws if the spans
// do not overlap.
AlignmentReport align(const classify::DetectionTimeline& detections, const Occupancy& occ,
                      int threshold = 2);

// bin_start_iso8601,adult_count,<one column per NICU label>; empty cells for
// bins without detections.
void write_report_csv(const std::filesystem::path& path, const Occupancy& occ,
                      const classify::DetectionTimeline& detections, const AlignmentReport& report);

// Day timeline: detection curves, one row per badge, shaded bins with
// count >= threshold.
std::string timeline_svg(const classify::DetectionTimeline& detections, const Occupancy& occ,
                         const std::vector<BadgeEvent>& badges, int threshold = 2);

// Three stacked panels: third-octave bands [n_bands x T], transcoded mel and
// ground-truth mel (log10 power, [T x 64]).
std::string spectrogram_svg(const Eigen::MatrixXd& third_octave, const mel::MelSpectrogram& transcoded,
                            const mel::MelSpectrogram& ground_truth);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace nicu::report
