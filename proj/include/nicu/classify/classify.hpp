#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "nicu/distill/distill.hpp"
#include "nicu/dsp/thirdoctave.hpp"

namespace nicu::classify {

inline constexpr double kDefaultAlpha = 0.5;
inline constexpr int kWindowFrames = 80;             // 10 s of 125 ms frames
inline constexpr std::int64_t kWindowMs = 10'000;

struct ClassScores {
  Eigen::VectorXd scores;  // unnormalised, in (0, 1)
  std::vector<std::string> class_names;
  std::int64_t window_start_ms = 0;
};

struct RankedScores {
  Eigen::VectorXd y;
  double alpha = kDefaultAlpha;
};

// y[k] = (1 / rank(k))^alpha, rank 1 for the highest score. Ties keep
// ascending class index. Throws on empty or non-finite scores and alpha
// outside (0, 1].
RankedScores rank_compress(const Eigen::Ref<const Eigen::VectorXd>& scores, double alpha = kDefaultAlpha);
inline RankedScores rank_compress(const ClassScores& s, double alpha = kDefaultAlpha) {
  return rank_compress(s.scores, alpha);
}

struct LabelEntry {
  std::string nicu_label;
  std::string source_label;
  Eigen::Index source_index = 0;  // into the classifier's class list
};

// NICU label -> classifier class, resolved against a class list when built.
class LabelMap {
 public:
  LabelMap() = default;

  // Lines "nicu_label = source_label"; '#' starts a comment. Unknown source
  // labels and repeated NICU labels are errors.
  static LabelMap parse(const std::string& text, const std::vector<std::string>& class_names,
                        const std::string& origin = "label map");
  static LabelMap load(const std::filesystem::path& path, const std::vector<std::string>& class_names);

  // The four-class default.
  static LabelMap defaults(const std::vector<std::string>& class_names);
  static const std::vector<std::pair<std::string, std::string>>& default_pairs();

  const std::vector<LabelEntry>& entries() const { return entries_; }
  std::vector<std::string> nicu_labels() const;
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

 private:
  static LabelMap from_pairs(const std::vector<std::pair<std::string, std::string>>& pairs,
                             const std::vector<std::string>& class_names, const std::string& origin);
  std::vector<LabelEntry> entries_;
};

// Values of the mapped source classes, in map order.
Eigen::VectorXd adapt_labels(const RankedScores& ranked, const LabelMap& map);
Eigen::VectorXd adapt_labels(const Eigen::VectorXd& values, const LabelMap& map);

// Produces class scores for one 10 s window of band powers [29 x 80].
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual const std::vector<std::string>& class_names() const = 0;
  virtual Eigen::VectorXd score(const distill::BandMatrix& window, std::int64_t window_start_ms) const = 0;
};

// Transcoder followed by the teacher classifier.
class TranscoderScorer final : public Scorer {
 public:
  TranscoderScorer(const distill::TranscoderModel& student, const distill::TeacherModel& teacher)
      : student_(student), teacher_(teacher) {}
  const std::vector<std::string>& class_names() const override { return teacher_.class_names; }
  Eigen::VectorXd score(const distill::BandMatrix& window, std::int64_t window_start_ms) const override;

 private:
  const distill::TranscoderModel& student_;
  const distill::TeacherModel& teacher_;
};

// Scores computed elsewhere, looked up by window start.
class ExternalScorer final : public Scorer {
 public:
  explicit ExternalScorer(std::vector<ClassScores> rows);
  const std::vector<std::string>& class_names() const override { return names_; }
  Eigen::VectorXd score(const distill::BandMatrix& window, std::int64_t window_start_ms) const override;

 private:
  std::vector<std::string> names_;
  std::vector<ClassScores> rows_;  // sorted by window start
};

// CSV: header "window_start_iso8601,<class>,...", one row per window, scores
// strictly inside (0, 1). Errors name the line and column.
std::vector<ClassScores> import_external_scores(const std::filesystem::path& path);
std::vector<ClassScores> parse_external_scores(const std::string& text, const std::string& origin);

struct DetectionWindow {
  std::int64_t start_ms = 0;
  Eigen::VectorXd score;  // raw score of each mapped source class
  Eigen::VectorXd y;      // compressed reciprocal rank, per NICU label
};

struct DetectionTimeline {
  std::vector<std::string> nicu_labels;
  std::vector<DetectionWindow> windows;  // contiguous, 10 s each
};

struct DetectOptions {
  double alpha = kDefaultAlpha;
};

// Accepts frames one at a time and emits a detection every 80 frames.
class WindowDetector {
 public:
  WindowDetector(const Scorer& scorer, const LabelMap& map, std::int64_t start_ms,
                 DetectOptions opts = {});
  void push(const Eigen::Ref<const Eigen::VectorXf>& band_power);
  // Frames left over from an incomplete last window are ignored.
  DetectionTimeline finish();

 private:
  const Scorer& scorer_;
  const LabelMap& map_;
  DetectOptions opts_;
  std::int64_t start_ms_;
  distill::BandMatrix window_;
  int filled_ = 0;
  DetectionTimeline out_;
};

// Tiles the stream into non-overlapping 10 s windows; a remainder is ignored.
// Throws std::invalid_argument if there is not one full window.
DetectionTimeline detect_stream(const dsp::ThirdOctaveSpectrogram& tob, const Scorer& scorer,
                                const LabelMap& map, DetectOptions opts = {});

// Columns window_start_iso8601,nicu_label,y,score; rows ordered by window
// then map order.
void write_timeline_csv(std::ostream& out, const DetectionTimeline& timeline);
void write_timeline_csv(const std::filesystem::path& path, const DetectionTimeline& timeline);
DetectionTimeline read_timeline_csv(const std::filesystem::path& path);

}  // namespace nicu::classify
