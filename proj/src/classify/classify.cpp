#include "nicu/classify/classify.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "nicu/util/csv.hpp"
#include "nicu/util/time.hpp"

namespace nicu::classify {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool parse_number(const std::string& s, double& v) {
  const char* end = s.data() + s.size();
  const auto res = std::from_chars(s.data(), end, v);
  return res.ec == std::errc{} && res.ptr == end;
}

std::string number(double v) {
  char buf[32];
  return std::string(buf, std::to_chars(buf, buf + sizeof buf, v).ptr);
}

}  // namespace

RankedScores rank_compress(const Eigen::Ref<const Eigen::VectorXd>& scores, double alpha) {
  if (scores.size() == 0) throw std::invalid_argument("rank_compress: empty score vector");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("rank_compress: alpha must lie in (0, 1]");
  if (!scores.allFinite()) throw std::invalid_argument("rank_compress: non-finite score");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(scores.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return scores[a] > scores[b]; });
  RankedScores r;
  r.alpha = alpha;
  r.y.resize(scores.size());
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    r.y[order[pos]] = std::pow(1.0 / static_cast<double>(pos + 1), alpha);
  }
  return r;
}

// --- label map -----------------------------------------------------------------

const std::vector<std::pair<std::string, std::string>>& LabelMap::default_pairs() {
  static const std::vector<std::pair<std::string, std::string>> pairs = {
      {"Conversation", "Conversation"},
      {"Footsteps", "Walk, footsteps"},
      {"Oxygenator", "Train"},
      {"Hospital phone", "Electronic music"},
  };
  return pairs;
}

LabelMap LabelMap::from_pairs(const std::vector<std::pair<std::string, std::string>>& pairs,
                              const std::vector<std::string>& class_names, const std::string& origin) {
  LabelMap m;
  for (const auto& [nicu, source] : pairs) {
    const auto it = std::find(class_names.begin(), class_names.end(), source);
    if (it == class_names.end()) {
      throw std::invalid_argument(origin + ": source label '" + source + "' is not a classifier class");
    }
    for (const auto& e : m.entries_) {
      if (e.nicu_label == nicu) throw std::invalid_argument(origin + ": NICU label '" + nicu + "' mapped twice");
    }
    m.entries_.push_back({nicu, source, static_cast<Eigen::Index>(it - class_names.begin())});
  }
  return m;
}

LabelMap LabelMap::parse(const std::string& text, const std::vector<std::string>& class_names,
                         const std::string& origin) {
  std::vector<std::pair<std::string, std::string>> pairs;
  std::istringstream in(text);
  int lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw std::invalid_argument(where + ": expected 'nicu_label = source_label'");
    std::string nicu = trim(line.substr(0, eq)), source = trim(line.substr(eq + 1));
    if (nicu.empty() || source.empty()) throw std::invalid_argument(where + ": empty label");
    pairs.emplace_back(std::move(nicu), std::move(source));
  }
  return from_pairs(pairs, class_names, origin);
}

LabelMap LabelMap::load(const std::filesystem::path& path, const std::vector<std::string>& class_names) {
  return parse(read_text(path), class_names, path.string());
}

LabelMap LabelMap::defaults(const std::vector<std::string>& class_names) {
  return from_pairs(default_pairs(), class_names, "default label map");
}

std::vector<std::string> LabelMap::nicu_labels() const {
  std::vector<std::string> out;
  for (const auto& e : entries_) out.push_back(e.nicu_label);
  return out;
}

Eigen::VectorXd adapt_labels(const Eigen::VectorXd& values, const LabelMap& map) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(map.size()));
  for (std::size_t i = 0; i < map.size(); ++i) {
    const auto k = map.entries()[i].source_index;
    if (k >= values.size()) throw std::invalid_argument("adapt_labels: map does not fit the score vector");
    out[static_cast<Eigen::Index>(i)] = values[k];
  }
  return out;
}

Eigen::VectorXd adapt_labels(const RankedScores& ranked, const LabelMap& map) {
  return adapt_labels(ranked.y, map);
}

// --- scorers -------------------------------------------------------------------

Eigen::VectorXd TranscoderScorer::score(const distill::BandMatrix& window, std::int64_t) const {
  return teacher_.scores(student_.forward(window));
}

ExternalScorer::ExternalScorer(std::vector<ClassScores> rows) : rows_(std::move(rows)) {
  if (rows_.empty()) throw std::invalid_argument("external scores: no rows");
  names_ = rows_.front().class_names;
  std::stable_sort(rows_.begin(), rows_.end(),
                   [](const ClassScores& a, const ClassScores& b) { return a.window_start_ms < b.window_start_ms; });
}

Eigen::VectorXd ExternalScorer::score(const distill::BandMatrix&, std::int64_t window_start_ms) const {
  const auto it = std::lower_bound(
      rows_.begin(), rows_.end(), window_start_ms,
      [](const ClassScores& r, std::int64_t t) { return r.window_start_ms < t; });
  if (it == rows_.end() || it->window_start_ms != window_start_ms) {
    throw std::runtime_error("external scores: no row for window " + util::format_iso8601(window_start_ms));
  }
  return it->scores;
}

std::vector<ClassScores> parse_external_scores(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument(origin + ": empty file");
  const auto header = util::split_csv(line);
  if (header.size() < 2 || trim(header[0]) != "window_start_iso8601") {
    throw std::invalid_argument(origin + ":1: header must be window_start_iso8601 followed by class names");
  }
  std::vector<std::string> names(header.begin() + 1, header.end());
  for (const auto& n : names) {
    if (n.empty()) throw std::invalid_argument(origin + ":1: empty class name");
  }
  std::vector<ClassScores> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno);
    std::vector<std::string> cells;
    try {
      cells = util::split_csv(line);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(where + ": " + e.what());
    }
    if (cells.size() != header.size()) {
      throw std::invalid_argument(where + ": " + std::to_string(cells.size()) + " cells, header has " +
                                  std::to_string(header.size()));
    }
    ClassScores s;
    s.class_names = names;
    try {
      s.window_start_ms = util::parse_iso8601(trim(cells[0]));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(where + ": column window_start_iso8601: " + e.what());
    }
    s.scores.resize(static_cast<Eigen::Index>(names.size()));
    for (std::size_t c = 1; c < cells.size(); ++c) {
      double v = 0.0;
      const std::string cell = trim(cells[c]);
      const std::string col = "column " + std::to_string(c + 1) + " (" + names[c - 1] + ")";
      if (!parse_number(cell, v)) throw std::invalid_argument(where + ": " + col + ": not a number '" + cell + "'");
      if (!(v > 0.0 && v < 1.0)) throw std::invalid_argument(where + ": " + col + ": score " + cell + " outside (0, 1)");
      s.scores[static_cast<Eigen::Index>(c - 1)] = v;
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<ClassScores> import_external_scores(const std::filesystem::path& path) {
  return parse_external_scores(read_text(path), path.string());
}

// --- detection -------------------------------------------------------------------

WindowDetector::WindowDetector(const Scorer& scorer, const LabelMap& map, std::int64_t start_ms,
                               DetectOptions opts)
    : scorer_(scorer), map_(map), opts_(opts), start_ms_(start_ms) {
  out_.nicu_labels = map.nicu_labels();
}

void WindowDetector::push(const Eigen::Ref<const Eigen::VectorXf>& band_power) {
  if (window_.size() == 0) window_.resize(band_power.size(), kWindowFrames);
  if (band_power.size() != window_.rows()) throw std::invalid_argument("detect: band count changed mid-stream");
  window_.col(filled_++) = band_power;
  if (filled_ < kWindowFrames) return;
  filled_ = 0;
  const std::int64_t start = start_ms_ + static_cast<std::int64_t>(out_.windows.size()) * kWindowMs;
  const Eigen::VectorXd s = scorer_.score(window_, start);
  out_.windows.push_back({start, adapt_labels(s, map_), adapt_labels(rank_compress(s, opts_.alpha), map_)});
}

DetectionTimeline WindowDetector::finish() {
  if (out_.windows.empty()) throw std::invalid_argument("detect: stream shorter than one 10 s window");
  return std::move(out_);
}

DetectionTimeline detect_stream(const dsp::ThirdOctaveSpectrogram& tob, const Scorer& scorer,
                                const LabelMap& map, DetectOptions opts) {
  if (tob.size() < static_cast<std::size_t>(kWindowFrames)) {
    throw std::invalid_argument("detect: stream shorter than one 10 s window");
  }
  WindowDetector det(scorer, map, tob.start_time_ms, opts);
  for (const auto& f : tob.frames) det.push(f.band_power.cast<float>());
  return det.finish();
}

void write_timeline_csv(std::ostream& out, const DetectionTimeline& t) {
  out << "window_start_iso8601,nicu_label,y,score\n";
  for (const auto& w : t.windows) {
    const std::string when = util::format_iso8601(w.start_ms);
    for (std::size_t i = 0; i < t.nicu_labels.size(); ++i) {
      const auto k = static_cast<Eigen::Index>(i);
      out << when << ',' << util::csv_cell(t.nicu_labels[i]) << ',' << number(w.y[k]) << ','
          << number(w.score[k]) << '\n';
    }
  }
}

void write_timeline_csv(const std::filesystem::path& path, const DetectionTimeline& t) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_timeline_csv(out, t);
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

DetectionTimeline read_timeline_csv(const std::filesystem::path& path) {
  std::istringstream in(read_text(path));
  const std::string origin = path.string();
  std::string line;
  if (!std::getline(in, line) || util::split_csv(line) != std::vector<std::string>{"window_start_iso8601", "nicu_label", "y", "score"}) {
    throw std::invalid_argument(origin + ":1: expected header window_start_iso8601,nicu_label,y,score");
  }
  DetectionTimeline t;
  std::map<std::string, std::size_t> label_index;
  std::vector<std::pair<std::int64_t, std::vector<std::pair<double, double>>>> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno);
    const auto cells = util::split_csv(line);
    if (cells.size() != 4) throw std::invalid_argument(where + ": expected 4 cells");
    std::int64_t start = 0;
    try {
      start = util::parse_iso8601(cells[0]);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(where + ": " + e.what());
    }
    double y = 0.0, s = 0.0;
    if (!parse_number(cells[2], y)) throw std::invalid_argument(where + ": column y: not a number");
    if (!parse_number(cells[3], s)) throw std::invalid_argument(where + ": column score: not a number");
    const bool first_window = rows.empty() || (rows.size() == 1 && rows.back().first == start);
    auto [it, fresh] = label_index.try_emplace(cells[1], t.nicu_labels.size());
    if (fresh) {
      if (!first_window) throw std::invalid_argument(where + ": label '" + cells[1] + "' missing from first window");
      t.nicu_labels.push_back(cells[1]);
    }
    if (rows.empty() || rows.back().first != start) {
      if (!rows.empty() && start < rows.back().first) throw std::invalid_argument(where + ": windows out of order");
      if (!rows.empty() && rows.back().second.size() != t.nicu_labels.size()) {
        throw std::invalid_argument(where + ": previous window is incomplete");
      }
      rows.push_back({start, std::vector<std::pair<double, double>>(t.nicu_labels.size(), {NAN, NAN})});
    }
    auto& slots = rows.back().second;
    if (slots.size() < t.nicu_labels.size()) slots.resize(t.nicu_labels.size(), {NAN, NAN});
    slots[it->second] = {y, s};
  }
  for (const auto& [start, slots] : rows) {
    DetectionWindow w;
    w.start_ms = start;
    w.y.resize(static_cast<Eigen::Index>(slots.size()));
    w.score.resize(w.y.size());
    for (std::size_t i = 0; i < slots.size(); ++i) {
      if (std::isnan(slots[i].first)) {
        throw std::invalid_argument(origin + ": window " + util::format_iso8601(start) + " lacks label '" +
                                    t.nicu_labels[i] + "'");
      }
      w.y[static_cast<Eigen::Index>(i)] = slots[i].first;
      w.score[static_cast<Eigen::Index>(i)] = slots[i].second;
    }
    t.windows.push_back(std::move(w));
  }
  return t;
}

}  // namespace nicu::classify
