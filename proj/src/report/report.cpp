#include "nicu/report/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "nicu/util/csv.hpp"
#include "nicu/util/time.hpp"

namespace nicu::report {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::string fmt(const char* f, double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// Fixed-precision coordinates keep the output byte-stable.
std::string px(double v) { return fmt("%.2f", v); }

std::string gray(double t) {
  const int g = static_cast<int>(std::lround(255.0 * std::clamp(t, 0.0, 1.0)));
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", g, g, g);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

// [rows x cols] heat map, columns averaged down to at most max_cols.
void heatmap(std::ostream& svg, const Eigen::MatrixXd& m, double lo, double hi, double x0, double y0,
             double w, double h, const std::string& title, Eigen::Index max_cols = 250) {
  const Eigen::Index rows = m.rows();
  const Eigen::Index cols = std::min(m.cols(), max_cols);
  svg << "<g class=\"panel\">\n";
  svg << "<text x=\"" << px(x0) << "\" y=\"" << px(y0 - 4) << "\" font-size=\"12\">" << escape(title)
      << "</text>\n";
  const double cw = w / static_cast<double>(std::max<Eigen::Index>(cols, 1));
  const double ch = h / static_cast<double>(std::max<Eigen::Index>(rows, 1));
  const double span = hi > lo ? hi - lo : 1.0;
  for (Eigen::Index c = 0; c < cols; ++c) {
    const Eigen::Index a = c * m.cols() / cols, b = (c + 1) * m.cols() / cols;
    const Eigen::VectorXd col = m.middleCols(a, b - a).rowwise().mean();
    for (Eigen::Index r = 0; r < rows; ++r) {
      // Low frequencies at the bottom.
      svg << "<rect x=\"" << px(x0 + c * cw) << "\" y=\"" << px(y0 + (rows - 1 - r) * ch) << "\" width=\""
          << px(cw) << "\" height=\"" << px(ch) << "\" fill=\"" << gray((col[r] - lo) / span) << "\"/>\n";
    }
  }
  svg << "</g>\n";
}

}  // namespace

const char* role_name(Role r) { return r == Role::parent ? "parent" : "professional"; }

std::vector<BadgeEvent> merge_badges(std::vector<BadgeEvent> events) {
  std::sort(events.begin(), events.end(), [](const BadgeEvent& a, const BadgeEvent& b) {
    if (a.badge_id != b.badge_id) return a.badge_id < b.badge_id;
    return a.enter_ms != b.enter_ms ? a.enter_ms < b.enter_ms : a.exit_ms < b.exit_ms;
  });
  std::vector<BadgeEvent> out;
  for (auto& e : events) {
    if (!out.empty() && out.back().badge_id == e.badge_id && e.enter_ms <= out.back().exit_ms) {
      out.back().exit_ms = std::max(out.back().exit_ms, e.exit_ms);
    } else {
      out.push_back(std::move(e));
    }
  }
  return out;
}

std::vector<BadgeEvent> parse_badges_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) ||
      util::split_csv(trim(line)) != std::vector<std::string>{"badge_id", "role", "enter_iso8601", "exit_iso8601"}) {
    throw std::invalid_argument(origin + ":1: expected header badge_id,role,enter_iso8601,exit_iso8601");
  }
  std::vector<BadgeEvent> events;
  std::map<std::string, Role> roles;
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
    if (cells.size() != 4) throw std::invalid_argument(where + ": expected 4 cells");
    for (auto& c : cells) c = trim(c);
    BadgeEvent e;
    e.badge_id = cells[0];
    if (e.badge_id.empty()) throw std::invalid_argument(where + ": empty badge_id");
    if (cells[1] == "parent") e.role = Role::parent;
    else if (cells[1] == "professional") e.role = Role::professional;
    else throw std::invalid_argument(where + ": unknown role '" + cells[1] + "'");
    try {
      e.enter_ms = util::parse_iso8601(cells[2]);
      e.exit_ms = util::parse_iso8601(cells[3]);
    } catch (const std::invalid_argument& ex) {
      throw std::invalid_argument(where + ": " + ex.what());
    }
    if (e.exit_ms <= e.enter_ms) throw std::invalid_argument(where + ": exit is not after enter");
    const auto [it, fresh] = roles.try_emplace(e.badge_id, e.role);
    if (!fresh && it->second != e.role) {
      throw std::invalid_argument(where + ": badge '" + e.badge_id + "' changes role");
    }
    events.push_back(std::move(e));
  }
  return merge_badges(std::move(events));
}

std::vector<BadgeEvent> parse_badges(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open badge file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_badges_text(ss.str(), path.string());
}

Occupancy occupancy(const std::vector<BadgeEvent>& events, double bin_s, std::int64_t start_ms,
                    std::size_t n_bins) {
  if (!(bin_s > 0.0)) throw std::invalid_argument("occupancy: bin length must be positive");
  Occupancy occ;
  occ.start_ms = start_ms;
  occ.bin_ms = static_cast<std::int64_t>(std::llround(bin_s * 1000.0));
  if (occ.bin_ms <= 0) throw std::invalid_argument("occupancy: bin length must be positive");
  occ.counts.assign(n_bins, 0);
  std::map<std::string, std::set<std::size_t>> bins_of;
  const std::int64_t end = occ.end_ms();
  for (const auto& e : events) {
    if (e.exit_ms <= start_ms || e.enter_ms >= end) continue;
    const auto first = static_cast<std::size_t>((std::max(e.enter_ms, start_ms) - start_ms) / occ.bin_ms);
    const auto last = static_cast<std::size_t>((std::min(e.exit_ms, end) - 1 - start_ms) / occ.bin_ms);
    auto& bins = bins_of[e.badge_id];
    for (std::size_t b = first; b <= last; ++b) bins.insert(b);
  }
  for (const auto& [id, bins] : bins_of) {
    for (auto b : bins) ++occ.counts[b];
  }
  return occ;
}

AlignmentReport align(const classify::DetectionTimeline& det, const Occupancy& occ, int threshold) {
  AlignmentReport r;
  r.threshold = threshold;
  const auto n_bins = occ.counts.size();
  const auto n_labels = static_cast<Eigen::Index>(det.nicu_labels.size());
  r.bin_means = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(n_bins), n_labels, kNaN);
  r.covered.assign(n_bins, false);
  Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_bins), n_labels);
  std::vector<int> hits(n_bins, 0);
  for (const auto& w : det.windows) {
    if (w.start_ms < occ.start_ms || w.start_ms >= occ.end_ms()) continue;
    const auto b = static_cast<std::size_t>((w.start_ms - occ.start_ms) / occ.bin_ms);
    sums.row(static_cast<Eigen::Index>(b)) += w.y.transpose();
    ++hits[b];
  }
  Eigen::VectorXd sum_multi = Eigen::VectorXd::Zero(n_labels), sum_other = Eigen::VectorXd::Zero(n_labels);
  for (std::size_t b = 0; b < n_bins; ++b) {
    if (hits[b] == 0) continue;
    r.covered[b] = true;
    const auto i = static_cast<Eigen::Index>(b);
    r.bin_means.row(i) = sums.row(i) / hits[b];
    if (occ.counts[b] >= threshold) {
      sum_multi += r.bin_means.row(i).transpose();
      ++r.n_multi;
    } else {
      sum_other += r.bin_means.row(i).transpose();
      ++r.n_other;
    }
  }
  if (r.n_multi + r.n_other == 0) throw std::invalid_argument("align: detections and occupancy do not overlap");
  for (Eigen::Index k = 0; k < n_labels; ++k) {
    ClassAlignment c;
    c.label = det.nicu_labels[static_cast<std::size_t>(k)];
    c.mean_multi = r.n_multi ? sum_multi[k] / static_cast<double>(r.n_multi) : kNaN;
    c.mean_other = r.n_other ? sum_other[k] / static_cast<double>(r.n_other) : kNaN;
    c.difference = c.mean_multi - c.mean_other;
    r.classes.push_back(c);
  }
  return r;
}

void write_report_csv(const std::filesystem::path& path, const Occupancy& occ,
                      const classify::DetectionTimeline& det, const AlignmentReport& report) {
  std::ostringstream out;
  out << "bin_start_iso8601,adult_count";
  for (const auto& l : det.nicu_labels) out << ',' << util::csv_cell(l);
  out << '\n';
  for (std::size_t b = 0; b < occ.counts.size(); ++b) {
    out << util::format_iso8601(occ.bin_start(b)) << ',' << occ.counts[b];
    for (Eigen::Index k = 0; k < report.bin_means.cols(); ++k) {
      out << ',';
      if (report.covered[b]) out << fmt("%.6f", report.bin_means(static_cast<Eigen::Index>(b), k));
    }
    out << '\n';
  }
  write_text(path, out.str());
}

std::string timeline_svg(const classify::DetectionTimeline& det, const Occupancy& occ,
                         const std::vector<BadgeEvent>& badges, int threshold) {
  std::vector<std::string> ids;
  for (const auto& b : badges) {
    if (std::find(ids.begin(), ids.end(), b.badge_id) == ids.end()) ids.push_back(b.badge_id);
  }
  const double left = 90, width = 1100, curve_h = 200, row_h = 16;
  const double curve_top = 30, badge_top = curve_top + curve_h + 30;
  const double height = badge_top + row_h * static_cast<double>(ids.size()) + 40;
  const double t0 = static_cast<double>(occ.start_ms);
  const double span = std::max<double>(static_cast<double>(occ.end_ms() - occ.start_ms), 1.0);
  auto xof = [&](std::int64_t t) {
    return left + width * std::clamp((static_cast<double>(t) - t0) / span, 0.0, 1.0);
  };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << px(left + width + 160) << "\" height=\""
      << px(height) << "\" font-family=\"sans-serif\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
  svg << "<g class=\"multi-adult\">\n";
  for (std::size_t b = 0; b < occ.counts.size(); ++b) {
    if (occ.counts[b] < threshold) continue;
    const double x = xof(occ.bin_start(b));
    svg << "<rect x=\"" << px(x) << "\" y=\"" << px(curve_top) << "\" width=\""
        << px(xof(occ.bin_start(b + 1)) - x) << "\" height=\"" << px(badge_top + row_h * ids.size() - curve_top)
        << "\" fill=\"#fde9b8\"/>\n";
  }
  svg << "</g>\n";
  svg << "<rect x=\"" << px(left) << "\" y=\"" << px(curve_top) << "\" width=\"" << px(width)
      << "\" height=\"" << px(curve_h) << "\" fill=\"none\" stroke=\"#000000\"/>\n";
  for (std::size_t k = 0; k < det.nicu_labels.size(); ++k) {
    const char* color = kPalette[k % std::size(kPalette)];
    if (!det.windows.empty()) {
      svg << "<polyline class=\"detection\" fill=\"none\" stroke=\"" << color << "\" points=\"";
      for (std::size_t i = 0; i < det.windows.size(); ++i) {
        const auto& w = det.windows[i];
        const double x = xof(w.start_ms + classify::kWindowMs / 2);
        const double y = curve_top + curve_h * (1.0 - w.y[static_cast<Eigen::Index>(k)]);
        svg << (i ? " " : "") << px(x) << ',' << px(y);
      }
      svg << "\"/>\n";
    }
    svg << "<text x=\"" << px(left + width + 10) << "\" y=\"" << px(curve_top + 14 + 16.0 * k)
        << "\" font-size=\"12\" fill=\"" << color << "\">" << escape(det.nicu_labels[k]) << "</text>\n";
  }
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const double y = badge_top + row_h * static_cast<double>(r);
    svg << "<g class=\"badge\">\n<text x=\"4\" y=\"" << px(y + 12) << "\" font-size=\"11\">" << escape(ids[r])
        << "</text>\n";
    for (const auto& b : badges) {
      if (b.badge_id != ids[r]) continue;
      const double x = xof(b.enter_ms);
      svg << "<rect x=\"" << px(x) << "\" y=\"" << px(y + 2) << "\" width=\"" << px(xof(b.exit_ms) - x)
          << "\" height=\"" << px(row_h - 4) << "\" fill=\""
          << (b.role == Role::parent ? "#8c564b" : "#17becf") << "\"/>\n";
    }
    svg << "</g>\n";
  }
  svg << "<text x=\"" << px(left) << "\" y=\"" << px(height - 12) << "\" font-size=\"11\">"
      << util::format_iso8601(occ.start_ms) << "</text>\n";
  svg << "<text x=\"" << px(left + width) << "\" y=\"" << px(height - 12)
      << "\" font-size=\"11\" text-anchor=\"end\">" << util::format_iso8601(occ.end_ms()) << "</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

std::string spectrogram_svg(const Eigen::MatrixXd& third_octave, const mel::MelSpectrogram& transcoded,
                            const mel::MelSpectrogram& ground_truth) {
  if (third_octave.size() == 0 || transcoded.data.size() == 0 || ground_truth.data.size() == 0) {
    throw std::invalid_argument("spectrogram_svg: empty input");
  }
  const Eigen::MatrixXd tob = (third_octave.array().max(1e-12)).log10().matrix();
  const Eigen::MatrixXd a = transcoded.data.transpose(), b = ground_truth.data.transpose();
  const double lo = std::min(a.minCoeff(), b.minCoeff()), hi = std::max(a.maxCoeff(), b.maxCoeff());
  const double w = 800, h = 160, gap = 40, left = 20, top = 24;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << px(w + 2 * left) << "\" height=\""
      << px(top + 3 * (h + gap)) << "\" font-family=\"sans-serif\" shape-rendering=\"crispEdges\">\n";
  heatmap(svg, tob, tob.minCoeff(), tob.maxCoeff(), left, top, w, h, "third-octave bands");
  heatmap(svg, a, lo, hi, left, top + h + gap, w, h, "transcoded mel");
  heatmap(svg, b, lo, hi, left, top + 2 * (h + gap), w, h, "ground-truth mel");
  svg << "</svg>\n";
  return svg.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace nicu::report
