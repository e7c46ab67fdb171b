// Acceptance run. Prints one PASS/FAIL line per criterion and exits nonzero
// if any fails.
//
//   acceptance [--out DIR] [N ...]
//
// With no numbers every criterion runs. Criterion 8 reuses the models trained
// by criterion 5 when both run in one process, otherwise it loads them from
// DIR (teacher.nnck, student.nnck) or trains them.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "commands.hpp"
#include "gradcheck.hpp"
#include "nicu/classify/classify.hpp"
#include "nicu/codec/tob.hpp"
#include "nicu/corpus/synth.hpp"
#include "nicu/distill/distill.hpp"
#include "nicu/dsp/thirdoctave.hpp"
#include "nicu/mel/melspace.hpp"
#include "nicu/nn/checkpoint.hpp"
#include "nicu/report/report.hpp"
#include "nicu/util/time.hpp"
#include "oracles.hpp"

using namespace nicu;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// Collects sub-checks; the criterion passes when all of them do.
struct Verdict {
  bool ok = true;
  std::vector<std::string> notes;

  void check(bool pass, const std::string& what) {
    ok = ok && pass;
    notes.push_back((pass ? "" : "FAILED ") + what);
  }
  void note(const std::string& what) { notes.push_back(what); }
};

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path g_out = "acceptance_out";

// ---------------------------------------------------------------------------
// 1. bitrate budget

Verdict bitrate_budget() {
  Verdict v;
  const auto t0 = Clock::now();
  const auto spec = dsp::FilterbankSpec::standard();
  const auto path = g_out / "one_hour.tob";
  const std::uint64_t n_samples = 3600ull * static_cast<std::uint64_t>(spec.sample_rate_hz);
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> g(0.0, 0.05);
  std::uint64_t produced = 0;
  {
    auto w = codec::open_writer(path, codec::TobHeader::for_spec(spec, 0));
    dsp::stream_analyze(
        [&](std::span<double> buf) {
          const auto n = static_cast<std::size_t>(std::min<std::uint64_t>(buf.size(), n_samples - produced));
          for (std::size_t i = 0; i < n; ++i) buf[i] = g(rng);
          produced += n;
          return n;
        },
        spec, [&](const dsp::ThirdOctaveFrame& f) { w.append(f); });
  }
  const auto header = codec::TobHeader::for_spec(spec, 0);
  const std::uint64_t size = fs::file_size(path);
  const std::uint64_t payload = size - header.byte_size();
  const auto back = codec::read_file(path);

  v.check(back.spectrogram.size() == 28800 && back.dropped_bytes == 0,
          "frames " + std::to_string(back.spectrogram.size()) + " (28800 expected)");
  v.check(size == 142 + 28800ull * 116, "file " + std::to_string(size) + " B");
  v.check(payload == 928ull * 3600, "payload " + std::to_string(payload) + " B = 928 B/s x 3600 s");
  v.check(codec::payload_bitrate(header) == 928.0, "header bitrate " + fmt("%.1f", codec::payload_bitrate(header)));
  v.check(payload <= 3710ull * 3600, "<= 3710 B/s");
  const std::uint64_t day = header.byte_size() + 928ull * 86400;
  v.check(day <= 320'000'000ull, "day " + std::to_string(day) + " B <= 320 MB");
  const double t = seconds_since(t0);
  v.check(t < 60.0, "runtime " + fmt("%.1f s", t));
  fs::remove(path);
  return v;
}

// ---------------------------------------------------------------------------
// 2. filterbank against a direct DFT oracle

Verdict filterbank() {
  Verdict v;
  const auto t0 = Clock::now();
  const auto spec = dsp::FilterbankSpec::standard();
  std::mt19937_64 rng(77);
  double max_rel = 0.0, max_parseval = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double sigma = std::exp(std::uniform_real_distribution<double>(-8.0, 1.0)(rng));
    auto x = testing::gaussian_noise(static_cast<std::size_t>(spec.frame_samples), rng(), sigma);
    // Every fourth frame also carries a random tone.
    if (i % 4 == 0) {
      const double f = std::uniform_real_distribution<double>(20.0, 12000.0)(rng);
      const auto s = testing::sine(x.size(), f, spec.sample_rate_hz, 10 * sigma, 0.3 * i);
      for (std::size_t k = 0; k < x.size(); ++k) x[k] += s[k];
    }
    const auto got = dsp::analyze_frame(x, spec);
    const auto want = testing::naive_band_powers(x, spec.n_fft, spec.sample_rate_hz, -17, 11);
    for (std::size_t b = 0; b < want.size(); ++b) {
      max_rel = std::max(max_rel, std::abs(got.band_power[static_cast<Eigen::Index>(b)] - want[b]) / want[b]);
    }
    const double ms = testing::mean_square(x);
    max_parseval = std::max(max_parseval, std::abs(dsp::frame_power_spectrum(x, spec).sum() - ms) / ms);
  }
  v.check(max_rel <= 1e-9, "oracle max rel error " + fmt("%.3g", max_rel));
  v.check(max_parseval <= 1e-6, "Parseval rel error " + fmt("%.3g", max_parseval));

  const auto tone = testing::sine(static_cast<std::size_t>(spec.frame_samples), 1000.0, spec.sample_rate_hz);
  const auto f = dsp::analyze_frame(tone, spec);
  const double share = f.band_power[17] / f.band_power.sum();
  v.check(spec.bands[17].index == 0 && share >= 0.99, "1 kHz share in band 0 " + fmt("%.6f", share));
  const double t = seconds_since(t0);
  v.check(t < 60.0, "runtime " + fmt("%.1f s", t));
  return v;
}

// ---------------------------------------------------------------------------
// 3. real-time factor

Verdict realtime() {
  Verdict v;
  const auto spec = dsp::FilterbankSpec::standard();
  corpus::ClipRecipe r;
  r.duration_s = 60.0;
  r.seed = 31;
  r.with(corpus::SoundClass::conversation).with(corpus::SoundClass::oxygenator);
  const auto audio = corpus::synthesize(r).samples;
  const auto t0 = Clock::now();
  const auto tob = dsp::stream_analyze(audio, spec, 0);
  const double t = seconds_since(t0);
  v.check(tob.size() == 480, std::to_string(tob.size()) + " frames");
  v.check(t <= 7.5, "60 s of audio in " + fmt("%.3f s", t) + " (RTF " + fmt("%.4f", t / 60.0) + ")");
  return v;
}

// ---------------------------------------------------------------------------
// 4. gradients

Verdict gradients() {
  Verdict v;
  const auto t0 = Clock::now();
  for (auto kind : testing::kAllLayerKinds) {
    double worst = 0.0;
    Eigen::Index checked = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      std::mt19937_64 rng(seed * 7919);
      auto [layers, in] = testing::random_layer_case(kind, rng);
      auto net = nn::Network<double>::build(layers, seed);
      testing::randomize_biases(net, rng);
      const auto r = testing::gradient_check(net, testing::random_input(in, rng), rng);
      worst = std::max(worst, r.max_rel_error);
      checked += r.checked;
    }
    v.check(worst <= 1e-4, nn::to_string(kind) + " " + fmt("%.2g", worst) + " over " +
                               std::to_string(checked) + " derivatives");
  }
  const double t = seconds_since(t0);
  v.check(t < 300.0, "runtime " + fmt("%.1f s", t));
  return v;
}

// ---------------------------------------------------------------------------
// 5. distillation

struct Models {
  distill::TeacherModel teacher;
  distill::TranscoderModel student;
};
std::optional<Models> g_models;

Verdict distillation() {
  Verdict v;
  const auto t0 = Clock::now();
  const corpus::DatasetConfig dcfg;
  const auto ds = corpus::build_dataset(dcfg);
  const auto train = distill::featurize_all(ds.train);
  const auto val = distill::featurize_all(ds.val);
  const auto test = distill::featurize_all(ds.test);
  v.note("corpus " + std::to_string(train.size()) + "/" + std::to_string(val.size()) + "/" +
         std::to_string(test.size()) + " clips, featurized in " + fmt("%.0f s", seconds_since(t0)));

  const auto teacher_run = distill::train_teacher(train, val, {});
  const auto& teacher = teacher_run.model;
  distill::write_log_csv(g_out / "teacher_log.csv", teacher_run.log);
  teacher.save(g_out / "teacher.nnck");
  const double teacher_acc = distill::macro_accuracy(teacher, test);
  v.note("teacher macro accuracy (test) " + fmt("%.3f", teacher_acc));
  v.check(teacher.network.frozen(), "teacher frozen");
  const auto teacher_hash = nn::parameter_hash(teacher.network);

  const distill::DistillConfig cfg;
  const auto student0 = distill::TranscoderModel::create(cfg.hidden, distill::fit_band_norm(train),
                                                         teacher.norm, cfg.seed);
  const auto run = distill::distill_transcoder(student0, teacher, train, val, cfg);
  distill::write_log_csv(g_out / "distill_log.csv", run.log);
  run.student.save(g_out / "student.nnck");
  v.check(nn::parameter_hash(teacher.network) == teacher_hash, "teacher unchanged by distillation");

  const double ratio = run.final_loss / run.initial_loss;
  v.check(ratio <= 0.5, "(a) loss " + fmt("%.4f", run.initial_loss) + " -> " + fmt("%.4f", run.final_loss) +
                            " ratio " + fmt("%.3f", ratio));
  const auto s = distill::evaluate_student(run.student, teacher, test);
  const auto baseline = distill::LinearBaseline::fit(train);
  const auto b = distill::evaluate_baseline(baseline, teacher, test);
  v.check(s.agreement >= 0.8, "(b) held-out agreement " + fmt("%.3f", s.agreement));
  v.check(s.bce < b.bce, "(c) BCE student " + fmt("%.4f", s.bce) + " < baseline " + fmt("%.4f", b.bce));
  v.check(s.agreement > b.agreement,
          "(c) agreement student " + fmt("%.3f", s.agreement) + " > baseline " + fmt("%.3f", b.agreement));
  const double t = seconds_since(t0);
  v.check(t <= 1800.0, "runtime " + fmt("%.0f s", t));
  g_models = Models{teacher, run.student};
  return v;
}

// ---------------------------------------------------------------------------
// 6. reciprocal-rank compression

// Rank by counting: higher scores first, ties by ascending index.
std::vector<int> oracle_ranks(const Eigen::VectorXd& s) {
  std::vector<int> rank(static_cast<std::size_t>(s.size()));
  for (Eigen::Index k = 0; k < s.size(); ++k) {
    int r = 1;
    for (Eigen::Index j = 0; j < s.size(); ++j) {
      if (s[j] > s[k] || (s[j] == s[k] && j < k)) ++r;
    }
    rank[static_cast<std::size_t>(k)] = r;
  }
  return rank;
}

// Scores on a 2^-20 grid, so the transforms below stay strictly increasing
// after rounding; about one vector in three carries ties.
Eigen::VectorXd grid_scores(Eigen::Index k, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> q(1, (1 << 20) - 1);
  Eigen::VectorXd s(k);
  for (Eigen::Index i = 0; i < k; ++i) s[i] = q(rng) / 1048576.0;
  if (k > 2 && rng() % 3 == 0) s[k - 1] = s[0];
  return s;
}

Verdict reciprocal_rank() {
  Verdict v;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(527);
  long exact_fail = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const auto k = std::uniform_int_distribution<Eigen::Index>(1, 600)(rng);
    const auto s = grid_scores(k, rng);
    const auto ranks = oracle_ranks(s);
    for (double alpha : {0.5, 1.0}) {
      const auto y = classify::rank_compress(s, alpha).y;
      for (Eigen::Index i = 0; i < k; ++i) {
        const double r = ranks[static_cast<std::size_t>(i)];
        const double want = alpha == 1.0 ? 1.0 / r : std::sqrt(1.0 / r);
        if (y[i] != want) ++exact_fail;
      }
    }
  }
  v.check(exact_fail == 0, "exact (1/rank)^alpha, alpha in {0.5, 1}: " + std::to_string(exact_fail) + " mismatches");

  const std::vector<std::pair<const char*, std::function<double(double)>>> transforms = {
      {"3x+1", [](double x) { return 3.0 * x + 1.0; }},
      {"exp", [](double x) { return std::exp(x); }},
      {"x^3", [](double x) { return x * x * x; }},
      {"logit", [](double x) { return std::log(x / (1.0 - x)); }},
      {"-1/x", [](double x) { return -1.0 / x; }},
  };
  long invariance_fail = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto k = std::uniform_int_distribution<Eigen::Index>(2, 527)(rng);
    const auto s = grid_scores(k, rng);
    const double alpha = std::uniform_real_distribution<double>(0.05, 1.0)(rng);
    const auto& [name, f] = transforms[static_cast<std::size_t>(trial) % transforms.size()];
    const auto y = classify::rank_compress(s, alpha).y;
    const auto y2 = classify::rank_compress(s.unaryExpr(f), alpha).y;
    if (y != y2) ++invariance_fail;
  }
  v.check(invariance_fail == 0, "monotone invariance, 1000 vectors: " + std::to_string(invariance_fail) + " failures");

  Eigen::VectorXd s(527);
  std::uniform_real_distribution<double> u(1e-6, 1.0 - 1e-6);
  for (Eigen::Index i = 0; i < s.size(); ++i) s[i] = u(rng);
  const auto y = classify::rank_compress(s, 0.5).y;
  Eigen::Index last = 0;
  s.minCoeff(&last);
  const double err = std::abs(y[last] - std::pow(1.0 / 527.0, 0.5));
  v.check(err <= 1e-12, "K=527 last rank " + fmt("%.15f", y[last]) + " err " + fmt("%.2g", err));
  const double t = seconds_since(t0);
  v.check(t < 60.0, "runtime " + fmt("%.1f s", t));
  return v;
}

// ---------------------------------------------------------------------------
// 7. label adaptation

Verdict label_adaptation() {
  Verdict v;
  const auto t0 = Clock::now();
  // The correspondence table as published.
  const std::vector<std::pair<std::string, std::string>> table = {
      {"Conversation", "Conversation"},
      {"Footsteps", "Walk, footsteps"},
      {"Oxygenator", "Train"},
      {"Hospital phone", "Electronic music"},
  };
  const std::vector<std::string> names(std::begin(distill::kTeacherClassNames), std::end(distill::kTeacherClassNames));
  const fs::path file = fs::path(NICU_DATA_DIR) / "nicu_labels.map";
  const auto map = classify::LabelMap::load(file, names);
  std::vector<std::pair<std::string, std::string>> got;
  for (const auto& e : map.entries()) got.emplace_back(e.nicu_label, e.source_label);
  v.check(got == table, file.filename().string() + " matches the table (" + std::to_string(got.size()) + " rows)");
  v.check(classify::LabelMap::defaults(names).nicu_labels() == map.nicu_labels(), "built-in default equals the file");

  // Order preservation: for mapped labels i, j, y_i > y_j iff the source
  // score of i beats that of j.
  std::mt19937_64 rng(1000);
  long fail = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto k = std::uniform_int_distribution<Eigen::Index>(4, 527)(rng);
    const auto s = grid_scores(k, rng);
    std::vector<std::string> classes;
    for (Eigen::Index i = 0; i < k; ++i) classes.push_back("class " + std::to_string(i));
    std::vector<Eigen::Index> src(4);
    std::set<Eigen::Index> used;
    for (auto& c : src) {
      do c = std::uniform_int_distribution<Eigen::Index>(0, k - 1)(rng);
      while (!used.insert(c).second);
      classes[static_cast<std::size_t>(c)] = table[static_cast<std::size_t>(&c - src.data())].second;
    }
    std::string text;
    for (const auto& [nicu, source] : table) text += nicu + " = " + source + "\n";
    const auto m = classify::LabelMap::parse(text, classes, "trial");
    const auto a = classify::adapt_labels(classify::rank_compress(s, 0.5), m);
    const auto ranks = oracle_ranks(s);
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) {
        const bool before = ranks[static_cast<std::size_t>(src[static_cast<std::size_t>(i)])] <
                            ranks[static_cast<std::size_t>(src[static_cast<std::size_t>(j)])];
        if (before != (a[i] > a[j])) ++fail;
      }
    }
  }
  v.check(fail == 0, "order preserved on 1000 rankings: " + std::to_string(fail) + " violations");
  const double t = seconds_since(t0);
  v.check(t < 60.0, "runtime " + fmt("%.1f s", t));
  return v;
}

// ---------------------------------------------------------------------------
// 8. synthetic day

Models models_for_day(Verdict& v) {
  if (g_models) return *g_models;
  if (fs::exists(g_out / "teacher.nnck") && fs::exists(g_out / "student.nnck")) {
    v.note("models loaded from " + g_out.string());
    return {distill::TeacherModel::load(g_out / "teacher.nnck"), distill::TranscoderModel::load(g_out / "student.nnck")};
  }
  v.note("no trained models found; running criterion 5 training first");
  distillation();
  return *g_models;
}

struct Interval {
  const char* badge;
  const char* role;
  const char* enter;
  const char* exit;
};

// Badge script for 2024-03-01. All transitions fall on 3-minute bin edges.
constexpr Interval kDayScript[] = {
    {"P-01", "parent", "2024-03-01T07:30:00Z", "2024-03-01T09:00:00Z"},
    {"N-11", "professional", "2024-03-01T00:00:00Z", "2024-03-01T00:12:00Z"},
    {"N-11", "professional", "2024-03-01T03:00:00Z", "2024-03-01T03:09:00Z"},
    {"N-11", "professional", "2024-03-01T06:00:00Z", "2024-03-01T06:06:00Z"},
    {"N-12", "professional", "2024-03-01T08:00:00Z", "2024-03-01T08:30:00Z"},
    {"D-03", "professional", "2024-03-01T10:00:00Z", "2024-03-01T10:21:00Z"},
    {"N-12", "professional", "2024-03-01T10:06:00Z", "2024-03-01T10:33:00Z"},
    {"N-12", "professional", "2024-03-01T12:00:00Z", "2024-03-01T12:15:00Z"},
    {"P-01", "parent", "2024-03-01T13:00:00Z", "2024-03-01T15:30:00Z"},
    {"P-02", "parent", "2024-03-01T13:30:00Z", "2024-03-01T14:30:00Z"},
    {"N-12", "professional", "2024-03-01T15:00:00Z", "2024-03-01T15:12:00Z"},
    {"N-13", "professional", "2024-03-01T18:00:00Z", "2024-03-01T18:24:00Z"},
    {"P-02", "parent", "2024-03-01T19:00:00Z", "2024-03-01T20:00:00Z"},
    {"N-13", "professional", "2024-03-01T19:30:00Z", "2024-03-01T19:45:00Z"},
    {"N-13", "professional", "2024-03-01T21:00:00Z", "2024-03-01T21:09:00Z"},
    {"N-14", "professional", "2024-03-01T23:00:00Z", "2024-03-01T23:12:00Z"},
};

corpus::ClipRecipe day_recipe(std::uint64_t seed, std::mt19937_64& rng) {
  corpus::ClipRecipe r;
  r.seed = seed;
  r.snr_db = std::uniform_real_distribution<double>(6.0, 20.0)(rng);
  r.target_rms = std::pow(10.0, std::uniform_real_distribution<double>(-32.0, -18.0)(rng) / 20.0);
  return r;
}

Verdict synthetic_day() {
  Verdict v;
  const auto models = models_for_day(v);
  const auto t0 = Clock::now();
  const std::int64_t day_start = util::parse_iso8601("2024-03-01T00:00:00Z");
  constexpr std::size_t kBins = 480;
  constexpr double kBinS = 180.0;
  constexpr std::size_t kWindowsPerBin = 18;

  const auto badges_path = g_out / "day_badges.csv";
  {
    std::ofstream out(badges_path);
    out << "badge_id,role,enter_iso8601,exit_iso8601\n";
    for (const auto& e : kDayScript) out << e.badge << ',' << e.role << ',' << e.enter << ',' << e.exit << '\n';
  }
  const auto badges = report::parse_badges(badges_path);
  const auto occ = report::occupancy(badges, kBinS, day_start, kBins);

  // Clip pools. Seeds start far above the corpus range so no training clip
  // is reused. Conversation appears only in the first pool.
  std::mt19937_64 rng(86400);
  std::vector<corpus::ClipRecipe> talk, other;
  for (std::uint64_t i = 0; i < 24; ++i) {
    auto r = day_recipe(9'000'000 + i, rng);
    r.with(corpus::SoundClass::conversation);
    if (i % 3 == 1) r.with(corpus::SoundClass::footsteps);
    if (i % 3 == 2) r.with(corpus::SoundClass::oxygenator);
    talk.push_back(r);
  }
  for (std::uint64_t i = 0; i < 48; ++i) {
    auto r = day_recipe(9'100'000 + i, rng);
    switch (i % 6) {
      case 0: case 1: break;  // background only
      case 2: case 3: r.with(corpus::SoundClass::oxygenator); break;
      case 4: r.with(corpus::SoundClass::footsteps); break;
      default: r.with(corpus::SoundClass::alarm); break;
    }
    other.push_back(r);
  }
  const auto talk_f = distill::featurize_all(talk);
  const auto other_f = distill::featurize_all(other);

  // The day's band frames go straight into the streaming detector, one 10 s
  // clip per window.
  const classify::TranscoderScorer scorer(models.student, models.teacher);
  const auto map = classify::LabelMap::load(fs::path(NICU_DATA_DIR) / "nicu_labels.map", models.teacher.class_names);
  classify::WindowDetector det(scorer, map, day_start);
  std::size_t talk_windows = 0;
  for (std::size_t bin = 0; bin < kBins; ++bin) {
    const bool multi = occ.counts[bin] >= 2;
    for (std::size_t w = 0; w < kWindowsPerBin; ++w) {
      const auto& pool = multi ? talk_f : other_f;
      const auto& clip = pool[rng() % pool.size()];
      talk_windows += multi;
      for (Eigen::Index t = 0; t < clip.bands.cols(); ++t) det.push(clip.bands.col(t));
    }
  }
  const auto timeline = det.finish();
  const auto det_path = g_out / "day_detections.csv";
  classify::write_timeline_csv(det_path, timeline);
  v.note(std::to_string(timeline.windows.size()) + " windows, " + std::to_string(talk_windows) +
         " with conversation; detection " + fmt("%.0f s", seconds_since(t0)));
  v.check(timeline.windows.size() == kBins * kWindowsPerBin, "one detection per 10 s");

  // Report through the command, twice, into separate directories.
  std::ostringstream log;
  cli::ReportOptions ro;
  ro.detections = det_path;
  ro.badges = badges_path;
  ro.bin_s = kBinS;
  ro.out_dir = g_out / "day_report";
  const auto rep = cli::cmd_report(ro, log);
  ro.out_dir = g_out / "day_report_again";
  cli::cmd_report(ro, log);

  const auto it = std::find_if(rep.classes.begin(), rep.classes.end(),
                               [](const report::ClassAlignment& c) { return c.label == "Conversation"; });
  v.check(it != rep.classes.end() && !rep.multi_empty(),
          std::to_string(rep.n_multi) + " multi-adult bins, " + std::to_string(rep.n_other) + " other");
  if (it != rep.classes.end()) {
    v.check(it->mean_multi > it->mean_other && it->difference >= 0.1,
            "Conversation mean y multi " + fmt("%.4f", it->mean_multi) + " vs other " + fmt("%.4f", it->mean_other) +
                ", difference " + fmt("%.4f", it->difference));
  }
  for (const auto& c : rep.classes) {
    if (c.label != "Conversation") v.note(c.label + " difference " + fmt("%.4f", c.difference));
  }
  for (const char* f : {"report.csv", "timeline.svg"}) {
    const auto a = read_bytes(g_out / "day_report" / f);
    const auto b = read_bytes(g_out / "day_report_again" / f);
    v.check(!a.empty() && a == b, std::string(f) + " byte-identical across runs (" + std::to_string(a.size()) + " B)");
  }
  const auto svg = read_bytes(g_out / "day_report" / "timeline.svg");
  v.check(svg.find("multi-adult") != std::string::npos, "timeline shades multi-adult bins");

  const double t = seconds_since(t0);
  v.check(t <= 600.0, "runtime " + fmt("%.0f s", t));
  return v;
}

// ---------------------------------------------------------------------------
// 9. audit tooling

Verdict audit() {
  Verdict v;
  const auto t0 = Clock::now();
  const auto spec = dsp::FilterbankSpec::standard();
  const mel::StftConfig cfg;
  corpus::ClipRecipe r;
  r.duration_s = 2.0;
  r.seed = 4242;
  r.with(corpus::SoundClass::conversation);
  const auto tob = dsp::stream_analyze(corpus::synthesize(r).samples, spec, 0);
  const auto mag = mel::pinv_reconstruct(tob, cfg);
  const auto gl = mel::griffin_lim(mag, 60, cfg);
  std::size_t rises = 0;
  double worst = 0.0;
  for (std::size_t i = 1; i < gl.consistency.size(); ++i) {
    if (gl.consistency[i] > gl.consistency[i - 1]) {
      ++rises;
      worst = std::max(worst, gl.consistency[i] - gl.consistency[i - 1]);
    }
  }
  v.check(gl.consistency.size() == 60 && rises == 0,
          "consistency " + fmt("%.6g", gl.consistency.front()) + " -> " + fmt("%.6g", gl.consistency.back()) + ", " +
              std::to_string(rises) + " increases" + (rises ? " (largest " + fmt("%.3g", worst) + ")" : ""));

  const auto a = mel::audit_band_matrix(spec, cfg);
  const Eigen::MatrixXd a_pinv = a.completeOrthogonalDecomposition().pseudoInverse();
  const double err = (a * a_pinv * a - a).norm();
  v.check(err <= 1e-8, "||A A+ A - A||_F " + fmt("%.3g", err) + " (relative to ||A||_F " + fmt("%.3g", err / a.norm()) + ")");
  // Independent pseudoinverse from the SVD.
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd sv = svd.singularValues();
  const double tol = sv.maxCoeff() * 1e-12;
  const Eigen::VectorXd inv = sv.unaryExpr([tol](double s) { return s > tol ? 1.0 / s : 0.0; });
  const Eigen::MatrixXd svd_pinv = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
  const double diff = (svd_pinv - a_pinv).norm() / svd_pinv.norm();
  v.check(diff <= 1e-8, "pseudoinverse agrees with SVD oracle, rel " + fmt("%.3g", diff));
  const double t = seconds_since(t0);
  v.check(t < 120.0, "runtime " + fmt("%.1f s", t));
  return v;
}

// ---------------------------------------------------------------------------
// 10. codec round trip

float random_power(std::mt19937_64& rng) {
  switch (rng() % 8) {
    case 0: return std::bit_cast<float>(static_cast<std::uint32_t>(rng() % 0x007fffffu) + 1u);  // subnormal
    case 1: return std::numeric_limits<float>::denorm_min();
    case 2: return std::numeric_limits<float>::min();
    case 3: return 0.0f;
    case 4: return std::numeric_limits<float>::max();
    default: return std::bit_cast<float>(static_cast<std::uint32_t>(rng() % 0x7f7fffffu));
  }
}

bool frames_equal(const std::vector<Eigen::VectorXf>& want, const dsp::ThirdOctaveSpectrogram& got, std::size_t n) {
  if (got.size() != n) return false;
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::VectorXf f = got.frames[i].band_power.cast<float>();
    if (std::memcmp(f.data(), want[i].data(), sizeof(float) * static_cast<std::size_t>(f.size())) != 0) return false;
  }
  return true;
}

Verdict codec_round_trip() {
  Verdict v;
  const auto t0 = Clock::now();
  const auto spec = dsp::FilterbankSpec::standard();
  const auto header = codec::TobHeader::for_spec(spec, 1'709'251'200'000ull);
  std::mt19937_64 rng(10000);
  std::vector<Eigen::VectorXf> frames(10000, Eigen::VectorXf(29));
  std::size_t subnormals = 0;
  for (auto& f : frames) {
    for (Eigen::Index b = 0; b < f.size(); ++b) {
      f[b] = random_power(rng);
      subnormals += std::fpclassify(f[b]) == FP_SUBNORMAL;
    }
  }
  const auto path = g_out / "round_trip.tob";
  {
    auto w = codec::open_writer(path, header);
    for (const auto& f : frames) w.append(f);
  }
  const auto back = codec::read_file(path);
  v.check(frames_equal(frames, back.spectrogram, frames.size()) && back.dropped_bytes == 0,
          "10000 frames bit-exact, " + std::to_string(subnormals) + " subnormal values");

  // Cut the file inside frame 6000.
  const std::uint64_t full = header.byte_size() + 6000ull * header.frame_bytes();
  fs::resize_file(path, full + 57);
  const auto torn = codec::read_file(path);
  v.check(frames_equal(frames, torn.spectrogram, 6000) && torn.dropped_bytes == 57,
          "torn file: " + std::to_string(torn.spectrogram.size()) + " frames recovered, " +
              std::to_string(torn.dropped_bytes) + " B dropped");
  fs::remove(path);
  const double t = seconds_since(t0);
  v.check(t < 60.0, "runtime " + fmt("%.1f s", t));
  return v;
}

struct Criterion {
  int id;
  const char* title;
  Verdict (*run)();
};

constexpr Criterion kCriteria[] = {
    {1, "bitrate budget", bitrate_budget},
    {2, "filterbank correctness", filterbank},
    {3, "real-time analysis", realtime},
    {4, "gradient correctness", gradients},
    {5, "distillation effectiveness", distillation},
    {6, "reciprocal-rank compression", reciprocal_rank},
    {7, "label adaptation", label_adaptation},
    {8, "synthetic day alignment", synthetic_day},
    {9, "privacy audit tooling", audit},
    {10, "codec round trip", codec_round_trip},
};

}  // namespace

int main(int argc, char** argv) {
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--out" && i + 1 < argc) {
      g_out = argv[++i];
    } else {
      wanted.insert(std::stoi(a));
    }
  }
  fs::create_directories(g_out);

  int failed = 0;
  for (const auto& c : kCriteria) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& ex) {
      v.check(false, std::string("exception: ") + ex.what());
    }
    for (const auto& n : v.notes) std::cout << "    " << n << '\n';
    std::cout << "CRITERION " << c.id << ' ' << (v.ok ? "PASS" : "FAIL") << ": " << c.title << '\n' << std::flush;
    failed += !v.ok;
  }
  return failed == 0 ? 0 : 1;
}
