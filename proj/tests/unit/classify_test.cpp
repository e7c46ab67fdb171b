#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "nicu/classify/classify.hpp"
#include "nicu/util/csv.hpp"
#include "nicu/util/time.hpp"

using namespace nicu;
using classify::LabelMap;

namespace {

const std::vector<std::string> kClasses(std::begin(distill::kTeacherClassNames),
                                        std::end(distill::kTeacherClassNames));

// Independent rank: 1 + number of classes that beat k (higher score, or equal
// score and lower index).
Eigen::VectorXd oracle_rank_compress(const Eigen::VectorXd& s, double alpha) {
  Eigen::VectorXd y(s.size());
  for (Eigen::Index k = 0; k < s.size(); ++k) {
    int rank = 1;
    for (Eigen::Index j = 0; j < s.size(); ++j) rank += (s[j] > s[k]) || (s[j] == s[k] && j < k);
    y[k] = std::pow(1.0 / rank, alpha);
  }
  return y;
}

// Scores by a fixed lookup on the mean band power of the window.
class FakeScorer : public classify::Scorer {
 public:
  const std::vector<std::string>& class_names() const override { return kClasses; }
  Eigen::VectorXd score(const distill::BandMatrix& w, std::int64_t) const override {
    const double m = w.cast<double>().mean();
    return Eigen::Vector4d(0.1 + 0.1 * m, 0.2, 0.3, 0.05);
  }
};

dsp::ThirdOctaveSpectrogram stream(int frames, std::int64_t start_ms = 0) {
  dsp::ThirdOctaveSpectrogram t;
  t.spec = dsp::FilterbankSpec::standard();
  t.start_time_ms = start_ms;
  for (int i = 0; i < frames; ++i) t.frames.push_back({Eigen::VectorXd::Constant(29, (i / 80) % 7), i});
  return t;
}

std::filesystem::path temp_file(const std::string& name, const std::string& text) {
  const auto p = std::filesystem::temp_directory_path() / name;
  std::ofstream(p, std::ios::binary) << text;
  return p;
}

}  // namespace

TEST(RankCompress, WorkedExample) {
  const auto r = classify::rank_compress(Eigen::Vector3d(0.9, 0.1, 0.5), 0.5);
  EXPECT_NEAR(r.y[0], 1.0, 1e-12);
  EXPECT_NEAR(r.y[1], 0.57735, 1e-5);
  EXPECT_NEAR(r.y[2], 0.70711, 1e-5);
}

TEST(RankCompress, MatchesOracleWithTies) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> level(0, 4);
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::VectorXd s(1 + trial % 12);
    for (auto& v : s) v = 0.1 * level(rng) + 0.05;
    for (double alpha : {0.25, 0.5, 1.0}) {
      const auto got = classify::rank_compress(s, alpha).y;
      EXPECT_EQ(got, oracle_rank_compress(s, alpha));
    }
  }
}

TEST(RankCompress, PermutationOfReciprocalRanks) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.001, 0.999);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::VectorXd s(527);
    for (auto& v : s) v = u(rng);
    auto y = classify::rank_compress(s, 0.5).y;
    std::sort(y.begin(), y.end(), std::greater<>());
    for (Eigen::Index r = 0; r < y.size(); ++r) EXPECT_EQ(y[r], std::pow(1.0 / (r + 1), 0.5));
    EXPECT_EQ(y[0], 1.0);
  }
}

TEST(RankCompress, SmallerAlphaCompressesTowardOne) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::VectorXd s(30);
  for (auto& v : s) v = u(rng);
  const auto a = classify::rank_compress(s, 0.3).y, b = classify::rank_compress(s, 0.8).y;
  EXPECT_TRUE((a.array() >= b.array()).all());
}

TEST(RankCompress, Errors) {
  EXPECT_THROW(classify::rank_compress(Eigen::VectorXd(), 0.5), std::invalid_argument);
  EXPECT_THROW(classify::rank_compress(Eigen::Vector2d(0.1, 0.2), 0.0), std::invalid_argument);
  EXPECT_THROW(classify::rank_compress(Eigen::Vector2d(0.1, 0.2), 1.5), std::invalid_argument);
  EXPECT_THROW(classify::rank_compress(Eigen::Vector2d(0.1, NAN), 0.5), std::invalid_argument);
}

TEST(LabelMap, DataFileMatchesDefault) {
  const auto m = LabelMap::load(NICU_DATA_DIR "/nicu_labels.map", kClasses);
  const auto& def = LabelMap::default_pairs();
  ASSERT_EQ(m.size(), def.size());
  for (std::size_t i = 0; i < def.size(); ++i) {
    EXPECT_EQ(m.entries()[i].nicu_label, def[i].first);
    EXPECT_EQ(m.entries()[i].source_label, def[i].second);
  }
  EXPECT_EQ(m.entries()[2].source_index, 2);
}

TEST(LabelMap, ParseRulesAndErrors) {
  const auto m = LabelMap::parse("# c\n\n  Talk =  Conversation  # trailing\n", kClasses);
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m.entries()[0].nicu_label, "Talk");
  EXPECT_TRUE(LabelMap::parse("", kClasses).empty());
  EXPECT_THROW(LabelMap::parse("X = Dog bark\n", kClasses), std::invalid_argument);
  EXPECT_THROW(LabelMap::parse("X = Train\nX = Conversation\n", kClasses), std::invalid_argument);
  EXPECT_THROW(LabelMap::parse("no equals sign\n", kClasses), std::invalid_argument);
}

TEST(AdaptLabels, CompositionAndEmptyMap) {
  const auto m = LabelMap::defaults(kClasses);
  const auto r = classify::rank_compress(Eigen::Vector4d(0.2, 0.1, 0.9, 0.3), 0.5);
  const auto v = classify::adapt_labels(r, m);
  EXPECT_EQ(v[2], 1.0);  // Oxygenator <- Train at rank 1
  EXPECT_EQ(classify::adapt_labels(r, LabelMap::parse("", kClasses)).size(), 0);
}

TEST(AdaptLabels, PreservesOrder) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto m = LabelMap::defaults(kClasses);
  for (int trial = 0; trial < 1000; ++trial) {
    Eigen::Vector4d s;
    for (auto& v : s) v = u(rng);
    const auto y = classify::adapt_labels(classify::rank_compress(s, 0.5), m);
    for (std::size_t a = 0; a < m.size(); ++a) {
      for (std::size_t b = 0; b < m.size(); ++b) {
        const auto sa = m.entries()[a].source_index, sb = m.entries()[b].source_index;
        if (s[sa] > s[sb]) EXPECT_GT(y[static_cast<Eigen::Index>(a)], y[static_cast<Eigen::Index>(b)]);
      }
    }
  }
}

TEST(DetectStream, Tiling) {
  FakeScorer scorer;
  const auto m = LabelMap::defaults(kClasses);
  EXPECT_EQ(classify::detect_stream(stream(480), scorer, m).windows.size(), 6u);
  const auto t = classify::detect_stream(stream(520, 5000), scorer, m);
  ASSERT_EQ(t.windows.size(), 6u);
  for (std::size_t i = 0; i < t.windows.size(); ++i) {
    EXPECT_EQ(t.windows[i].start_ms, 5000 + 10000 * static_cast<std::int64_t>(i));
  }
  EXPECT_EQ(t.nicu_labels, m.nicu_labels());
  EXPECT_THROW(classify::detect_stream(stream(79), scorer, m), std::invalid_argument);
}

TEST(DetectStream, StreamingMatchesBatch) {
  FakeScorer scorer;
  const auto m = LabelMap::defaults(kClasses);
  const auto tob = stream(400);
  const auto a = classify::detect_stream(tob, scorer, m);
  classify::WindowDetector det(scorer, m, 0);
  for (const auto& f : tob.frames) det.push(f.band_power.cast<float>());
  const auto b = det.finish();
  ASSERT_EQ(a.windows.size(), b.windows.size());
  for (std::size_t i = 0; i < a.windows.size(); ++i) EXPECT_EQ(a.windows[i].y, b.windows[i].y);
}

TEST(TimelineCsv, RoundTripIsExact) {
  FakeScorer scorer;
  const auto t = classify::detect_stream(stream(240, 1'700'000'000'000), scorer, LabelMap::defaults(kClasses));
  const auto path = std::filesystem::temp_directory_path() / "nicu_timeline.csv";
  classify::write_timeline_csv(path, t);
  const auto back = classify::read_timeline_csv(path);
  EXPECT_EQ(back.nicu_labels, t.nicu_labels);
  ASSERT_EQ(back.windows.size(), t.windows.size());
  for (std::size_t i = 0; i < t.windows.size(); ++i) {
    EXPECT_EQ(back.windows[i].start_ms, t.windows[i].start_ms);
    EXPECT_EQ(back.windows[i].y, t.windows[i].y);
    EXPECT_EQ(back.windows[i].score, t.windows[i].score);
  }
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "window_start_iso8601,nicu_label,y,score");
}

TEST(ExternalScores, ParseAndErrors) {
  const std::string head = "window_start_iso8601,Conversation,\"Walk, footsteps\",Train,Electronic music\n";
  const auto ok = classify::import_external_scores(temp_file(
      "nicu_ext_ok.csv", head + "2024-03-01T00:00:00Z,0.9,0.1,0.2,0.3\n2024-03-01T00:00:10Z,0.5,0.6,0.7,0.8\n"));
  ASSERT_EQ(ok.size(), 2u);
  EXPECT_EQ(ok[0].class_names[1], "Walk, footsteps");
  EXPECT_EQ(ok[1].window_start_ms - ok[0].window_start_ms, 10000);

  try {
    classify::parse_external_scores(head + "2024-03-01T00:00:00Z,0.9,1.5,0.2,0.3\n", "s.csv");
    FAIL() << "expected a parse error";
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("s.csv:2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("column 3"), std::string::npos) << msg;
  }
  EXPECT_THROW(classify::parse_external_scores(head + "2024-03-01T00:00:00Z,0.9,0.1\n", "s"), std::invalid_argument);
  EXPECT_THROW(classify::parse_external_scores(head + "2024-03-01T00:00:00Z,a,0.1,0.2,0.3\n", "s"),
               std::invalid_argument);
  EXPECT_THROW(classify::parse_external_scores("time,A\n", "s"), std::invalid_argument);
}

TEST(ExternalScores, DriveDetection) {
  std::ostringstream csv;
  csv << "window_start_iso8601,Conversation,\"Walk, footsteps\",Train,Electronic music\n";
  for (int w = 0; w < 3; ++w) csv << util::format_iso8601(w * 10000) << ",0.9,0.2,0.3,0." << (w + 1) << "\n";
  classify::ExternalScorer ext(classify::parse_external_scores(csv.str(), "mem"));
  const auto t = classify::detect_stream(stream(240), ext, LabelMap::defaults(ext.class_names()));
  ASSERT_EQ(t.windows.size(), 3u);
  EXPECT_EQ(t.windows[0].y[0], 1.0);
  EXPECT_EQ(t.windows[2].score[3], 0.3);
  EXPECT_THROW(classify::detect_stream(stream(320), ext, LabelMap::defaults(ext.class_names())),
               std::runtime_error);
}

TEST(Util, Iso8601RoundTrip) {
  for (std::int64_t t : {0LL, 1'700'000'000'000LL, 1'700'000'000'123LL, 951'782'400'000LL}) {
    EXPECT_EQ(util::parse_iso8601(util::format_iso8601(t)), t);
  }
  EXPECT_EQ(util::format_iso8601(0), "1970-01-01T00:00:00Z");
  EXPECT_EQ(util::format_iso8601(951'782'400'500), "2000-02-29T00:00:00.500Z");
  EXPECT_THROW(util::parse_iso8601("2023-02-29T00:00:00Z"), std::invalid_argument);
  EXPECT_THROW(util::parse_iso8601("2023-01-01 00:00:00"), std::invalid_argument);
}

TEST(Util, CsvQuoting) {
  EXPECT_EQ(util::split_csv("a,\"b, c\",\"d\"\"e\""), (std::vector<std::string>{"a", "b, c", "d\"e"}));
  EXPECT_EQ(util::split_csv(util::csv_cell("x,\"y\"")), (std::vector<std::string>{"x,\"y\""}));
  EXPECT_THROW(util::split_csv("\"open"), std::invalid_argument);
}
