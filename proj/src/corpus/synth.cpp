#include "nicu/corpus/synth.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <stdexcept>

#include <unsupported/Eigen/FFT>

namespace nicu::corpus {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::uint64_t subseed(std::uint64_t seed, std::uint64_t tag) { return splitmix64(seed ^ splitmix64(tag)); }

void normalize_rms(std::vector<double>& x, double target = 1.0) {
  const double r = rms(x);
  if (r <= 0.0) return;
  const double g = target / r;
  for (auto& v : x) v *= g;
}

std::vector<double> white(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> x(n);
  for (auto& v : x) v = g(rng);
  return x;
}

// Shapes the spectrum of x by gain(f) through one whole-signal FFT.
template <typename Gain>
std::vector<double> spectral_shape(const std::vector<double>& x, int sample_rate_hz, Gain gain) {
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, x);
  const double hz = static_cast<double>(sample_rate_hz) / static_cast<double>(x.size());
  for (std::size_t k = 0; k < spec.size(); ++k) spec[k] *= gain(static_cast<double>(k) * hz);
  std::vector<double> out;
  fft.inv(out, spec, static_cast<Eigen::Index>(x.size()));
  return out;
}

std::vector<double> band_noise(std::size_t n, int sr, double lo, double hi, std::mt19937_64& rng) {
  auto x = spectral_shape(white(n, rng), sr, [=](double f) { return (f >= lo && f <= hi) ? 1.0 : 0.0; });
  normalize_rms(x);
  return x;
}

}  // namespace

std::string_view class_name(SoundClass c) {
  switch (c) {
    case SoundClass::conversation: return "conversation";
    case SoundClass::footsteps: return "footsteps";
    case SoundClass::oxygenator: return "oxygenator";
    case SoundClass::alarm: return "alarm";
  }
  return "unknown";
}

Eigen::Vector4d ClipRecipe::target() const {
  Eigen::Vector4d t;
  for (int i = 0; i < kNumClasses; ++i) t[i] = classes[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
  return t;
}

double rms(const std::vector<double>& x) {
  if (x.empty()) return 0.0;
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return std::sqrt(acc / static_cast<double>(x.size()));
}

std::vector<double> pink_noise(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  // 1/f power above 10 Hz, flat below, no DC. Rate-independent in shape.
  auto x = spectral_shape(white(n, rng), 32000, [](double f) {
    if (f == 0.0) return 0.0;
    return 1.0 / std::sqrt(std::max(f, 10.0));
  });
  normalize_rms(x);
  return x;
}

std::vector<double> conversation(std::size_t n, int sr, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto x = band_noise(n, sr, 300.0, 3000.0, rng);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double rate = 3.0 + 2.0 * u(rng);
  double phase = kTwoPi * u(rng);
  // Utterances of 1.5-4 s separated by 0.3-1.2 s pauses.
  std::vector<double> gate(n, 0.0);
  double t = 0.3 * u(rng);
  while (t * sr < static_cast<double>(n)) {
    const double len = 1.5 + 2.5 * u(rng);
    const auto a = static_cast<std::size_t>(t * sr);
    const auto b = std::min(n, static_cast<std::size_t>((t + len) * sr));
    for (std::size_t i = a; i < b; ++i) gate[i] = 1.0;
    t += len + 0.3 + 0.9 * u(rng);
  }
  const double dphi = kTwoPi * rate / sr;
  for (std::size_t i = 0; i < n; ++i, phase += dphi) {
    const double s = std::max(0.0, std::sin(phase));
    x[i] *= gate[i] * s * std::sqrt(s);
  }
  normalize_rms(x);
  return x;
}

std::vector<double> footsteps(std::size_t n, int sr, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  const double rate = 1.5 + u(rng);
  std::vector<double> x(n, 0.0);
  for (double t = u(rng) / rate; t * sr < static_cast<double>(n); t += 1.0 / rate) {
    const double onset = std::max(0.0, t + 0.06 * (u(rng) - 0.5));
    const double tau = 0.015 + 0.025 * u(rng);
    const double amp = 0.6 + 0.4 * u(rng);
    const double thump_hz = 60.0 + 40.0 * u(rng);
    const auto a = static_cast<std::size_t>(onset * sr);
    const auto len = static_cast<std::size_t>(6.0 * tau * sr);
    for (std::size_t i = 0; i < len && a + i < n; ++i) {
      const double s = static_cast<double>(i) / sr;
      const double env = amp * std::exp(-s / tau);
      x[a + i] += env * (g(rng) + 1.5 * std::sin(kTwoPi * thump_hz * s));
    }
  }
  normalize_rms(x);
  return x;
}

std::vector<double> oxygenator(std::size_t n, int sr, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double f0 = 50.0 + 70.0 * u(rng);
  std::vector<double> hum(n, 0.0);
  for (int k = 1; k <= 10; ++k) {
    const double f = f0 * k;
    if (f >= 0.45 * sr) break;
    const double phase = kTwoPi * u(rng);
    const double w = kTwoPi * f / sr;
    for (std::size_t i = 0; i < n; ++i) hum[i] += std::sin(w * static_cast<double>(i) + phase) / k;
  }
  normalize_rms(hum);
  const auto pedestal = band_noise(n, sr, 100.0, 2000.0, rng);
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = hum[i] + 0.5 * pedestal[i];
  normalize_rms(x);
  return x;
}

std::vector<double> alarm(std::size_t n, int sr, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int notes = 2 + static_cast<int>(u(rng) * 3.0);
  std::vector<double> freq(static_cast<std::size_t>(notes));
  for (auto& f : freq) f = 1000.0 + 3000.0 * u(rng);
  const double note_s = 0.12 + 0.13 * u(rng);
  const double gap_s = 0.05;
  const double period_s = std::max(0.8 + 0.8 * u(rng), notes * (note_s + gap_s) + 0.2);
  const auto ramp = static_cast<std::size_t>(0.005 * sr);
  std::vector<double> x(n, 0.0);
  for (double t = u(rng) * period_s; t * sr < static_cast<double>(n); t += period_s) {
    for (int k = 0; k < notes; ++k) {
      const auto a = static_cast<std::size_t>((t + k * (note_s + gap_s)) * sr);
      const auto len = static_cast<std::size_t>(note_s * sr);
      const double w = kTwoPi * freq[static_cast<std::size_t>(k)] / sr;
      for (std::size_t i = 0; i < len && a + i < n; ++i) {
        double env = 1.0;
        if (i < ramp) env = 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(i) / ramp);
        if (len - i <= ramp) env = 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(len - i) / ramp);
        x[a + i] += env * std::sin(w * static_cast<double>(i));
      }
    }
  }
  normalize_rms(x);
  return x;
}

Clip synthesize(const ClipRecipe& r) {
  if (r.sample_rate_hz <= 0 || !(r.duration_s > 0.0) || !(r.target_rms >= 0.0)) {
    throw std::invalid_argument("synthesize: invalid recipe");
  }
  const auto n = static_cast<std::size_t>(std::llround(r.duration_s * r.sample_rate_hz));
  Clip clip{std::vector<double>(n, 0.0), r.target()};
  if (r.target_rms == 0.0) return clip;

  std::vector<double> events(n, 0.0);
  bool any = false;
  using Source = std::vector<double> (*)(std::size_t, int, std::uint64_t);
  constexpr Source sources[kNumClasses] = {conversation, footsteps, oxygenator, alarm};
  for (int c = 0; c < kNumClasses; ++c) {
    if (!r.classes[static_cast<std::size_t>(c)]) continue;
    const auto s = sources[c](n, r.sample_rate_hz, subseed(r.seed, static_cast<std::uint64_t>(c) + 1));
    for (std::size_t i = 0; i < n; ++i) events[i] += s[i];
    any = true;
  }
  const auto bg = pink_noise(n, subseed(r.seed, 0));
  const double bg_gain = any ? rms(events) * std::pow(10.0, -r.snr_db / 20.0) : 1.0;
  for (std::size_t i = 0; i < n; ++i) clip.samples[i] = events[i] + bg_gain * bg[i];
  normalize_rms(clip.samples, r.target_rms);
  return clip;
}

Dataset build_dataset(const DatasetConfig& cfg) {
  if (cfg.n_per_class < 1) throw std::invalid_argument("build_dataset: n_per_class must be >= 1");
  if (cfg.n_mixtures < 0 || cfg.n_background < 0 || cfg.n_silent < 0) {
    throw std::invalid_argument("build_dataset: negative group size");
  }
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> snr(cfg.snr_db_min, cfg.snr_db_max);
  std::uniform_real_distribution<double> level(cfg.level_dbfs_min, cfg.level_dbfs_max);
  std::uint64_t index = 0;
  auto next = [&]() {
    ClipRecipe r;
    r.seed = (cfg.seed << 24) + index++;
    r.snr_db = snr(rng);
    r.target_rms = std::pow(10.0, level(rng) / 20.0);
    return r;
  };

  std::vector<std::vector<ClipRecipe>> groups;
  for (auto c : kAllClasses) {
    auto& g = groups.emplace_back();
    for (int i = 0; i < cfg.n_per_class; ++i) g.push_back(next().with(c));
  }
  {
    auto& g = groups.emplace_back();
    for (int i = 0; i < cfg.n_mixtures; ++i) {
      ClipRecipe r = next();
      std::array<int, kNumClasses> order = {0, 1, 2, 3};
      std::shuffle(order.begin(), order.end(), rng);
      const int k = std::bernoulli_distribution(0.7)(rng) ? 2 : 3;
      for (int j = 0; j < k; ++j) r.with(static_cast<SoundClass>(order[static_cast<std::size_t>(j)]));
      g.push_back(r);
    }
  }
  {
    auto& g = groups.emplace_back();
    for (int i = 0; i < cfg.n_background; ++i) g.push_back(next());
  }
  {
    auto& g = groups.emplace_back();
    for (int i = 0; i < cfg.n_silent; ++i) {
      ClipRecipe r = next();
      r.target_rms = 0.0;
      g.push_back(r);
    }
  }

  Dataset d;
  for (auto& g : groups) {
    std::shuffle(g.begin(), g.end(), rng);
    const auto n = g.size();
    const auto n_train = static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(n)));
    const auto n_val = std::min(n - n_train, static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(n))));
    d.train.insert(d.train.end(), g.begin(), g.begin() + static_cast<std::ptrdiff_t>(n_train));
    d.val.insert(d.val.end(), g.begin() + static_cast<std::ptrdiff_t>(n_train),
                 g.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    d.test.insert(d.test.end(), g.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), g.end());
  }
  return d;
}

}  // namespace nicu::corpus
