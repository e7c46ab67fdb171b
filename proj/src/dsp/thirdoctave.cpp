#include "nicu/dsp/thirdoctave.hpp"

#include <array>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>

#include <unsupported/Eigen/FFT>

namespace nicu::dsp {

namespace {

// Preferred-number mantissas for b mod 10, starting at b = 0 (1 kHz).
constexpr std::array<double, 10> kNominalMantissa = {
    1.0, 1.25, 1.6, 2.0, 2.5, 3.15, 4.0, 5.0, 6.3, 8.0};

// Band numbers considered by design_bands: nominal 1 Hz .. 800 kHz.
constexpr int kMinBandIndex = -30;
constexpr int kMaxBandIndex = 29;

int floor_div(int a, int b) {
  int q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

Eigen::FFT<double>& thread_fft() {
  thread_local Eigen::FFT<double> fft = [] {
    Eigen::FFT<double> f;
    f.SetFlag(Eigen::FFT<double>::HalfSpectrum);
    return f;
  }();
  return fft;
}

}  // namespace

double band_center_hz(int index) {
  return 1000.0 * std::pow(10.0, index / 10.0);
}

double band_upper_edge_hz(int index) {
  return 1000.0 * std::pow(10.0, (2 * index + 1) / 20.0);
}

double nominal_center_hz(int index) {
  const int decade = floor_div(index, 10);
  const int slot = index - 10 * decade;
  const double mantissa = kNominalMantissa[static_cast<std::size_t>(slot)];
  // Round to 3 significant digits to undo pow() noise, e.g. 31.5 not 31.4999.
  const double value = mantissa * 1000.0 * std::pow(10.0, decade);
  const double scale = std::pow(10.0, std::floor(std::log10(value)) - 2);
  return std::round(value / scale) * scale;
}

std::vector<BandDefinition> design_bands(double fmin_hz, double fmax_hz) {
  if (!(fmin_hz > 0.0) || !(fmin_hz <= fmax_hz) || !std::isfinite(fmax_hz)) {
    throw std::invalid_argument("design_bands: need 0 < fmin <= fmax, got [" +
                                std::to_string(fmin_hz) + ", " +
                                std::to_string(fmax_hz) + "]");
  }
  std::vector<BandDefinition> bands;
  for (int b = kMinBandIndex; b <= kMaxBandIndex; ++b) {
    const double nominal = nominal_center_hz(b);
    if (nominal < fmin_hz || nominal > fmax_hz) continue;
    bands.push_back({b, band_center_hz(b), band_upper_edge_hz(b - 1),
                     band_upper_edge_hz(b), nominal});
  }
  if (bands.empty()) {
    throw std::invalid_argument("design_bands: no band center in range");
  }
  return bands;
}

FilterbankSpec FilterbankSpec::standard() {
  FilterbankSpec spec;
  spec.bands = design_bands(20.0, 12500.0);
  spec.validate();
  return spec;
}

void FilterbankSpec::validate() const {
  if (sample_rate_hz <= 0 || frame_samples <= 0) {
    throw std::invalid_argument("filterbank: non-positive rate or frame");
  }
  if (frame_samples * 8 != sample_rate_hz) {
    throw std::invalid_argument("filterbank: frame must be exactly 125 ms");
  }
  if (n_fft < frame_samples || n_fft % 2 != 0) {
    throw std::invalid_argument("filterbank: n_fft must be even and >= frame");
  }
  if (bands.empty()) throw std::invalid_argument("filterbank: no bands");
  for (std::size_t i = 0; i < bands.size(); ++i) {
    const auto& band = bands[i];
    if (!(band.lo_hz < band.center_hz && band.center_hz < band.hi_hz)) {
      throw std::invalid_argument("filterbank: band edges out of order");
    }
    if (i > 0 && bands[i - 1].hi_hz != band.lo_hz) {
      throw std::invalid_argument("filterbank: bands do not tile");
    }
  }
  if (!(bands.back().hi_hz < sample_rate_hz / 2.0)) {
    throw std::invalid_argument("filterbank: top band exceeds Nyquist");
  }
}

std::vector<int> FilterbankSpec::bin_bands() const {
  std::vector<int> owner(static_cast<std::size_t>(n_bins()), -1);
  const double hz_per_bin = static_cast<double>(sample_rate_hz) / n_fft;
  std::size_t band = 0;
  for (int k = 0; k < n_bins(); ++k) {
    const double f = k * hz_per_bin;
    while (band < bands.size() && f >= bands[band].hi_hz) ++band;
    if (band == bands.size()) break;
    // Half-open [lo, hi) so a bin on a shared edge belongs to one band only.
    if (f >= bands[band].lo_hz) owner[static_cast<std::size_t>(k)] = static_cast<int>(band);
  }
  return owner;
}

Eigen::MatrixXd FilterbankSpec::band_matrix() const {
  const auto owner = bin_bands();
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_bands()), n_bins());
  const double base = 1.0 / (static_cast<double>(frame_samples) * n_fft);
  for (int k = 0; k < n_bins(); ++k) {
    const int b = owner[static_cast<std::size_t>(k)];
    if (b < 0) continue;
    const bool edge = (k == 0 || k == n_fft / 2);
    a(b, k) = edge ? base : 2.0 * base;
  }
  return a;
}

Eigen::MatrixXd ThirdOctaveSpectrogram::matrix() const {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(spec.n_bands()),
                    static_cast<Eigen::Index>(frames.size()));
  for (std::size_t t = 0; t < frames.size(); ++t) {
    m.col(static_cast<Eigen::Index>(t)) = frames[t].band_power;
  }
  return m;
}

void ThirdOctaveSpectrogram::validate() const {
  for (std::size_t t = 1; t < frames.size(); ++t) {
    if (frames[t].frame_index != frames[t - 1].frame_index + 1) {
      throw std::invalid_argument("spectrogram: frames are not contiguous");
    }
  }
  for (const auto& frame : frames) {
    if (frame.band_power.size() != static_cast<Eigen::Index>(spec.n_bands())) {
      throw std::invalid_argument("spectrogram: band count mismatch");
    }
  }
}

ThirdOctaveSpectrogram slice(const ThirdOctaveSpectrogram& tob,
                             std::size_t first, std::size_t count) {
  if (first + count > tob.frames.size()) {
    throw std::out_of_range("slice: range past end of spectrogram");
  }
  ThirdOctaveSpectrogram out;
  out.spec = tob.spec;
  const auto frame_ms = static_cast<std::int64_t>(tob.spec.frame_seconds() * 1000.0);
  out.start_time_ms = tob.start_time_ms + static_cast<std::int64_t>(first) * frame_ms;
  out.frames.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.frames.push_back({tob.frames[first + i].band_power, static_cast<std::int64_t>(i)});
  }
  return out;
}

Eigen::VectorXd frame_power_spectrum(std::span<const double> samples,
                                     const FilterbankSpec& spec) {
  if (samples.size() != static_cast<std::size_t>(spec.frame_samples)) {
    throw std::invalid_argument("analyze_frame: expected " +
                                std::to_string(spec.frame_samples) +
                                " samples, got " + std::to_string(samples.size()));
  }
  std::vector<double> padded(static_cast<std::size_t>(spec.n_fft), 0.0);
  for (std::size_t n = 0; n < samples.size(); ++n) {
    if (!std::isfinite(samples[n])) {
      throw std::invalid_argument("analyze_frame: non-finite sample at " +
                                  std::to_string(n));
    }
    padded[n] = samples[n];
  }
  std::vector<std::complex<double>> spectrum;
  thread_fft().fwd(spectrum, padded);

  const double base = 1.0 / (static_cast<double>(spec.frame_samples) * spec.n_fft);
  Eigen::VectorXd power(spec.n_bins());
  for (int k = 0; k < spec.n_bins(); ++k) {
    const bool edge = (k == 0 || k == spec.n_fft / 2);
    power(k) = std::norm(spectrum[static_cast<std::size_t>(k)]) * (edge ? base : 2.0 * base);
  }
  return power;
}

ThirdOctaveFrame analyze_frame(std::span<const double> samples,
                               const FilterbankSpec& spec,
                               std::int64_t frame_index) {
  const Eigen::VectorXd power = frame_power_spectrum(samples, spec);
  const auto owner = spec.bin_bands();

  ThirdOctaveFrame frame;
  frame.frame_index = frame_index;
  frame.band_power = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(spec.n_bands()));
  for (int k = 0; k < spec.n_bins(); ++k) {
    const int b = owner[static_cast<std::size_t>(k)];
    if (b >= 0) frame.band_power(b) += power(k);
  }
  return frame;
}

Eigen::VectorXd to_db(const ThirdOctaveFrame& frame, double floor_db) {
  return frame.band_power.unaryExpr([floor_db](double p) {
    if (!(p > 0.0)) return floor_db;
    return std::max(10.0 * std::log10(p), floor_db);
  });
}

StreamAnalyzer::StreamAnalyzer(FilterbankSpec spec)
    : spec_(std::move(spec)),
      buffer_(static_cast<std::size_t>(spec_.frame_samples), 0.0) {
  spec_.validate();
}

std::vector<ThirdOctaveFrame> StreamAnalyzer::feed(std::span<const double> samples) {
  std::vector<ThirdOctaveFrame> frames;
  feed(samples, [&frames](ThirdOctaveFrame f) { frames.push_back(std::move(f)); });
  return frames;
}

void stream_analyze(const SampleSource& source, const FilterbankSpec& spec,
                    const std::function<void(ThirdOctaveFrame)>& on_frame) {
  StreamAnalyzer analyzer(spec);
  std::vector<double> chunk(static_cast<std::size_t>(spec.frame_samples));
  for (;;) {
    const std::size_t got = source(chunk);
    if (got == 0) break;
    if (got > chunk.size()) {
      throw std::runtime_error("stream_analyze: source overfilled its buffer");
    }
    analyzer.feed(std::span<const double>(chunk.data(), got), on_frame);
  }
}

ThirdOctaveSpectrogram stream_analyze(std::span<const double> samples,
                                      const FilterbankSpec& spec,
                                      std::int64_t start_time_ms) {
  ThirdOctaveSpectrogram out;
  out.spec = spec;
  out.start_time_ms = start_time_ms;
  out.frames.reserve(samples.size() / static_cast<std::size_t>(spec.frame_samples));
  StreamAnalyzer analyzer(spec);
  analyzer.feed(samples, [&out](ThirdOctaveFrame f) { out.frames.push_back(std::move(f)); });
  return out;
}

}  // namespace nicu::dsp
