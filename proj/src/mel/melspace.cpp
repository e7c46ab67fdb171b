#include "nicu/mel/melspace.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

#include <unsupported/Eigen/FFT>

namespace nicu::mel {

namespace {

Eigen::FFT<double>& half_fft() {
  thread_local Eigen::FFT<double> fft = [] {
    Eigen::FFT<double> f;
    f.SetFlag(Eigen::FFT<double>::HalfSpectrum);
    return f;
  }();
  return fft;
}

// Returns one-sided spectrum of `frame` (length n_fft).
void rfft(const std::vector<double>& frame, std::vector<std::complex<double>>& out) {
  half_fft().fwd(out, frame);
}

void irfft(const std::vector<std::complex<double>>& half, std::vector<double>& out, int n_fft) {
  half_fft().inv(out, half, n_fft);
}

}  // namespace

void MelSpec::validate() const {
  if (sample_rate_hz <= 0 || n_mels <= 0 || hop_samples <= 0 || win_samples <= 0) {
    throw std::invalid_argument("mel: non-positive parameter");
  }
  if (n_fft < win_samples || n_fft % 2 != 0) {
    throw std::invalid_argument("mel: n_fft must be even and >= window");
  }
  if (!(0.0 <= fmin_hz && fmin_hz < fmax_hz && fmax_hz <= sample_rate_hz / 2.0)) {
    throw std::invalid_argument("mel: need 0 <= fmin < fmax <= Nyquist");
  }
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

namespace {

Eigen::VectorXd mel_edges_hz(const MelSpec& spec) {
  const double lo = hz_to_mel(spec.fmin_hz);
  const double hi = hz_to_mel(spec.fmax_hz);
  Eigen::VectorXd edges(spec.n_mels + 2);
  for (int i = 0; i < spec.n_mels + 2; ++i) {
    edges(i) = mel_to_hz(lo + (hi - lo) * i / (spec.n_mels + 1));
  }
  edges(0) = spec.fmin_hz;
  edges(spec.n_mels + 1) = spec.fmax_hz;
  return edges;
}

}  // namespace

Eigen::VectorXd mel_centers_hz(const MelSpec& spec) {
  return mel_edges_hz(spec).segment(1, spec.n_mels);
}

Eigen::MatrixXd mel_filterbank(const MelSpec& spec) {
  spec.validate();
  const Eigen::VectorXd edges = mel_edges_hz(spec);
  const int n_bins = spec.n_fft / 2 + 1;
  const double hz_per_bin = static_cast<double>(spec.sample_rate_hz) / spec.n_fft;
  Eigen::MatrixXd fb = Eigen::MatrixXd::Zero(spec.n_mels, n_bins);
  for (int m = 0; m < spec.n_mels; ++m) {
    const double left = edges(m);
    const double center = edges(m + 1);
    const double right = edges(m + 2);
    for (int k = 0; k < n_bins; ++k) {
      const double f = k * hz_per_bin;
      double w = 0.0;
      if (f > left && f <= center) {
        w = (f - left) / (center - left);
      } else if (f > center && f < right) {
        w = (right - f) / (right - center);
      }
      fb(m, k) = w;
    }
  }
  return fb;
}

Eigen::VectorXd hann_window(int length) {
  Eigen::VectorXd w(length);
  for (int n = 0; n < length; ++n) {
    w(n) = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / length);
  }
  return w;
}

MelSpectrogram mel_from_waveform(std::span<const double> samples, const MelSpec& spec) {
  spec.validate();
  if (samples.size() < static_cast<std::size_t>(spec.win_samples)) {
    throw std::invalid_argument("mel_from_waveform: input shorter than one window (" +
                                std::to_string(samples.size()) + " < " +
                                std::to_string(spec.win_samples) + ")");
  }
  const auto n = static_cast<std::ptrdiff_t>(samples.size());
  const std::ptrdiff_t frames = n / spec.hop_samples;
  const Eigen::MatrixXd fb = mel_filterbank(spec);
  const Eigen::VectorXd window = hann_window(spec.win_samples);
  const double floor_power = std::pow(10.0, spec.log_floor);

  MelSpectrogram out;
  out.spec = spec;
  out.data.resize(frames, spec.n_mels);

  std::vector<double> frame(static_cast<std::size_t>(spec.n_fft), 0.0);
  std::vector<std::complex<double>> spectrum;
  Eigen::VectorXd power(spec.n_fft / 2 + 1);
  for (std::ptrdiff_t t = 0; t < frames; ++t) {
    const std::ptrdiff_t start = t * spec.hop_samples + spec.hop_samples / 2 - spec.win_samples / 2;
    std::fill(frame.begin(), frame.end(), 0.0);
    for (int i = 0; i < spec.win_samples; ++i) {
      const std::ptrdiff_t s = start + i;
      if (s < 0 || s >= n) continue;
      const double x = samples[static_cast<std::size_t>(s)];
      if (!std::isfinite(x)) throw std::invalid_argument("mel_from_waveform: non-finite sample");
      frame[static_cast<std::size_t>(i)] = window(i) * x;
    }
    rfft(frame, spectrum);
    for (Eigen::Index k = 0; k < power.size(); ++k) power(k) = std::norm(spectrum[static_cast<std::size_t>(k)]);
    const Eigen::VectorXd mel = fb * power;
    for (int m = 0; m < spec.n_mels; ++m) {
      out.data(t, m) = std::max(std::log10(std::max(mel(m), floor_power)), spec.log_floor);
    }
  }
  return out;
}

MelSpectrogram linear_transcode(const dsp::ThirdOctaveSpectrogram& tob, const MelSpec& spec) {
  spec.validate();
  if (tob.empty()) throw std::invalid_argument("linear_transcode: empty spectrogram");
  if (tob.spec.sample_rate_hz != spec.sample_rate_hz) {
    throw std::invalid_argument("linear_transcode: sample rate mismatch");
  }
  const auto n_in = static_cast<std::int64_t>(tob.size());
  const std::int64_t frame = tob.spec.frame_samples;
  const std::int64_t hop = spec.hop_samples;
  const std::int64_t n_out = (n_in * frame + hop - 1) / hop;

  const auto n_bands = static_cast<Eigen::Index>(tob.spec.n_bands());
  Eigen::VectorXd log_band_f(n_bands);
  for (Eigen::Index b = 0; b < n_bands; ++b) {
    log_band_f(b) = std::log(tob.spec.bands[static_cast<std::size_t>(b)].center_hz);
  }
  const Eigen::VectorXd centers = mel_centers_hz(spec);

  // Interpolation weights from bands to mel centers, shared by every frame.
  Eigen::MatrixXd interp = Eigen::MatrixXd::Zero(spec.n_mels, n_bands);
  for (int m = 0; m < spec.n_mels; ++m) {
    const double x = std::log(centers(m));
    if (x <= log_band_f(0)) {
      interp(m, 0) = 1.0;
    } else if (x >= log_band_f(n_bands - 1)) {
      interp(m, n_bands - 1) = 1.0;
    } else {
      Eigen::Index b = 0;
      while (log_band_f(b + 1) < x) ++b;
      const double a = (x - log_band_f(b)) / (log_band_f(b + 1) - log_band_f(b));
      interp(m, b) = 1.0 - a;
      interp(m, b + 1) = a;
    }
  }

  const double floor_power = std::pow(10.0, spec.log_floor);
  Eigen::MatrixXd log_bands(n_bands, n_in);
  for (std::int64_t t = 0; t < n_in; ++t) {
    for (Eigen::Index b = 0; b < n_bands; ++b) {
      const double p = tob.frames[static_cast<std::size_t>(t)].band_power(b);
      log_bands(b, t) = std::max(std::log10(std::max(p, floor_power)), spec.log_floor);
    }
  }
  const Eigen::MatrixXd per_band_frame = interp * log_bands;  // [n_mels x n_in]

  MelSpectrogram out;
  out.spec = spec;
  out.data.resize(n_out, spec.n_mels);
  for (std::int64_t j = 0; j < n_out; ++j) {
    // Mel frame j is centred at (j + 1/2) hops; take the frame covering it.
    const std::int64_t src = std::min((2 * j + 1) * hop / (2 * frame), n_in - 1);
    out.data.row(j) = per_band_frame.col(src).transpose();
  }
  return out;
}

Eigen::MatrixXcd stft(std::span<const double> signal, const StftConfig& cfg) {
  if (cfg.n_fft <= 0 || cfg.n_fft % 2 != 0 || cfg.hop <= 0) {
    throw std::invalid_argument("stft: bad configuration");
  }
  const auto n = static_cast<Eigen::Index>(signal.size());
  if (n < cfg.n_fft) throw std::invalid_argument("stft: signal shorter than n_fft");
  const Eigen::Index frames = 1 + (n - cfg.n_fft) / cfg.hop;
  const Eigen::VectorXd window = hann_window(cfg.n_fft);
  Eigen::MatrixXcd out(cfg.n_fft / 2 + 1, frames);
  std::vector<double> frame(static_cast<std::size_t>(cfg.n_fft));
  std::vector<std::complex<double>> spectrum;
  for (Eigen::Index t = 0; t < frames; ++t) {
    for (int i = 0; i < cfg.n_fft; ++i) {
      frame[static_cast<std::size_t>(i)] = window(i) * signal[static_cast<std::size_t>(t * cfg.hop + i)];
    }
    rfft(frame, spectrum);
    for (Eigen::Index k = 0; k < out.rows(); ++k) out(k, t) = spectrum[static_cast<std::size_t>(k)];
  }
  return out;
}

Eigen::Index stft_signal_length(Eigen::Index frames, const StftConfig& cfg) {
  return frames == 0 ? 0 : (frames - 1) * cfg.hop + cfg.n_fft;
}

Eigen::VectorXd istft(const Eigen::MatrixXcd& spectrum, const StftConfig& cfg) {
  if (spectrum.rows() != cfg.n_fft / 2 + 1) throw std::invalid_argument("istft: bin count mismatch");
  const Eigen::Index frames = spectrum.cols();
  const Eigen::Index length = stft_signal_length(frames, cfg);
  const Eigen::VectorXd window = hann_window(cfg.n_fft);
  Eigen::VectorXd numer = Eigen::VectorXd::Zero(length);
  Eigen::VectorXd denom = Eigen::VectorXd::Zero(length);
  std::vector<std::complex<double>> half(static_cast<std::size_t>(spectrum.rows()));
  std::vector<double> frame;
  for (Eigen::Index t = 0; t < frames; ++t) {
    for (Eigen::Index k = 0; k < spectrum.rows(); ++k) half[static_cast<std::size_t>(k)] = spectrum(k, t);
    // A real signal's DC and Nyquist bins are real.
    half.front() = half.front().real();
    half.back() = half.back().real();
    irfft(half, frame, cfg.n_fft);
    const Eigen::Index offset = t * cfg.hop;
    for (int i = 0; i < cfg.n_fft; ++i) {
      numer(offset + i) += window(i) * frame[static_cast<std::size_t>(i)];
      denom(offset + i) += window(i) * window(i);
    }
  }
  Eigen::VectorXd x(length);
  for (Eigen::Index n = 0; n < length; ++n) x(n) = denom(n) > 1e-12 ? numer(n) / denom(n) : 0.0;
  return x;
}

Eigen::MatrixXd audit_band_matrix(const dsp::FilterbankSpec& spec, const StftConfig& cfg) {
  dsp::FilterbankSpec grid = spec;
  grid.n_fft = cfg.n_fft;
  const auto owner = grid.bin_bands();
  const Eigen::VectorXd window = hann_window(cfg.n_fft);
  const double base = 1.0 / (static_cast<double>(cfg.n_fft) * window.squaredNorm());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(spec.n_bands()),
                                            cfg.n_fft / 2 + 1);
  for (std::size_t k = 0; k < owner.size(); ++k) {
    if (owner[k] < 0) continue;
    const bool edge = (k == 0 || static_cast<int>(k) == cfg.n_fft / 2);
    a(owner[k], static_cast<Eigen::Index>(k)) = edge ? base : 2.0 * base;
  }
  return a;
}

Eigen::MatrixXd pinv_reconstruct(const dsp::ThirdOctaveSpectrogram& tob, const StftConfig& cfg) {
  if (tob.empty()) throw std::invalid_argument("pinv_reconstruct: empty spectrogram");
  if (tob.spec.frame_samples % cfg.hop != 0) {
    throw std::invalid_argument("pinv_reconstruct: hop must divide the frame length");
  }
  const Eigen::MatrixXd a = audit_band_matrix(tob.spec, cfg);
  const Eigen::MatrixXd a_pinv = a.completeOrthogonalDecomposition().pseudoInverse();
  const int repeat = tob.spec.frame_samples / cfg.hop;
  const auto n_frames = static_cast<Eigen::Index>(tob.size());
  const Eigen::MatrixXd power = (a_pinv * tob.matrix()).cwiseMax(0.0);
  const Eigen::MatrixXd mag = power.cwiseSqrt();
  Eigen::MatrixXd out(mag.rows(), n_frames * repeat);
  for (Eigen::Index t = 0; t < n_frames; ++t) {
    for (int r = 0; r < repeat; ++r) out.col(t * repeat + r) = mag.col(t);
  }
  return out;
}

double consistency_error(const Eigen::MatrixXcd& spectrum, const Eigen::MatrixXd& magnitude,
                         int n_fft) {
  double acc = 0.0;
  const Eigen::Index nyquist = n_fft / 2;
  for (Eigen::Index t = 0; t < spectrum.cols(); ++t) {
    for (Eigen::Index k = 0; k < spectrum.rows(); ++k) {
      const double d = std::abs(spectrum(k, t)) - magnitude(k, t);
      acc += (k == 0 || k == nyquist ? 1.0 : 2.0) * d * d;
    }
  }
  return std::sqrt(acc);
}

GriffinLimResult griffin_lim(const Eigen::MatrixXd& magnitude, int iters, const StftConfig& cfg,
                             std::uint64_t seed) {
  if (iters < 1) throw std::invalid_argument("griffin_lim: iters must be >= 1");
  if (magnitude.rows() != cfg.n_fft / 2 + 1) {
    throw std::invalid_argument("griffin_lim: magnitude has wrong bin count");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> phase(-std::numbers::pi, std::numbers::pi);
  Eigen::MatrixXcd y(magnitude.rows(), magnitude.cols());
  for (Eigen::Index t = 0; t < y.cols(); ++t) {
    for (Eigen::Index k = 0; k < y.rows(); ++k) y(k, t) = std::polar(magnitude(k, t), phase(rng));
  }

  GriffinLimResult result;
  result.consistency.reserve(static_cast<std::size_t>(iters));
  Eigen::VectorXd x = istft(y, cfg);
  Eigen::MatrixXcd spectrum = stft({x.data(), static_cast<std::size_t>(x.size())}, cfg);
  for (int i = 0; i < iters; ++i) {
    for (Eigen::Index t = 0; t < y.cols(); ++t) {
      for (Eigen::Index k = 0; k < y.rows(); ++k) {
        y(k, t) = std::polar(magnitude(k, t), std::arg(spectrum(k, t)));
      }
    }
    x = istft(y, cfg);
    spectrum = stft({x.data(), static_cast<std::size_t>(x.size())}, cfg);
    result.consistency.push_back(consistency_error(spectrum, magnitude, cfg.n_fft));
  }
  result.waveform = std::move(x);
  return result;
}

}  // namespace nicu::mel
