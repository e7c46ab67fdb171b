#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "nicu/dsp/thirdoctave.hpp"

namespace nicu::mel {

// Log-mel front end. Defaults follow the usual PANN convention at 32 kHz.
struct MelSpec {
  int sample_rate_hz = 32000;
  int n_mels = 64;
  int hop_samples = 320;
  int win_samples = 1024;
  int n_fft = 1024;
  double fmin_hz = 50.0;
  double fmax_hz = 14000.0;
  // Entries are log10(power) clamped below at this value.
  double log_floor = -10.0;

  double hop_seconds() const { return static_cast<double>(hop_samples) / sample_rate_hz; }
  void validate() const;
};

struct MelSpectrogram {
  MelSpec spec;
  // [time x n_mels] log10 power.
  Eigen::MatrixXd data;

  Eigen::Index frames() const { return data.rows(); }
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Center frequency of each mel band (n_mels entries).
Eigen::VectorXd mel_centers_hz(const MelSpec& spec);

// [n_mels x (n_fft/2 + 1)] triangular weights on the HTK mel curve.
Eigen::MatrixXd mel_filterbank(const MelSpec& spec);

// Periodic Hann window.
Eigen::VectorXd hann_window(int length);

// Frame t is centred on sample t*hop + hop/2 (zero padding past the ends), so
// a signal of N samples yields floor(N / hop) frames.
MelSpectrogram mel_from_waveform(std::span<const double> samples, const MelSpec& spec = {});

// Nearest-frame upsampling in time plus log-frequency linear interpolation of
// log band power from third-octave centers to mel centers.
MelSpectrogram linear_transcode(const dsp::ThirdOctaveSpectrogram& tob,
                                const MelSpec& spec = {});

// --- privacy audit: magnitude recovery and phase retrieval ----------------

// STFT with a periodic Hann window of n_fft samples. Frames start at t*hop
// and never read past the signal: a signal of N >= n_fft samples gives
// 1 + (N - n_fft) / hop frames.
struct StftConfig {
  int n_fft = 8192;
  int hop = 2000;
};

// [n_fft/2+1 x frames]
Eigen::MatrixXcd stft(std::span<const double> signal, const StftConfig& cfg);

// Least-squares inverse: the signal whose STFT is closest to `spectrum`.
Eigen::VectorXd istft(const Eigen::MatrixXcd& spectrum, const StftConfig& cfg);

// Signal length spanned by `frames` STFT frames.
Eigen::Index stft_signal_length(Eigen::Index frames, const StftConfig& cfg);

// Matrix taking |X_k|^2 of one audit STFT frame to third-octave band power.
Eigen::MatrixXd audit_band_matrix(const dsp::FilterbankSpec& spec, const StftConfig& cfg);

// Magnitude STFT estimate [bins x frames] from band powers through the
// Moore-Penrose pseudoinverse of audit_band_matrix(). Negative power estimates
// are clamped to zero; each band frame is repeated frame_samples/hop times.
Eigen::MatrixXd pinv_reconstruct(const dsp::ThirdOctaveSpectrogram& tob,
                                 const StftConfig& cfg = {});

struct GriffinLimResult {
  Eigen::VectorXd waveform;
  // consistency[i] = || |STFT(x_{i+1})| - mag || after iteration i+1, measured
  // over the full two-sided spectrum.
  std::vector<double> consistency;
};

GriffinLimResult griffin_lim(const Eigen::MatrixXd& magnitude, int iters,
                             const StftConfig& cfg = {}, std::uint64_t seed = 0x9e3779b9);

// || |STFT(x)| - mag || with two-sided bin weighting.
double consistency_error(const Eigen::MatrixXcd& spectrum, const Eigen::MatrixXd& magnitude,
                         int n_fft);

}  // namespace nicu::mel
