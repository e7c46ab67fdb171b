#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace nicu::dsp {

// One IEC 61260-1 base-ten third-octave band. `index` is the band number b
// relative to the 1 kHz reference band.
struct BandDefinition {
  int index = 0;
  double center_hz = 0.0;
  double lo_hz = 0.0;
  double hi_hz = 0.0;
  double nominal_hz = 0.0;
};

// Exact mid-band frequency 1000 * 10^(b/10).
double band_center_hz(int index);

// Shared edge between band b and band b+1. Both neighbours read their edge
// from here, so adjacent bands tile bit-exactly.
double band_upper_edge_hz(int index);

// Rounded preferred label (20, 25, 31.5, ... 12500).
double nominal_center_hz(int index);

// Every band whose nominal center lies in [fmin_hz, fmax_hz], by frequency.
// Throws std::invalid_argument on a bad or empty range.
std::vector<BandDefinition> design_bands(double fmin_hz, double fmax_hz);

struct FilterbankSpec {
  int sample_rate_hz = 32000;
  int frame_samples = 4000;
  int n_fft = 8192;
  std::vector<BandDefinition> bands;

  // 32 kHz, 125 ms frames, 29 bands from 20 Hz to 12.5 kHz.
  static FilterbankSpec standard();

  std::size_t n_bands() const { return bands.size(); }
  int n_bins() const { return n_fft / 2 + 1; }
  double frame_seconds() const {
    return static_cast<double>(frame_samples) / sample_rate_hz;
  }

  // Throws std::invalid_argument when an invariant does not hold.
  void validate() const;

  // Band owning each one-sided FFT bin (by bin center frequency), -1 when the
  // bin is outside every band.
  std::vector<int> bin_bands() const;

  // [n_bands x n_bins] matrix mapping |X_k|^2 of the zero-padded frame DFT to
  // per-band mean-square power. Rows are disjoint indicator masks scaled so
  // that the full one-sided sum reproduces the frame's mean square.
  Eigen::MatrixXd band_matrix() const;
};

struct ThirdOctaveFrame {
  Eigen::VectorXd band_power;
  std::int64_t frame_index = 0;
};

struct ThirdOctaveSpectrogram {
  FilterbankSpec spec;
  std::vector<ThirdOctaveFrame> frames;
  std::int64_t start_time_ms = 0;

  std::size_t size() const { return frames.size(); }
  bool empty() const { return frames.empty(); }

  // [n_bands x n_frames] view of the band powers.
  Eigen::MatrixXd matrix() const;

  // Throws std::invalid_argument if frame indices are not contiguous.
  void validate() const;
};

// Bands for an arbitrary sub-range of frames, re-indexed from zero.
ThirdOctaveSpectrogram slice(const ThirdOctaveSpectrogram& tob,
                             std::size_t first, std::size_t count);

// One-sided power of the zero-padded DFT, scaled so that the sum over all bins
// equals the frame mean square.
Eigen::VectorXd frame_power_spectrum(std::span<const double> samples,
                                     const FilterbankSpec& spec);

ThirdOctaveFrame analyze_frame(std::span<const double> samples,
                               const FilterbankSpec& spec,
                               std::int64_t frame_index = 0);

// 10 log10(power), clamped below at floor_db.
Eigen::VectorXd to_db(const ThirdOctaveFrame& frame, double floor_db);

// Push-style frame cutter. Holds at most one partial frame of samples.
class StreamAnalyzer {
 public:
  explicit StreamAnalyzer(FilterbankSpec spec);

  template <typename Sink>
  void feed(std::span<const double> samples, Sink&& on_frame) {
    while (!samples.empty()) {
      const std::size_t take =
          std::min(samples.size(), pending_capacity() - pending_);
      std::copy_n(samples.begin(), take, buffer_.begin() + pending_);
      pending_ += take;
      samples = samples.subspan(take);
      if (pending_ == pending_capacity()) {
        on_frame(analyze_frame(buffer_, spec_, next_index_++));
        pending_ = 0;
      }
    }
  }

  std::vector<ThirdOctaveFrame> feed(std::span<const double> samples);

  // Samples currently held back (a partial frame).
  std::size_t pending() const { return pending_; }
  std::int64_t frames_emitted() const { return next_index_; }
  const FilterbankSpec& spec() const { return spec_; }

 private:
  std::size_t pending_capacity() const { return buffer_.size(); }

  FilterbankSpec spec_;
  std::vector<double> buffer_;
  std::size_t pending_ = 0;
  std::int64_t next_index_ = 0;
};

// Pull-based sample source: fills the span and returns the number of samples
// written, 0 at end of stream. Failures are reported by throwing.
using SampleSource = std::function<std::size_t(std::span<double>)>;

// Drains `source`, calling `on_frame` for each complete frame. A trailing
// partial frame is discarded. If the source throws, the exception propagates
// after every frame completed so far has been delivered.
void stream_analyze(const SampleSource& source, const FilterbankSpec& spec,
                    const std::function<void(ThirdOctaveFrame)>& on_frame);

ThirdOctaveSpectrogram stream_analyze(std::span<const double> samples,
                                      const FilterbankSpec& spec,
                                      std::int64_t start_time_ms = 0);

}  // namespace nicu::dsp
