#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "toolwear/array_model.hpp"

namespace toolwear {

constexpr double kSampleRate = 450e3;
constexpr double kFrameSeconds = 0.040;
constexpr double kFrameRate = 10.0;

// Samples per capture: round(fs * 40 ms), 18000 at 450 kHz.
std::size_t frame_length(double sample_rate, double frame_seconds = kFrameSeconds);

// One capture of M microphone channels, stored channel-major.
class MultichannelFrame {
 public:
  MultichannelFrame() = default;
  MultichannelFrame(std::size_t channels, std::size_t length, double sample_rate);

  std::size_t channels() const { return channels_; }
  std::size_t length() const { return length_; }
  double sample_rate() const { return fs_; }

  std::span<double> channel(std::size_t m) { return {data_.data() + m * length_, length_}; }
  std::span<const double> channel(std::size_t m) const {
    return {data_.data() + m * length_, length_};
  }
  std::span<const double> data() const { return data_; }

  std::int64_t frame_index = 0;
  int run_id = 0;

 private:
  std::size_t channels_ = 0;
  std::size_t length_ = 0;
  double fs_ = 0.0;
  std::vector<double> data_;
};

struct BeamformedFrame {
  std::vector<double> samples;
  double sample_rate = 0.0;
  std::int64_t frame_index = 0;
};

// y = b0 x + b1 x[-1] + b2 x[-2] - a1 y[-1] - a2 y[-2]
struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;

  std::complex<double> response(std::complex<double> z) const;
  // Largest pole magnitude of this section.
  double pole_radius() const;
};

struct FilterCoefficients {
  std::vector<Biquad> sections;
  int order = 0;
  double f_lo = 0.0;
  double f_hi = 0.0;
  double sample_rate = 0.0;

  std::complex<double> response(double freq_hz) const;
  double magnitude_db(double freq_hz) const;
  bool stable() const;
};

// Butterworth design by pre-warped bilinear transform, as second-order sections.
// f_lo == 0 gives an order-`order` lowpass at f_hi; f_lo > 0 gives the
// bandpass obtained from an order-`order` lowpass prototype (2*order poles).
FilterCoefficients design_bandpass(int order, double f_lo, double f_hi, double sample_rate);

// Cascade of transposed direct-form II biquads, zero initial state.
BeamformedFrame apply_filter(const FilterCoefficients& coeffs, const BeamformedFrame& x);
void apply_filter_inplace(const FilterCoefficients& coeffs, std::span<double> x);

constexpr std::size_t kFractionalDelayTaps = 31;
constexpr double kFractionalDelayBeta = 8.0;

// Kaiser-windowed sinc taps h[k], k = -15..15, for y[n] = sum_k h[k] x[n - D - k]
// where the total delay is D + frac, 0 <= frac < 1.
std::vector<double> fractional_delay_taps(double frac);

// out[n] += gain * x[n - delay] with windowed-sinc interpolation; samples
// outside the input are zero. Integer delays are exact shifts.
void accumulate_delayed(std::span<const double> x, double delay, double gain,
                        std::span<double> out);

// Steer by delaying each channel and averaging (scale 1/M).
BeamformedFrame delay_and_sum(const MultichannelFrame& frame, const DelaySet& delays);

struct PowerSpectrum {
  std::vector<double> power;  // one-sided density, units^2 / Hz
  double sample_rate = 0.0;
  std::size_t window_length = 0;

  std::size_t bins() const { return power.size(); }
  double bin_width() const { return sample_rate / static_cast<double>(window_length); }
  double frequency(std::size_t k) const { return bin_width() * static_cast<double>(k); }
};

constexpr std::size_t kWelchWindow = 1024;
constexpr double kWelchOverlap = 0.5;

// Periodic Hamming window of the given length.
std::vector<double> hamming_window(std::size_t length);

// Segment starts used by welch_psd: hop = window - round(overlap * window).
std::vector<std::size_t> welch_segment_starts(std::size_t signal_length, std::size_t window_length,
                                              double overlap_fraction);

// Averaged Hamming-windowed periodograms, one-sided, density scaled so that
// sum(power) * bin_width recovers the variance of white noise.
PowerSpectrum welch_psd(std::span<const double> x, double sample_rate,
                        std::size_t window_length = kWelchWindow,
                        double overlap_fraction = kWelchOverlap);
PowerSpectrum welch_psd(const BeamformedFrame& x, std::size_t window_length = kWelchWindow,
                        double overlap_fraction = kWelchOverlap);

}  // namespace toolwear
