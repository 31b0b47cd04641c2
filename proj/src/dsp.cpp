#include "toolwear/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "toolwear/error.hpp"
#include "toolwear/fft.hpp"

namespace toolwear {

using cplx = std::complex<double>;

std::size_t frame_length(double sample_rate, double frame_seconds) {
  return static_cast<std::size_t>(std::llround(sample_rate * frame_seconds));
}

MultichannelFrame::MultichannelFrame(std::size_t channels, std::size_t length, double sample_rate)
    : channels_(channels), length_(length), fs_(sample_rate), data_(channels * length, 0.0) {}

// ---------------------------------------------------------------------------
// IIR design

cplx Biquad::response(cplx z) const {
  const cplx zi = 1.0 / z;
  return (b0 + zi * (b1 + zi * b2)) / (1.0 + zi * (a1 + zi * a2));
}

double Biquad::pole_radius() const {
  // Roots of z^2 + a1 z + a2.
  const cplx disc = std::sqrt(cplx(a1 * a1 - 4.0 * a2, 0.0));
  return std::max(std::abs((-a1 + disc) / 2.0), std::abs((-a1 - disc) / 2.0));
}

cplx FilterCoefficients::response(double freq_hz) const {
  const cplx z = std::polar(1.0, 2.0 * std::numbers::pi * freq_hz / sample_rate);
  cplx h = 1.0;
  for (const Biquad& s : sections) h *= s.response(z);
  return h;
}

double FilterCoefficients::magnitude_db(double freq_hz) const {
  return 20.0 * std::log10(std::abs(response(freq_hz)));
}

bool FilterCoefficients::stable() const {
  return std::all_of(sections.begin(), sections.end(),
                     [](const Biquad& s) { return s.pole_radius() < 1.0; });
}

namespace {

cplx bilinear(cplx s, double fs) { return (2.0 * fs + s) / (2.0 * fs - s); }

double prewarp(double f, double fs) { return 2.0 * fs * std::tan(std::numbers::pi * f / fs); }

// Butterworth prototype poles on the unit circle, left half plane.
std::vector<cplx> prototype_poles(int order) {
  std::vector<cplx> poles;
  for (int k = 0; k < order; ++k) {
    const double theta = std::numbers::pi * (2.0 * k + order + 1) / (2.0 * order);
    poles.push_back(std::polar(1.0, theta));
  }
  return poles;
}

// Groups digital poles into conjugate pairs (real poles pair with each other;
// a leftover real pole becomes a first-order section).
std::vector<std::pair<cplx, cplx>> pair_poles(std::vector<cplx> poles) {
  constexpr double tol = 1e-10;
  std::vector<std::pair<cplx, cplx>> pairs;
  std::vector<double> reals;
  for (const cplx& p : poles) {
    if (std::abs(p.imag()) <= tol)
      reals.push_back(p.real());
    else if (p.imag() > 0.0)
      pairs.emplace_back(p, std::conj(p));
  }
  std::sort(reals.begin(), reals.end());
  for (std::size_t i = 0; i + 1 < reals.size(); i += 2) pairs.emplace_back(reals[i], reals[i + 1]);
  if (reals.size() % 2 == 1) pairs.emplace_back(reals.back(), cplx(0.0));
  return pairs;
}

Biquad section_from_poles(const std::pair<cplx, cplx>& p) {
  Biquad s;
  s.a1 = -(p.first + p.second).real();
  s.a2 = (p.first * p.second).real();
  return s;
}

}  // namespace

FilterCoefficients design_bandpass(int order, double f_lo, double f_hi, double sample_rate) {
  if (order < 1) throw Error(ErrorKind::invalid_order, "filter order must be at least 1");
  if (!(sample_rate > 0.0)) throw Error(ErrorKind::invalid_argument, "sample rate must be positive");
  if (!(f_hi < 0.5 * sample_rate))
    throw Error(ErrorKind::band_edge, "upper band edge must lie below the Nyquist frequency");
  if (!(f_lo >= 0.0) || !(f_lo < f_hi))
    throw Error(ErrorKind::band_edge, "band edges must satisfy 0 <= f_lo < f_hi");

  FilterCoefficients out;
  out.order = order;
  out.f_lo = f_lo;
  out.f_hi = f_hi;
  out.sample_rate = sample_rate;
  const auto proto = prototype_poles(order);

  if (f_lo == 0.0) {
    const double wc = prewarp(f_hi, sample_rate);
    std::vector<cplx> poles;
    for (const cplx& p : proto) poles.push_back(bilinear(p * wc, sample_rate));
    for (const auto& pair : pair_poles(poles)) {
      Biquad s = section_from_poles(pair);
      if (pair.second == cplx(0.0)) {
        // First-order section, zero at z = -1, unit gain at DC.
        const double g = (1.0 + s.a1) / 2.0;
        s.b0 = g;
        s.b1 = g;
        s.b2 = 0.0;
      } else {
        const double g = (1.0 + s.a1 + s.a2) / 4.0;
        s.b0 = g;
        s.b1 = 2.0 * g;
        s.b2 = g;
      }
      out.sections.push_back(s);
    }
    return out;
  }

  const double w1 = prewarp(f_lo, sample_rate);
  const double w2 = prewarp(f_hi, sample_rate);
  const double bw = w2 - w1;
  const double w0sq = w1 * w2;
  std::vector<cplx> poles;
  for (const cplx& p : proto) {
    const cplx root = std::sqrt(p * p * bw * bw - 4.0 * w0sq);
    poles.push_back(bilinear((p * bw + root) / 2.0, sample_rate));
    poles.push_back(bilinear((p * bw - root) / 2.0, sample_rate));
  }
  // Unit gain at the digital image of the analog centre frequency.
  const double f0 = std::atan(std::sqrt(w0sq) / (2.0 * sample_rate)) * sample_rate / std::numbers::pi;
  const cplx z0 = std::polar(1.0, 2.0 * std::numbers::pi * f0 / sample_rate);
  for (const auto& pair : pair_poles(poles)) {
    Biquad s = section_from_poles(pair);
    s.b0 = 1.0;
    s.b1 = 0.0;
    s.b2 = -1.0;
    const double g = 1.0 / std::abs(s.response(z0));
    s.b0 *= g;
    s.b2 *= g;
    out.sections.push_back(s);
  }
  return out;
}

void apply_filter_inplace(const FilterCoefficients& coeffs, std::span<double> x) {
  for (double v : x)
    if (!std::isfinite(v)) throw Error(ErrorKind::numeric, "filter input contains non-finite samples");
  for (const Biquad& s : coeffs.sections) {
    double z1 = 0.0, z2 = 0.0;
    for (double& v : x) {
      const double in = v;
      const double y = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * y + z2;
      z2 = s.b2 * in - s.a2 * y;
      v = y;
    }
  }
}

BeamformedFrame apply_filter(const FilterCoefficients& coeffs, const BeamformedFrame& x) {
  BeamformedFrame y = x;
  apply_filter_inplace(coeffs, y.samples);
  return y;
}

// ---------------------------------------------------------------------------
// Fractional delay and beamforming

std::vector<double> fractional_delay_taps(double frac) {
  constexpr int half = static_cast<int>(kFractionalDelayTaps / 2);
  const double radius = half + 1.0;
  const double norm = std::cyl_bessel_i(0.0, kFractionalDelayBeta);
  std::vector<double> taps(kFractionalDelayTaps);
  double sum = 0.0;
  for (int k = -half; k <= half; ++k) {
    const double u = k - frac;
    const double sinc = u == 0.0 ? 1.0 : std::sin(std::numbers::pi * u) / (std::numbers::pi * u);
    const double r = u / radius;
    const double w = std::cyl_bessel_i(0.0, kFractionalDelayBeta * std::sqrt(std::max(0.0, 1.0 - r * r))) / norm;
    taps[k + half] = sinc * w;
    sum += taps[k + half];
  }
  for (double& t : taps) t /= sum;  // unit DC gain
  return taps;
}

namespace {

// out[n] += g * x[n - offset] over the valid range.
void add_shifted(std::span<const double> x, std::ptrdiff_t offset, double g, std::span<double> out) {
  const auto len = static_cast<std::ptrdiff_t>(x.size());
  const auto out_len = static_cast<std::ptrdiff_t>(out.size());
  const std::ptrdiff_t begin = std::max<std::ptrdiff_t>(0, offset);
  const std::ptrdiff_t end = std::min(out_len, len + offset);
  double* __restrict o = out.data();
  const double* __restrict in = x.data();
  for (std::ptrdiff_t n = begin; n < end; ++n) o[n] += g * in[n - offset];
}

}  // namespace

void accumulate_delayed(std::span<const double> x, double delay, double gain, std::span<double> out) {
  if (!std::isfinite(delay)) throw Error(ErrorKind::numeric, "non-finite delay");
  double whole = std::floor(delay);
  double frac = delay - whole;
  if (frac < 1e-12) {
    frac = 0.0;
  } else if (frac > 1.0 - 1e-12) {
    frac = 0.0;
    whole += 1.0;
  }
  const auto shift = static_cast<std::ptrdiff_t>(whole);
  if (frac == 0.0) {
    add_shifted(x, shift, gain, out);
    return;
  }
  auto taps = fractional_delay_taps(frac);
  for (double& t : taps) t *= gain;
  constexpr auto half = static_cast<std::ptrdiff_t>(kFractionalDelayTaps / 2);
  // Blocked so the output block and the input window stay cache resident.
  constexpr std::size_t block = 512;
  for (std::size_t lo = 0; lo < out.size(); lo += block) {
    const std::size_t hi = std::min(out.size(), lo + block);
    auto out_block = out.subspan(lo, hi - lo);
    for (std::ptrdiff_t k = -half; k <= half; ++k) {
      const std::ptrdiff_t offset = shift + k - static_cast<std::ptrdiff_t>(lo);
      add_shifted(x, offset, taps[static_cast<std::size_t>(k + half)], out_block);
    }
  }
}

BeamformedFrame delay_and_sum(const MultichannelFrame& frame, const DelaySet& delays) {
  if (frame.channels() != delays.size())
    throw Error(ErrorKind::dimension, "frame has " + std::to_string(frame.channels()) +
                                          " channels but delay set has " +
                                          std::to_string(delays.size()));
  if (frame.channels() == 0) throw Error(ErrorKind::dimension, "frame has no channels");
  for (double d : delays.delays) {
    if (!std::isfinite(d) || d < 0.0 || d >= static_cast<double>(frame.length()))
      throw Error(ErrorKind::dimension, "steering delay outside [0, frame length)");
  }
  BeamformedFrame out;
  out.sample_rate = frame.sample_rate();
  out.frame_index = frame.frame_index;
  out.samples.assign(frame.length(), 0.0);
  const double gain = 1.0 / static_cast<double>(frame.channels());
  for (std::size_t m = 0; m < frame.channels(); ++m)
    accumulate_delayed(frame.channel(m), delays.delays[m], gain, out.samples);
  return out;
}

// ---------------------------------------------------------------------------
// Welch PSD

std::vector<double> hamming_window(std::size_t length) {
  std::vector<double> w(length);
  for (std::size_t n = 0; n < length; ++n)
    w[n] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) /
                                  static_cast<double>(length));
  return w;
}

std::vector<std::size_t> welch_segment_starts(std::size_t signal_length, std::size_t window_length,
                                              double overlap_fraction) {
  if (window_length < 2) throw Error(ErrorKind::invalid_argument, "Welch window must be >= 2 samples");
  if (!(overlap_fraction >= 0.0) || !(overlap_fraction < 1.0))
    throw Error(ErrorKind::invalid_argument, "Welch overlap must lie in [0, 1)");
  if (signal_length < window_length)
    throw Error(ErrorKind::insufficient_data, "signal of " + std::to_string(signal_length) +
                                                  " samples is shorter than one " +
                                                  std::to_string(window_length) + "-sample window");
  const auto overlap = static_cast<std::size_t>(
      std::llround(overlap_fraction * static_cast<double>(window_length)));
  const std::size_t hop = std::max<std::size_t>(1, window_length - overlap);
  std::vector<std::size_t> starts;
  for (std::size_t s = 0; s + window_length <= signal_length; s += hop) starts.push_back(s);
  return starts;
}

PowerSpectrum welch_psd(std::span<const double> x, double sample_rate, std::size_t window_length,
                        double overlap_fraction) {
  const auto starts = welch_segment_starts(x.size(), window_length, overlap_fraction);
  for (double v : x)
    if (!std::isfinite(v)) throw Error(ErrorKind::numeric, "PSD input contains non-finite samples");

  thread_local std::unique_ptr<RealFft> fft;
  if (!fft || fft->length() != window_length) fft = std::make_unique<RealFft>(window_length);
  const auto window = hamming_window(window_length);
  double window_power = 0.0;
  for (double w : window) window_power += w * w;

  PowerSpectrum out;
  out.sample_rate = sample_rate;
  out.window_length = window_length;
  out.power.assign(fft->bins(), 0.0);
  std::vector<double> segment(window_length);
  std::vector<cplx> spectrum(fft->bins());
  for (std::size_t s : starts) {
    for (std::size_t n = 0; n < window_length; ++n) segment[n] = x[s + n] * window[n];
    fft->forward(segment, spectrum);
    for (std::size_t k = 0; k < spectrum.size(); ++k) out.power[k] += std::norm(spectrum[k]);
  }
  const double scale = 1.0 / (static_cast<double>(starts.size()) * sample_rate * window_power);
  const std::size_t nyquist = window_length % 2 == 0 ? window_length / 2 : out.power.size();
  for (std::size_t k = 0; k < out.power.size(); ++k) {
    const bool doubled = k != 0 && k != nyquist;
    out.power[k] *= scale * (doubled ? 2.0 : 1.0);
  }
  return out;
}

PowerSpectrum welch_psd(const BeamformedFrame& x, std::size_t window_length, double overlap_fraction) {
  return welch_psd(x.samples, x.sample_rate, window_length, overlap_fraction);
}

}  // namespace toolwear
