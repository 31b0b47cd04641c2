#include <doctest.h>

#include <cmath>
#include <numbers>

#include "support.hpp"
#include "toolwear/dsp.hpp"
#include "toolwear/error.hpp"
#include "toolwear/synth.hpp"

using namespace toolwear;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::io;
}

MultichannelFrame random_frame(std::size_t m, std::size_t n, std::uint64_t seed) {
  MultichannelFrame f(m, n, kSampleRate);
  for (std::size_t c = 0; c < m; ++c) {
    auto x = oracle::white_noise(n, seed * 100 + c);
    std::copy(x.begin(), x.end(), f.channel(c).begin());
  }
  return f;
}

}  // namespace

TEST_CASE("frame length at 450 kHz is 18000") { CHECK(frame_length(450e3) == 18000); }

TEST_CASE("lowpass design matches the analytic Butterworth response") {
  const FilterCoefficients f = design_bandpass(6, 0.0, 60e3, 450e3);
  CHECK(f.order == 6);
  CHECK(f.sections.size() == 3);
  CHECK(f.stable());
  CHECK(std::abs(f.magnitude_db(0.0)) <= 0.01);
  CHECK(f.magnitude_db(60e3) == doctest::Approx(-3.0103).epsilon(0.1 / 3.01));
  // An order-6 response is only -25.5 dB at 1.5x the cutoff; the grid below pins it to the closed form.
  CHECK(f.magnitude_db(90e3) == doctest::Approx(oracle::butterworth_lowpass_db(90e3, 60e3, 450e3, 6)).epsilon(1e-9));
  CHECK(f.magnitude_db(90e3) == doctest::Approx(-25.53).epsilon(1e-3));
  CHECK(f.magnitude_db(100e3) <= -30.0);
  for (double hz = 0; hz < 225e3; hz += 500.0) {
    const double want = oracle::butterworth_lowpass_db(hz, 60e3, 450e3, 6);
    if (want > -200) CHECK(f.magnitude_db(hz) == doctest::Approx(want).epsilon(1e-6).scale(1.0));
  }
}

TEST_CASE("bandpass design: -3 dB at both edges, unity in the band, stable") {
  const FilterCoefficients f = design_bandpass(4, 20e3, 60e3, 450e3);
  CHECK(f.sections.size() == 4);
  CHECK(f.stable());
  CHECK(f.magnitude_db(20e3) == doctest::Approx(-3.0103).epsilon(0.01));
  CHECK(f.magnitude_db(60e3) == doctest::Approx(-3.0103).epsilon(0.01));
  CHECK(f.magnitude_db(0.0) < -100.0);
  CHECK(f.magnitude_db(200e3) < -40.0);
  // The unity point is the pre-warped geometric centre.
  const double w1 = std::tan(std::numbers::pi * 20e3 / 450e3), w2 = std::tan(std::numbers::pi * 60e3 / 450e3);
  const double fc = std::atan(std::sqrt(w1 * w2)) * 450e3 / std::numbers::pi;
  CHECK(std::abs(f.magnitude_db(fc)) < 1e-9);
}

TEST_CASE("designed sections are stable across orders, bands and rates") {
  for (int order = 1; order <= 10; ++order)
    for (double fs : {48e3, 192e3, 450e3})
      for (double lo_frac : {0.0, 0.01, 0.1, 0.3})
        for (double hi_frac : {0.05, 0.2, 0.45, 0.49}) {
          if (lo_frac >= hi_frac) continue;
          const FilterCoefficients f = design_bandpass(order, lo_frac * fs, hi_frac * fs, fs);
          for (const Biquad& s : f.sections) CHECK(s.pole_radius() < 1.0);
        }
}

TEST_CASE("filter design errors") {
  CHECK(kind_of([] { design_bandpass(0, 0, 60e3, 450e3); }) == ErrorKind::invalid_order);
  CHECK(kind_of([] { design_bandpass(6, 0, 225e3, 450e3); }) == ErrorKind::band_edge);
  CHECK(kind_of([] { design_bandpass(6, 70e3, 60e3, 450e3); }) == ErrorKind::band_edge);
  CHECK(kind_of([] { design_bandpass(6, -1.0, 60e3, 450e3); }) == ErrorKind::band_edge);
}

TEST_CASE("apply_filter: zero, DC and stopband tone") {
  const FilterCoefficients f = design_bandpass(6, 0.0, 60e3, 450e3);
  BeamformedFrame zero{std::vector<double>(18000, 0.0), 450e3, 0};
  for (double v : apply_filter(f, zero).samples) CHECK(v == 0.0);

  BeamformedFrame dc{std::vector<double>(18000, 1.0), 450e3, 0};
  const auto y = apply_filter(f, dc).samples;
  REQUIRE(y.size() == 18000);
  for (std::size_t n = 2000; n < y.size(); ++n) REQUIRE(std::abs(y[n] - 1.0) < 1e-6);

  BeamformedFrame tone{std::vector<double>(18000), 450e3, 0};
  for (std::size_t n = 0; n < 18000; ++n) tone.samples[n] = std::sin(2 * std::numbers::pi * 100e3 * n / 450e3);
  const auto t = apply_filter(f, tone).samples;
  double peak = 0.0;
  for (std::size_t n = 4000; n < t.size(); ++n) peak = std::max(peak, std::abs(t[n]));
  const double analytic = std::pow(10.0, f.magnitude_db(100e3) / 20.0);
  CHECK(peak <= std::pow(10.0, -30.0 / 20.0));
  CHECK(peak == doctest::Approx(analytic).epsilon(0.02));
}

TEST_CASE("apply_filter rejects non-finite input and keeps length") {
  const FilterCoefficients f = design_bandpass(6, 0.0, 60e3, 450e3);
  BeamformedFrame x{std::vector<double>(100, 0.0), 450e3, 0};
  x.samples[50] = std::numeric_limits<double>::infinity();
  CHECK(kind_of([&] { apply_filter(f, x); }) == ErrorKind::numeric);
  BeamformedFrame ok{std::vector<double>(37, 0.5), 450e3, 3};
  const auto y = apply_filter(f, ok);
  CHECK(y.samples.size() == 37);
  CHECK(y.frame_index == 3);
}

TEST_CASE("fractional delay taps have unit DC gain") {
  for (double frac : {0.0, 0.1, 0.25, 0.5, 0.9}) {
    const auto h = fractional_delay_taps(frac);
    CHECK(h.size() == kFractionalDelayTaps);
    double sum = 0.0;
    for (double v : h) sum += v;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("fractional delay reproduces a shifted in-band sinusoid") {
  const double f0 = 30e3, fs = 450e3;
  std::vector<double> x(4000);
  for (std::size_t n = 0; n < x.size(); ++n) x[n] = std::sin(2 * std::numbers::pi * f0 * n / fs);
  for (double delay : {3.0, 7.3, 12.5, 20.875}) {
    std::vector<double> y(x.size(), 0.0);
    accumulate_delayed(x, delay, 1.0, y);
    double err = 0.0;
    for (std::size_t n = 100; n < 3900; ++n)
      err = std::max(err, std::abs(y[n] - std::sin(2 * std::numbers::pi * f0 * (n - delay) / fs)));
    CHECK(err < 1e-3);
  }
}

TEST_CASE("delay_and_sum: identity, integer shifts, linearity") {
  const std::size_t L = 2048;
  SUBCASE("identical channels and zero delays reproduce the signal") {
    MultichannelFrame f(8, L, kSampleRate);
    const auto x = oracle::white_noise(L, 42);
    for (std::size_t m = 0; m < 8; ++m) std::copy(x.begin(), x.end(), f.channel(m).begin());
    const auto y = delay_and_sum(f, DelaySet{std::vector<double>(8, 0.0), kSampleRate});
    for (std::size_t n = 0; n < L; ++n) CHECK(y.samples[n] == doctest::Approx(x[n]).epsilon(1e-14));
  }
  SUBCASE("integer delays equal brute-force shifting and averaging") {
    const MultichannelFrame f = random_frame(5, L, 3);
    DelaySet d{{0, 3, 17, 1, 250}, kSampleRate};
    const auto y = delay_and_sum(f, d);
    for (std::size_t n = 0; n < L; ++n) {
      double want = 0.0;
      for (std::size_t m = 0; m < 5; ++m) {
        const long k = static_cast<long>(n) - static_cast<long>(d.delays[m]);
        if (k >= 0) want += f.channel(m)[k];
      }
      REQUIRE(y.samples[n] == doctest::Approx(want / 5.0).epsilon(1e-13));
    }
  }
  SUBCASE("linear in the input frame, beamform then filter included") {
    const MultichannelFrame a = random_frame(6, L, 5), b = random_frame(6, L, 6);
    MultichannelFrame mix(6, L, kSampleRate);
    const double ca = 0.7, cb = -2.5;
    for (std::size_t m = 0; m < 6; ++m)
      for (std::size_t n = 0; n < L; ++n) mix.channel(m)[n] = ca * a.channel(m)[n] + cb * b.channel(m)[n];
    DelaySet d{{0.0, 1.25, 3.5, 0.75, 10.1, 2.0}, kSampleRate};
    const FilterCoefficients filt = design_bandpass(6, 0.0, 60e3, kSampleRate);
    const auto ya = apply_filter(filt, delay_and_sum(a, d)).samples;
    const auto yb = apply_filter(filt, delay_and_sum(b, d)).samples;
    const auto ym = apply_filter(filt, delay_and_sum(mix, d)).samples;
    for (std::size_t n = 0; n < L; ++n) REQUIRE(ym[n] == doctest::Approx(ca * ya[n] + cb * yb[n]).epsilon(1e-9).scale(1.0));
  }
}

TEST_CASE("delay_and_sum dimension checks") {
  const MultichannelFrame f = random_frame(4, 256, 1);
  CHECK(kind_of([&] { delay_and_sum(f, DelaySet{{0, 0, 0}, kSampleRate}); }) == ErrorKind::dimension);
  CHECK(kind_of([&] { delay_and_sum(f, DelaySet{{0, 0, 0, 256}, kSampleRate}); }) == ErrorKind::dimension);
}

TEST_CASE("steering at the true source direction maximizes output power") {
  SceneConfig scene;
  scene.interferer_gain = 0.0;
  scene.machine_noise_gain = 0.0;
  scene.sensor_noise_sigma = 0.0;
  scene.n_total = 10;
  scene.frame_seconds = 0.01;
  WearProfile wear;
  wear.frame_jitter_db = 0.0;
  const ArrayGeometry geom = random_geometry(7, 32, 0.05);
  const CaptureSynthesizer synth(scene, wear, geom);
  const MultichannelFrame frame = synth.capture(5, 0, 9);

  auto power = [&](const SteeringDirection& psi) {
    const auto y = delay_and_sum(frame, steering_delays(geom, psi, scene.speed_of_sound, scene.sample_rate));
    double p = 0.0;
    for (std::size_t n = 200; n + 200 < y.samples.size(); ++n) p += y.samples[n] * y.samples[n];
    return p;
  };
  const double on_target = power(scene.source_dir);
  int tested = 0;
  for (int i = 0; i < 12; ++i)
    for (int j = 0; j < 5; ++j) {
      const auto psi = SteeringDirection::from_angles(2 * std::numbers::pi * i / 12, 0.15 + 0.28 * j);
      const double d = (psi.vector() - scene.source_dir.vector()).norm();
      if (d < 1e-9) continue;
      CHECK(power(psi) <= on_target);
      ++tested;
    }
  CHECK(tested >= 50);
}

TEST_CASE("welch: segment layout and shape") {
  const auto starts = welch_segment_starts(18000, 1024, 0.5);
  CHECK(starts.size() == 34);
  CHECK(starts[1] == 512);
  CHECK(starts.back() + 1024 <= 18000);
  const auto w = hamming_window(1024);
  CHECK(w[0] == doctest::Approx(0.08));
  CHECK(w[512] == doctest::Approx(1.0));
  const auto p = welch_psd(std::vector<double>(18000, 0.0), 450e3);
  CHECK(p.bins() == 513);
  CHECK(p.frequency(512) == doctest::Approx(225e3));
  for (double v : p.power) CHECK(v == 0.0);
}

TEST_CASE("welch: short input is rejected") {
  CHECK(kind_of([] { welch_psd(std::vector<double>(1000, 1.0), 450e3); }) == ErrorKind::insufficient_data);
}

TEST_CASE("welch: white noise integrates to its variance") {
  const auto x = oracle::white_noise(18000, 77);
  const auto p = welch_psd(x, 450e3);
  double total = 0.0;
  for (double v : p.power) total += v * p.bin_width();
  CHECK(total == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("welch: matches a direct DFT oracle") {
  for (std::uint64_t seed : {1u, 2u}) {
    const auto x = oracle::white_noise(6000, seed, 3.0);
    const auto fast = welch_psd(x, 450e3).power;
    const auto slow = oracle::welch_direct(x, 450e3);
    REQUIRE(fast.size() == slow.size());
    CHECK(oracle::max_relative_error(fast, slow, 1e-12) < 1e-6);
  }
}

TEST_CASE("welch: bin-centred sinusoid recovers A^2/2") {
  const double fs = 450e3, A = 2.0, f0 = 100 * fs / 1024;
  std::vector<double> x(18000);
  for (std::size_t n = 0; n < x.size(); ++n) x[n] = A * std::cos(2 * std::numbers::pi * f0 * n / fs + 0.3);
  const auto p = welch_psd(x, fs);
  const auto peak = std::max_element(p.power.begin(), p.power.end()) - p.power.begin();
  CHECK(peak == 100);
  double integrated = 0.0;
  for (int k = 96; k <= 104; ++k) integrated += p.power[k] * p.bin_width();
  CHECK(integrated == doctest::Approx(A * A / 2).epsilon(0.05));
}

TEST_CASE("welch: non-negative for arbitrary finite input") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto x = oracle::white_noise(3000, seed, 1e3);
    for (std::size_t n = 0; n < x.size(); n += 7) x[n] = std::pow(-1.0, n) * 1e6;
    for (double v : welch_psd(x, 450e3).power) REQUIRE(v >= 0.0);
  }
}

TEST_CASE("delay_and_sum: uncorrelated sensor noise gives 10 log10(M) of array gain") {
  const std::size_t mics = 32, n = 4000;
  const ArrayGeometry geom = random_geometry(7, mics, 0.05);
  const DelaySet steer = steering_delays(geom, SteeringDirection(Vec3{0.0, 0.0, 1.0}), kSpeedOfSound, kSampleRate);
  double gain = 0.0;
  for (std::uint64_t t = 0; t < 20; ++t) {
    const auto s = oracle::white_noise(n, 40 + t);
    MultichannelFrame sig(mics, n, kSampleRate);
    for (std::size_t m = 0; m < mics; ++m) std::copy(s.begin(), s.end(), sig.channel(m).begin());
    const MultichannelFrame noise = random_frame(mics, n, 700 + t);
    auto power = [](std::span<const double> x) {
      double p = 0.0;
      for (double v : x) p += v * v;
      return p;
    };
    const double in = power(sig.channel(0)) / power(noise.channel(0));
    const double out = power(delay_and_sum(sig, steer).samples) / power(delay_and_sum(noise, steer).samples);
    gain += 10.0 * std::log10(out / in) / 20.0;
  }
  CHECK(steer.max() == 0.0);
  CHECK(gain == doctest::Approx(10.0 * std::log10(32.0)).epsilon(0.05));
}
