#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "support.hpp"
#include "toolwear/error.hpp"
#include "toolwear/synth.hpp"

using namespace toolwear;

namespace {

SceneConfig quiet_scene() {
  SceneConfig s;
  s.interferer_gain = 0.0;
  s.machine_noise_gain = 0.0;
  s.sensor_noise_sigma = 0.0;
  return s;
}

std::complex<double> dft_bin(std::span<const double> x, std::size_t k) {
  std::complex<long double> acc = 0;
  const std::size_t L = x.size();
  for (std::size_t n = 0; n < L; ++n) {
    const long double ang = -2.0L * std::numbers::pi_v<long double> * static_cast<long double>((k * n) % L) / L;
    acc += std::complex<long double>(x[n] * std::cos(ang), x[n] * std::sin(ang));
  }
  return {static_cast<double>(acc.real()), static_cast<double>(acc.imag())};
}

// Power-weighted mean frequency over [lo, hi].
double centroid(const PowerSpectrum& p, double lo, double hi) {
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < p.bins(); ++k) {
    const double f = p.frequency(k);
    if (f < lo || f > hi) continue;
    num += f * p.power[k];
    den += p.power[k];
  }
  return num / den;
}

double band_power(const PowerSpectrum& p, double lo, double hi) {
  double s = 0.0;
  for (std::size_t k = 0; k < p.bins(); ++k)
    if (p.frequency(k) >= lo && p.frequency(k) <= hi) s += p.power[k];
  return s;
}

}  // namespace

TEST_CASE("wear profile parameters are monotone in run number") {
  const WearProfile w;
  SceneConfig scene;
  double prev_c = -1, prev_g = -1e9;
  for (int run = 1; run <= scene.n_total; ++run) {
    const double f = scene.run_fraction(run);
    CHECK(w.centroid(f) > prev_c);
    CHECK(w.gain_db(f) >= prev_g);
    prev_c = w.centroid(f);
    prev_g = w.gain_db(f);
  }
  CHECK(scene.run_fraction(1) == 0.0);
  CHECK(scene.run_fraction(scene.n_total) == 1.0);
}

TEST_CASE("wear and scene validation") {
  WearProfile w;
  w.centroid_end_hz = 65e3;
  CHECK_THROWS_AS(w.validate(), Error);
  w = WearProfile{};
  w.gain_rise_db = -1.0;
  CHECK_THROWS_AS(w.validate(), Error);
  SceneConfig s;
  s.interferer_dir = s.source_dir;
  CHECK_THROWS_AS(s.validate(), Error);
  s = SceneConfig{};
  s.n_total = 1;
  CHECK_THROWS_AS(s.validate(), Error);
  s = SceneConfig{};
  s.interferer_gain = -1.0;
  CHECK_THROWS_AS(s.validate(), Error);
}

TEST_CASE("capture: deterministic, shaped, run checked") {
  const ArrayGeometry geom = random_geometry(7, 32, 0.05);
  const CaptureSynthesizer synth(SceneConfig{}, WearProfile{}, geom);
  const MultichannelFrame a = synth.capture(17, 4, 99);
  const MultichannelFrame b = synth_capture(17, 4, SceneConfig{}, WearProfile{}, geom, 99);
  CHECK(a.channels() == 32);
  CHECK(a.length() == 18000);
  CHECK(a.run_id == 17);
  CHECK(a.frame_index == 4);
  CHECK(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
  const MultichannelFrame c = synth.capture(17, 5, 99);
  CHECK(!std::equal(a.data().begin(), a.data().end(), c.data().begin()));
  for (double v : a.data()) REQUIRE((std::isfinite(v) && std::abs(v) < 100.0));
  for (int bad : {0, -3, 351}) {
    try {
      synth.capture(bad, 0, 1);
      FAIL("run accepted");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::invalid_run);
    }
  }
}

TEST_CASE("capture: noiseless channels differ only by plane-wave delays") {
  SceneConfig scene = quiet_scene();
  scene.frame_seconds = 0.004;  // 1800 samples keeps the DFT oracle cheap
  const ArrayGeometry geom = random_geometry(7, 8, 0.05);
  const CaptureSynthesizer synth(scene, WearProfile{}, geom);
  const MultichannelFrame f = synth.capture(100, 0, 3);
  const std::size_t L = f.length();
  const auto& lags = synth.source_lags();
  const DelaySet d = steering_delays(geom, scene.source_dir, scene.speed_of_sound, scene.sample_rate);
  for (std::size_t m = 0; m < geom.size(); ++m) CHECK(lags[m] == doctest::Approx(d.max() - d.delays[m]));

  for (std::size_t k = 100; k < 240; k += 7) {  // 25-60 kHz
    const auto x0 = dft_bin(f.channel(0), k);
    for (std::size_t m = 1; m < geom.size(); ++m) {
      const double shift = lags[m] - lags[0];
      const auto expected = x0 * std::polar(1.0, -2.0 * std::numbers::pi * k * shift / L);
      const auto got = dft_bin(f.channel(m), k);
      REQUIRE(std::abs(got - expected) <= 1e-9 * std::max(1.0, std::abs(x0)));
    }
  }
}

TEST_CASE("emission centroid moves by the configured amount over the tool life") {
  SceneConfig scene = quiet_scene();
  const WearProfile wear;
  const ArrayGeometry geom = random_geometry(7, 32, 0.05);
  const CaptureSynthesizer synth(scene, wear, geom);
  const DelaySet delays = steering_delays(geom, scene.source_dir, scene.speed_of_sound, scene.sample_rate);
  auto measured = [&](int run) {
    double sum = 0.0;
    for (int n = 0; n < 4; ++n) {
      const auto beam = delay_and_sum(synth.capture(run, n, 5), delays);
      sum += centroid(welch_psd(beam), 1e3, 100e3);
    }
    return sum / 4;
  };
  const double shift = measured(scene.n_total) - measured(1);
  const double want = wear.centroid_end_hz - wear.centroid_start_hz;
  CHECK(std::abs(shift - want) <= 0.1 * want);
}

TEST_CASE("beamforming improves tool-to-interferer ratio by at least 6 dB") {
  const ArrayGeometry geom = random_geometry(7, 32, 0.05);
  SceneConfig tool_only = quiet_scene();
  SceneConfig interferer_only = quiet_scene();
  interferer_only.interferer_gain = 1.0;
  WearProfile silent;
  silent.gain_start_db = -400.0;
  silent.material_gain_db = 0.0;
  silent.frame_jitter_db = 0.0;
  const CaptureSynthesizer tool(tool_only, WearProfile{}, geom);
  const CaptureSynthesizer intf(interferer_only, silent, geom);
  const DelaySet delays = steering_delays(geom, tool_only.source_dir, 343.0, kSampleRate);

  double single_s = 0, single_i = 0, beam_s = 0, beam_i = 0;
  for (int trial = 0; trial < 8; ++trial) {
    const auto ft = tool.capture(200, trial, 11), fi = intf.capture(200, trial, 11);
    single_s += band_power(welch_psd(ft.channel(0), kSampleRate), 20e3, 60e3);
    single_i += band_power(welch_psd(fi.channel(0), kSampleRate), 20e3, 60e3);
    beam_s += band_power(welch_psd(delay_and_sum(ft, delays)), 20e3, 60e3);
    beam_i += band_power(welch_psd(delay_and_sum(fi, delays)), 20e3, 60e3);
  }
  const double gain_db = 10 * std::log10((beam_s / beam_i) / (single_s / single_i));
  MESSAGE("interferer-band SNR improvement " << gain_db << " dB");
  CHECK(gain_db >= 6.0);
}

TEST_CASE("machine noise dominates below 5 kHz when its gain is large") {
  const ArrayGeometry geom = random_geometry(7, 32, 0.05);
  SceneConfig machine = quiet_scene();
  machine.machine_noise_gain = 30.0;
  WearProfile silent;
  silent.gain_start_db = -400.0;
  silent.material_gain_db = 0.0;
  silent.frame_jitter_db = 0.0;
  const auto fm = CaptureSynthesizer(machine, silent, geom).capture(10, 0, 1);
  const auto fe = CaptureSynthesizer(quiet_scene(), WearProfile{}, geom).capture(10, 0, 1);
  const double pm = band_power(welch_psd(fm.channel(0), kSampleRate), 0, 5e3);
  const double pe = band_power(welch_psd(fe.channel(0), kSampleRate), 0, 5e3);
  CHECK(pm > 1e3 * pe);
}

TEST_CASE("materials are mixed pseudorandomly and reproducibly") {
  int chromoly = 0;
  for (int run = 1; run <= 350; ++run) {
    chromoly += material_for_run(1, run) == Material::chromoly;
    CHECK(material_for_run(1, run) == material_for_run(1, run));
  }
  CHECK(chromoly > 140);
  CHECK(chromoly < 210);
}

TEST_CASE("synth_dataset: shape, labels, global 90 dB anchor") {
  SceneConfig scene;
  scene.n_total = 4;
  const ArrayGeometry geom = random_geometry(7, 32, 0.05);
  const SpectrogramDataset ds = synth_dataset(scene, WearProfile{}, geom, 3, 2);
  REQUIRE(ds.runs.size() == 4);
  float top = 0.0f;
  for (int i = 0; i < 4; ++i) {
    const Spectrogram& sg = ds.runs[i];
    CHECK(sg.run_label == i + 1);
    CHECK(sg.bins == 513);
    CHECK(sg.frames == 3);
    CHECK(sg.material == material_for_run(2, i + 1));
    for (float v : sg.values) REQUIRE((v >= 0.0f && v <= 90.0f));
    top = std::max(top, *std::max_element(sg.values.begin(), sg.values.end()));
  }
  CHECK(top == 90.0f);

  PipelineOptions per_run;
  per_run.anchor = DbAnchor::per_run;
  const SpectrogramDataset pr = synth_dataset(scene, WearProfile{}, geom, 3, 2, per_run);
  for (const Spectrogram& sg : pr.runs) CHECK(*std::max_element(sg.values.begin(), sg.values.end()) == 90.0f);
}

TEST_CASE("a centroid regression recovers the run number on held-out runs") {
  // Closed-form least squares on the beamformed, filtered spectral centroid:
  // the dataset is learnable without the network.
  SceneConfig scene;
  const ArrayGeometry geom = random_geometry(7, 32, 0.05);
  const CaptureSynthesizer synth(scene, WearProfile{}, geom);
  const DelaySet delays = steering_delays(geom, scene.source_dir, scene.speed_of_sound, scene.sample_rate);
  const FilterCoefficients filter = design_bandpass(6, 0.0, 60e3, scene.sample_rate);
  const PipelineOptions opts;
  std::vector<double> run_ids, feats;
  for (int run = 1; run <= scene.n_total; run += 5) {
    double c = 0.0;
    for (int n = 0; n < 2; ++n) c += centroid(process_frame(synth.capture(run, n, 1), delays, filter, opts), 15e3, 60e3);
    run_ids.push_back(run);
    feats.push_back(c / 2);
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0, cnt = 0;
  for (std::size_t i = 0; i < feats.size(); i += 2) {
    sx += feats[i];
    sy += run_ids[i];
    sxx += feats[i] * feats[i];
    sxy += feats[i] * run_ids[i];
    ++cnt;
  }
  const double slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
  const double icpt = (sy - slope * sx) / cnt;
  double mae = 0.0, held = 0.0;
  for (std::size_t i = 1; i < feats.size(); i += 2) {
    mae += std::abs(slope * feats[i] + icpt - run_ids[i]);
    ++held;
  }
  mae /= held;
  MESSAGE("centroid regression MAE " << mae / scene.n_total * 100 << "% of tool life");
  CHECK(mae <= 0.05 * scene.n_total);
}
