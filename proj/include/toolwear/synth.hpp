#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "toolwear/array_model.hpp"
#include "toolwear/dsp.hpp"
#include "toolwear/spectrogram.hpp"

namespace toolwear {

// Cutting-emission signature as a function of run fraction (0 at run 1, 1 at the last run).
struct WearProfile {
  double centroid_start_hz = 28e3;
  double centroid_end_hz = 48e3;
  double bandwidth_hz = 5e3;        // standard deviation of the Gaussian emission band
  double gain_start_db = 0.0;       // emission RMS at run 1, dB re 1
  double gain_rise_db = 6.0;        // emission level rise over the tool life
  double material_gain_db = 2.0;    // +/- offset, Chromoly up and C45 down
  double material_centroid_hz = 300.0;
  double frame_jitter_db = 1.0;     // per-capture emission level scatter

  double centroid(double fraction) const;
  double gain_db(double fraction) const;
  double centroid(double fraction, Material m) const;
  double gain_db(double fraction, Material m) const;
  void validate() const;
};

struct SceneConfig {
  SteeringDirection source_dir = SteeringDirection::from_angles(0.0, 1.0471975511965976);
  SteeringDirection interferer_dir = SteeringDirection::from_angles(2.5, 0.35);
  double interferer_gain = 1.0;
  double interferer_lo_hz = 5e3;
  double interferer_hi_hz = 80e3;
  double machine_noise_gain = 3.0;
  double machine_noise_corner_hz = 1.5e3;
  double sensor_noise_sigma = 0.5;
  int n_total = 350;
  double speed_of_sound = kSpeedOfSound;
  double sample_rate = kSampleRate;
  double frame_seconds = kFrameSeconds;
  SensorPosition sensor = SensorPosition::inside;

  void validate() const;
  double run_fraction(int run) const;
};

// Material of a run, drawn pseudorandomly per (seed, run).
Material material_for_run(std::uint64_t seed, int run);

// Synthesizes multichannel captures. Frequency-domain generation: each source
// spectrum is phase-shifted per microphone by its plane-wave arrival lag.
class CaptureSynthesizer {
 public:
  CaptureSynthesizer(SceneConfig scene, WearProfile wear, ArrayGeometry geom);
  ~CaptureSynthesizer();

  MultichannelFrame capture(int run, std::int64_t frame_index, std::uint64_t seed) const;

  const SceneConfig& scene() const { return scene_; }
  const WearProfile& wear() const { return wear_; }
  const ArrayGeometry& geometry() const { return geom_; }
  std::size_t frame_length() const { return length_; }
  // Arrival lag of each microphone (samples) for the tool direction.
  const std::vector<double>& source_lags() const { return source_lags_; }

 private:
  SceneConfig scene_;
  WearProfile wear_;
  ArrayGeometry geom_;
  std::size_t length_;
  std::vector<double> source_lags_;
  std::vector<double> interferer_lags_;
  std::vector<std::complex<double>> source_phasors_;      // mics x bins
  std::vector<std::complex<double>> interferer_phasors_;  // mics x bins
  std::vector<double> machine_shape_;
  std::vector<double> interferer_shape_;
  struct FftHolder;
  std::unique_ptr<FftHolder> fft_;
};

MultichannelFrame synth_capture(int run, std::int64_t frame_index, const SceneConfig& scene,
                                const WearProfile& wear, const ArrayGeometry& geom,
                                std::uint64_t seed);

enum class DbAnchor { global, per_run };

struct PipelineOptions {
  int filter_order = 6;
  double band_lo_hz = 0.0;
  double band_hi_hz = 60e3;
  std::size_t welch_window = kWelchWindow;
  double welch_overlap = kWelchOverlap;
  DbAnchor anchor = DbAnchor::global;
};

// Beamform towards `delays`, bandpass, Welch PSD.
PowerSpectrum process_frame(const MultichannelFrame& frame, const DelaySet& delays,
                            const FilterCoefficients& filter, const PipelineOptions& opts);

using ProgressFn = std::function<void(int runs_done, int runs_total)>;

// One spectrogram per run 1..n_total through the full capture pipeline.
SpectrogramDataset synth_dataset(const SceneConfig& scene, const WearProfile& wear,
                                 const ArrayGeometry& geom, std::size_t frames_per_run,
                                 std::uint64_t seed, const PipelineOptions& opts = {},
                                 const ProgressFn& progress = {});

// Unnormalized per-run power matrices (the step before dB scaling).
std::vector<PowerMatrix> synth_power_matrices(const SceneConfig& scene, const WearProfile& wear,
                                              const ArrayGeometry& geom, std::size_t frames_per_run,
                                              std::uint64_t seed, const PipelineOptions& opts = {},
                                              const ProgressFn& progress = {});

}  // namespace toolwear
