#include "toolwear/synth.hpp"

#include <boost/random/normal_distribution.hpp>

#include <algorithm>
#include <cmath>
#include <atomic>
#include <mutex>
#include <numbers>

#include "toolwear/error.hpp"
#include "toolwear/fft.hpp"
#include "toolwear/parallel.hpp"

namespace toolwear {

using cplx = std::complex<double>;

namespace {
double material_sign(Material m) { return m == Material::chromoly ? 1.0 : -1.0; }
double db_to_amplitude(double db) { return std::pow(10.0, db / 20.0); }
}  // namespace

double WearProfile::centroid(double fraction) const {
  return centroid_start_hz + (centroid_end_hz - centroid_start_hz) * fraction;
}

double WearProfile::gain_db(double fraction) const { return gain_start_db + gain_rise_db * fraction; }

double WearProfile::centroid(double fraction, Material m) const {
  return centroid(fraction) + material_sign(m) * material_centroid_hz;
}

double WearProfile::gain_db(double fraction, Material m) const {
  return gain_db(fraction) + material_sign(m) * material_gain_db;
}

void WearProfile::validate() const {
  const double lo = std::min(centroid_start_hz, centroid_end_hz) - std::abs(material_centroid_hz);
  const double hi = std::max(centroid_start_hz, centroid_end_hz) + std::abs(material_centroid_hz);
  if (!(lo > 20e3) || !(hi < 60e3))
    throw Error(ErrorKind::invalid_argument, "wear centroid trajectory must stay inside (20 kHz, 60 kHz)");
  if (centroid_start_hz == centroid_end_hz)
    throw Error(ErrorKind::invalid_argument, "wear centroid must move over the tool life");
  if (!(bandwidth_hz > 0.0)) throw Error(ErrorKind::invalid_argument, "wear bandwidth must be positive");
  if (!(gain_rise_db >= 0.0))
    throw Error(ErrorKind::invalid_argument, "emission gain curve must be non-decreasing");
  if (!(frame_jitter_db >= 0.0)) throw Error(ErrorKind::invalid_argument, "frame jitter must be >= 0");
  for (double v : {gain_start_db, material_gain_db, material_centroid_hz})
    if (!std::isfinite(v)) throw Error(ErrorKind::invalid_argument, "wear parameters must be finite");
}

void SceneConfig::validate() const {
  if (source_dir.vector() == interferer_dir.vector())
    throw Error(ErrorKind::invalid_argument, "source and interferer directions must differ");
  if (!(interferer_gain >= 0.0) || !(machine_noise_gain >= 0.0) || !(sensor_noise_sigma >= 0.0))
    throw Error(ErrorKind::invalid_argument, "scene gains must be non-negative");
  if (n_total < 2) throw Error(ErrorKind::invalid_argument, "n_total must be at least 2");
  if (!(speed_of_sound > 0.0) || !(sample_rate > 0.0) || !(frame_seconds > 0.0))
    throw Error(ErrorKind::invalid_argument, "speed of sound, sample rate and frame length must be positive");
  if (!(interferer_lo_hz >= 0.0) || !(interferer_lo_hz < interferer_hi_hz))
    throw Error(ErrorKind::invalid_argument, "interferer band must satisfy 0 <= lo < hi");
  if (!(machine_noise_corner_hz > 0.0))
    throw Error(ErrorKind::invalid_argument, "machine noise corner must be positive");
}

double SceneConfig::run_fraction(int run) const {
  return static_cast<double>(run - 1) / static_cast<double>(n_total - 1);
}

Material material_for_run(std::uint64_t seed, int run) {
  auto rng = make_rng(seed, 0x6d61746c, static_cast<std::uint64_t>(run));
  return (rng() & 1u) ? Material::chromoly : Material::c45;
}

struct CaptureSynthesizer::FftHolder {
  explicit FftHolder(std::size_t n) : fft(n) {}
  RealFft fft;
};

namespace {

// Per-bin weights normalized so a spectrum drawn with them has unit variance
// after the 1/L inverse transform. DC and Nyquist stay empty.
std::vector<double> variance_weights(std::vector<double> shape, std::size_t length) {
  double sum = 0.0;
  for (std::size_t k = 1; k + 1 < shape.size(); ++k) sum += shape[k];
  shape.front() = 0.0;
  shape.back() = 0.0;
  if (sum <= 0.0) return shape;
  const double l = static_cast<double>(length);
  for (double& s : shape) s = s * l * l / (2.0 * sum);
  return shape;
}

std::vector<cplx> phasor_table(const std::vector<double>& lags, std::size_t bins, std::size_t length) {
  std::vector<cplx> table(lags.size() * bins);
  for (std::size_t m = 0; m < lags.size(); ++m) {
    for (std::size_t k = 0; k < bins; ++k) {
      const double phase = -2.0 * std::numbers::pi * static_cast<double>(k) * lags[m] /
                           static_cast<double>(length);
      table[m * bins + k] = std::polar(1.0, phase);
    }
  }
  return table;
}

std::vector<double> arrival_lags(const ArrayGeometry& geom, const SteeringDirection& dir,
                                 const SceneConfig& scene) {
  // Microphones nearest the source hear it first; lag = max steering delay - steering delay.
  const DelaySet d = steering_delays(geom, dir, scene.speed_of_sound, scene.sample_rate);
  const double top = d.max();
  std::vector<double> lags(d.size());
  for (std::size_t m = 0; m < d.size(); ++m) lags[m] = top - d.delays[m];
  return lags;
}

}  // namespace

CaptureSynthesizer::CaptureSynthesizer(SceneConfig scene, WearProfile wear, ArrayGeometry geom)
    : scene_(std::move(scene)), wear_(wear), geom_(std::move(geom)) {
  scene_.validate();
  wear_.validate();
  length_ = toolwear::frame_length(scene_.sample_rate, scene_.frame_seconds);
  if (length_ < 4) throw Error(ErrorKind::invalid_argument, "capture too short");
  fft_ = std::make_unique<FftHolder>(length_);
  const std::size_t bins = fft_->fft.bins();
  source_lags_ = arrival_lags(geom_, scene_.source_dir, scene_);
  interferer_lags_ = arrival_lags(geom_, scene_.interferer_dir, scene_);
  source_phasors_ = phasor_table(source_lags_, bins, length_);
  interferer_phasors_ = phasor_table(interferer_lags_, bins, length_);

  const double df = scene_.sample_rate / static_cast<double>(length_);
  std::vector<double> machine(bins), interferer(bins);
  for (std::size_t k = 0; k < bins; ++k) {
    const double f = df * static_cast<double>(k);
    const double r = f / scene_.machine_noise_corner_hz;
    machine[k] = 1.0 / (1.0 + r * r * r * r);
    interferer[k] = (f >= scene_.interferer_lo_hz && f <= scene_.interferer_hi_hz) ? 1.0 : 0.0;
  }
  machine_shape_ = variance_weights(std::move(machine), length_);
  interferer_shape_ = variance_weights(std::move(interferer), length_);
}

CaptureSynthesizer::~CaptureSynthesizer() = default;

MultichannelFrame CaptureSynthesizer::capture(int run, std::int64_t frame_index,
                                              std::uint64_t seed) const {
  if (run < 1 || run > scene_.n_total)
    throw Error(ErrorKind::invalid_run, "run " + std::to_string(run) + " outside 1.." +
                                            std::to_string(scene_.n_total));
  const std::size_t bins = fft_->fft.bins();
  const std::size_t mics = geom_.size();
  const double df = scene_.sample_rate / static_cast<double>(length_);
  auto rng = make_rng(seed, 0x63617074, static_cast<std::uint64_t>(run),
                      static_cast<std::uint64_t>(frame_index));
  boost::random::normal_distribution<double> gauss(0.0, 1.0);

  const double fraction = scene_.run_fraction(run);
  const Material material = material_for_run(seed, run);
  const double level_db = wear_.gain_db(fraction, material) + wear_.frame_jitter_db * gauss(rng);
  const double emission_rms = db_to_amplitude(level_db);
  const double centroid = wear_.centroid(fraction, material);

  std::vector<double> emission(bins);
  for (std::size_t k = 0; k < bins; ++k) {
    const double u = (df * static_cast<double>(k) - centroid) / wear_.bandwidth_hz;
    emission[k] = std::exp(-0.5 * u * u);
  }
  emission = variance_weights(std::move(emission), length_);

  // Spectra arriving from the tool direction (cutting emission plus machine
  // motion noise) and from the interferer direction.
  std::vector<cplx> tool(bins), other(bins);
  const double machine_var = scene_.machine_noise_gain * scene_.machine_noise_gain;
  const double interferer_var = scene_.interferer_gain * scene_.interferer_gain;
  const double emission_var = emission_rms * emission_rms;
  for (std::size_t k = 0; k < bins; ++k) {
    const double tool_power = emission_var * emission[k] + machine_var * machine_shape_[k];
    const double a = std::sqrt(0.5 * tool_power);
    const double re = gauss(rng), im = gauss(rng);
    tool[k] = tool_power > 0.0 ? cplx(a * re, a * im) : cplx(0.0);
  }
  for (std::size_t k = 0; k < bins; ++k) {
    const double p = interferer_var * interferer_shape_[k];
    const double a = std::sqrt(0.5 * p);
    const double re = gauss(rng), im = gauss(rng);
    other[k] = p > 0.0 ? cplx(a * re, a * im) : cplx(0.0);
  }

  MultichannelFrame frame(mics, length_, scene_.sample_rate);
  frame.frame_index = frame_index;
  frame.run_id = run;
  std::vector<cplx> mixed(bins);
  const double inv_len = 1.0 / static_cast<double>(length_);
  for (std::size_t m = 0; m < mics; ++m) {
    const cplx* ps = source_phasors_.data() + m * bins;
    const cplx* pi = interferer_phasors_.data() + m * bins;
    for (std::size_t k = 0; k < bins; ++k) {
      // Written out to avoid the NaN-recovering complex multiply.
      const double re = tool[k].real() * ps[k].real() - tool[k].imag() * ps[k].imag() +
                        other[k].real() * pi[k].real() - other[k].imag() * pi[k].imag();
      const double im = tool[k].real() * ps[k].imag() + tool[k].imag() * ps[k].real() +
                        other[k].real() * pi[k].imag() + other[k].imag() * pi[k].real();
      mixed[k] = cplx(re, im);
    }
    auto ch = frame.channel(m);
    fft_->fft.inverse(mixed, ch);
    for (double& v : ch) v *= inv_len;
  }
  if (scene_.sensor_noise_sigma > 0.0) {
    boost::random::normal_distribution<double> sensor(0.0, scene_.sensor_noise_sigma);
    for (std::size_t m = 0; m < mics; ++m)
      for (double& v : frame.channel(m)) v += sensor(rng);
  }
  return frame;
}

MultichannelFrame synth_capture(int run, std::int64_t frame_index, const SceneConfig& scene,
                                const WearProfile& wear, const ArrayGeometry& geom,
                                std::uint64_t seed) {
  return CaptureSynthesizer(scene, wear, geom).capture(run, frame_index, seed);
}

PowerSpectrum process_frame(const MultichannelFrame& frame, const DelaySet& delays,
                            const FilterCoefficients& filter, const PipelineOptions& opts) {
  BeamformedFrame beam = delay_and_sum(frame, delays);
  apply_filter_inplace(filter, beam.samples);
  return welch_psd(beam, opts.welch_window, opts.welch_overlap);
}

std::vector<PowerMatrix> synth_power_matrices(const SceneConfig& scene, const WearProfile& wear,
                                              const ArrayGeometry& geom, std::size_t frames_per_run,
                                              std::uint64_t seed, const PipelineOptions& opts,
                                              const ProgressFn& progress) {
  if (frames_per_run < 1) throw Error(ErrorKind::invalid_argument, "frames_per_run must be >= 1");
  const CaptureSynthesizer synth(scene, wear, geom);
  if (synth.frame_length() < opts.welch_window)
    throw Error(ErrorKind::insufficient_data, "capture is shorter than one Welch window");
  const DelaySet delays = steering_delays(geom, scene.source_dir, scene.speed_of_sound, scene.sample_rate);
  const FilterCoefficients filter =
      design_bandpass(opts.filter_order, opts.band_lo_hz, opts.band_hi_hz, scene.sample_rate);

  const auto runs = static_cast<std::size_t>(scene.n_total);
  std::vector<PowerMatrix> raw(runs);
  std::atomic<int> done{0};
  std::mutex progress_mutex;
  parallel_for(runs, [&](std::size_t i) {
    const int run = static_cast<int>(i) + 1;
    std::vector<PowerSpectrum> spectra;
    spectra.reserve(frames_per_run);
    for (std::size_t n = 0; n < frames_per_run; ++n)
      spectra.push_back(process_frame(synth.capture(run, static_cast<std::int64_t>(n), seed), delays,
                                      filter, opts));
    raw[i] = assemble(spectra);
    const int finished = ++done;
    if (progress) {
      std::lock_guard lock(progress_mutex);
      progress(finished, scene.n_total);
    }
  });
  return raw;
}

SpectrogramDataset synth_dataset(const SceneConfig& scene, const WearProfile& wear,
                                 const ArrayGeometry& geom, std::size_t frames_per_run,
                                 std::uint64_t seed, const PipelineOptions& opts,
                                 const ProgressFn& progress) {
  const auto raw = synth_power_matrices(scene, wear, geom, frames_per_run, seed, opts, progress);
  double global_ref = 0.0;
  for (const auto& m : raw) global_ref = std::max(global_ref, m.max());

  SpectrogramDataset ds;
  ds.n_total = scene.n_total;
  ds.sensor = scene.sensor;
  ds.runs.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const int run = static_cast<int>(i) + 1;
    const double ref = opts.anchor == DbAnchor::global ? global_ref : raw[i].max();
    Spectrogram sg;
    sg.bins = raw[i].bins;
    sg.frames = raw[i].frames;
    sg.values = normalize_db(raw[i], ref > 0.0 ? ref : 1.0);
    sg.run_label = run;
    sg.material = material_for_run(seed, run);
    sg.sensor = scene.sensor;
    ds.runs.push_back(std::move(sg));
  }
  return ds;
}

}  // namespace toolwear
