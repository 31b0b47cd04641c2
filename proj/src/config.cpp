#include "toolwear/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "toolwear/error.hpp"

namespace toolwear {

using nlohmann::json;

namespace {

[[noreturn]] void config_error(const std::string& path, const std::string& msg) {
  throw Error(ErrorKind::config, (path.empty() ? std::string("<root>") : path) + ": " + msg);
}

// Reads keys of one JSON object and rejects any it was not asked about.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) config_error(path_, "expected an object");
  }

  std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* find(const std::string& key) {
    auto it = j_.find(key);
    if (it == j_.end()) return nullptr;
    used_.insert(key);
    return &*it;
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    if (const json* v = find(key)) out = convert<T>(*v, key_path(key));
  }

  template <typename T>
  static T convert(const json& v, const std::string& path) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) config_error(path, "expected a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>) {
      if (!v.is_number_unsigned()) config_error(path, "expected a non-negative integer");
      return v.get<T>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) config_error(path, "expected an integer");
      return v.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) config_error(path, "expected a number");
      return v.get<T>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) config_error(path, "expected a string");
      return v.get<std::string>();
    } else {
      static_assert(sizeof(T) == 0, "unsupported config type");
    }
  }

  template <typename T>
  std::vector<T> get_list(const std::string& key, std::vector<T> fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    if (!v->is_array()) config_error(key_path(key), "expected an array");
    std::vector<T> out;
    for (std::size_t i = 0; i < v->size(); ++i)
      out.push_back(convert<T>((*v)[i], key_path(key) + "[" + std::to_string(i) + "]"));
    return out;
  }

  Section sub(const std::string& key, const json& empty) {
    const json* v = find(key);
    return Section(v ? *v : empty, key_path(key));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) config_error(key_path(it.key()), "unknown key");
  }

  const std::string& path() const { return path_; }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

const json kEmpty = json::object();

// Runs a downstream validator, re-raising its complaint as a config error at `path`.
template <typename F>
void check(const std::string& path, F&& f) {
  try {
    f();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::config && std::string(e.what()).rfind(path, 0) == 0) throw;
    config_error(path, e.what());
  }
}

SteeringDirection parse_direction(Section s, const SteeringDirection& fallback) {
  SteeringDirection out = fallback;
  std::vector<double> v = s.get_list<double>("vector", {});
  double az = 0.0, el = 0.0;
  const bool has_az = s.find("azimuth_rad") != nullptr;
  const bool has_el = s.find("elevation_rad") != nullptr;
  s.get("azimuth_rad", az);
  s.get("elevation_rad", el);
  s.finish();
  if (!v.empty() && (has_az || has_el)) config_error(s.path(), "give either vector or azimuth/elevation");
  if (!v.empty()) {
    if (v.size() != 3) config_error(s.key_path("vector"), "expected 3 components");
    check(s.key_path("vector"), [&] { out = SteeringDirection(Vec3{v[0], v[1], v[2]}); });
  } else if (has_az || has_el) {
    check(s.path(), [&] { out = SteeringDirection::from_angles(az, el); });
  }
  return out;
}

template <std::size_t N>
void get_array(Section& s, const std::string& key, std::array<double, N>& out) {
  std::vector<double> v = s.get_list<double>(key, std::vector<double>(out.begin(), out.end()));
  if (v.size() != N) config_error(s.key_path(key), "expected " + std::to_string(N) + " numbers");
  std::copy(v.begin(), v.end(), out.begin());
}

}  // namespace

void PipelineConfig::validate() const {
  if (geometry.file.empty() && geometry.mics == 0) config_error("geometry.mics", "must be positive");
  if (!(geometry.aperture_m > 0.0)) config_error("geometry.aperture_m", "must be positive");
  check("scene", [&] { scene.validate(); });
  check("wear", [&] { wear.validate(); });
  check("dsp", [&] { design_bandpass(dsp.filter_order, dsp.band_lo_hz, dsp.band_hi_hz, scene.sample_rate); });
  if (dsp.welch_window < 2) config_error("dsp.welch_window", "must be at least 2");
  if (!(dsp.welch_overlap >= 0.0 && dsp.welch_overlap < 1.0)) config_error("dsp.welch_overlap", "must be in [0, 1)");
  if (frame_length(scene.sample_rate, scene.frame_seconds) < dsp.welch_window)
    config_error("dsp.welch_window", "longer than one capture frame");
  if (spectrogram.frames_per_run == 0) config_error("spectrogram.frames_per_run", "must be positive");
  double total = 0.0;
  for (double f : spectrogram.split) {
    if (!(f >= 0.0)) config_error("spectrogram.split", "fractions must be non-negative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) config_error("spectrogram.split", "fractions must sum to 1");
  if (spectrogram.augment.max_shift < 0) config_error("spectrogram.augment.max_shift", "must be non-negative");
  if (static_cast<std::size_t>(spectrogram.augment.max_shift) >= spectrogram.frames_per_run)
    config_error("spectrogram.augment.max_shift", "must be smaller than frames_per_run");
  if (!(spectrogram.augment.noise_db_sigma >= 0.0))
    config_error("spectrogram.augment.noise_db_sigma", "must be non-negative");
  check("nn.architecture", [&] { arch.validate(); });
  if (arch.input_width != spectrogram.frames_per_run)
    config_error("nn.architecture.input_width", "must equal spectrogram.frames_per_run");
  check("nn.training", [&] { train.validate(); });
  if (eval.window < 1 || eval.window % 2 == 0) config_error("eval.window", "must be a positive odd integer");
}

PipelineConfig parse_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    config_error("", std::string("malformed JSON: ") + e.what());
  }
  PipelineConfig cfg;
  Section top(root, "");
  top.get("seed", cfg.seed);
  top.get("n_total", cfg.scene.n_total);

  {
    Section s = top.sub("geometry", kEmpty);
    std::string file;
    s.get("file", file);
    cfg.geometry.file = file;
    s.get("mics", cfg.geometry.mics);
    s.get("aperture_m", cfg.geometry.aperture_m);
    s.get("seed", cfg.geometry.seed);
    s.finish();
  }
  {
    Section s = top.sub("scene", kEmpty);
    SceneConfig& sc = cfg.scene;
    sc.source_dir = parse_direction(s.sub("source", kEmpty), sc.source_dir);
    sc.interferer_dir = parse_direction(s.sub("interferer", kEmpty), sc.interferer_dir);
    s.get("interferer_gain", sc.interferer_gain);
    std::array<double, 2> band{sc.interferer_lo_hz, sc.interferer_hi_hz};
    get_array(s, "interferer_band_hz", band);
    sc.interferer_lo_hz = band[0];
    sc.interferer_hi_hz = band[1];
    s.get("machine_noise_gain", sc.machine_noise_gain);
    s.get("machine_noise_corner_hz", sc.machine_noise_corner_hz);
    s.get("sensor_noise_sigma", sc.sensor_noise_sigma);
    s.get("speed_of_sound", sc.speed_of_sound);
    s.get("sample_rate_hz", sc.sample_rate);
    s.get("frame_seconds", sc.frame_seconds);
    std::string sensor = to_string(sc.sensor);
    s.get("sensor", sensor);
    check(s.key_path("sensor"), [&] { sc.sensor = parse_sensor_position(sensor); });
    s.finish();
  }
  {
    Section s = top.sub("wear", kEmpty);
    WearProfile& w = cfg.wear;
    s.get("centroid_start_hz", w.centroid_start_hz);
    s.get("centroid_end_hz", w.centroid_end_hz);
    s.get("bandwidth_hz", w.bandwidth_hz);
    s.get("gain_start_db", w.gain_start_db);
    s.get("gain_rise_db", w.gain_rise_db);
    s.get("material_gain_db", w.material_gain_db);
    s.get("material_centroid_hz", w.material_centroid_hz);
    s.get("frame_jitter_db", w.frame_jitter_db);
    s.finish();
  }
  {
    Section s = top.sub("dsp", kEmpty);
    PipelineOptions& d = cfg.dsp;
    s.get("filter_order", d.filter_order);
    std::array<double, 2> band{d.band_lo_hz, d.band_hi_hz};
    get_array(s, "band_hz", band);
    d.band_lo_hz = band[0];
    d.band_hi_hz = band[1];
    s.get("welch_window", d.welch_window);
    s.get("welch_overlap", d.welch_overlap);
    s.finish();
  }
  {
    Section s = top.sub("spectrogram", kEmpty);
    SpectrogramConfig& sp = cfg.spectrogram;
    s.get("frames_per_run", sp.frames_per_run);
    cfg.arch.input_width = sp.frames_per_run;
    std::string anchor = cfg.dsp.anchor == DbAnchor::global ? "global" : "per_run";
    s.get("db_anchor", anchor);
    if (anchor == "global")
      cfg.dsp.anchor = DbAnchor::global;
    else if (anchor == "per_run")
      cfg.dsp.anchor = DbAnchor::per_run;
    else
      config_error(s.key_path("db_anchor"), "expected \"global\" or \"per_run\"");
    s.get("split_before_augment", sp.split_before_augment);
    get_array(s, "split", sp.split);
    Section a = s.sub("augment", kEmpty);
    a.get("copies", sp.augment.copies);
    a.get("max_shift", sp.augment.max_shift);
    a.get("noise_db_sigma", sp.augment.noise_db_sigma);
    a.finish();
    s.finish();
  }
  {
    Section s = top.sub("nn", kEmpty);
    Section a = s.sub("architecture", kEmpty);
    nn::Architecture& ar = cfg.arch;
    a.get("input_height", ar.input_height);
    a.get("input_width", ar.input_width);
    ar.channels = a.get_list<std::size_t>("channels", ar.channels);
    a.get("kernel", ar.kernel);
    a.get("stride", ar.stride);
    a.get("padding", ar.padding);
    a.get("pool", ar.pool);
    std::string pool = nn::to_string(ar.pool_kind), norm = nn::to_string(ar.norm_kind);
    a.get("pool_kind", pool);
    a.get("norm_kind", norm);
    check(a.key_path("pool_kind"), [&] { ar.pool_kind = nn::parse_pool_kind(pool); });
    check(a.key_path("norm_kind"), [&] { ar.norm_kind = nn::parse_norm_kind(norm); });
    a.get("leaky_slope", ar.leaky_slope);
    a.get("dropout", ar.dropout);
    a.get("fc_hidden", ar.fc_hidden);
    a.finish();

    Section t = s.sub("training", kEmpty);
    nn::TrainConfig& tc = cfg.train;
    t.get("learning_rate", tc.adam.learning_rate);
    t.get("beta1", tc.adam.beta1);
    t.get("beta2", tc.adam.beta2);
    t.get("epsilon", tc.adam.epsilon);
    t.get("max_epochs", tc.max_epochs);
    t.get("batch_size", tc.batch_size);
    t.get("patience", tc.patience);
    t.get("batch_norm_momentum", tc.batch_norm_momentum);
    t.finish();
    s.finish();
  }
  {
    Section s = top.sub("eval", kEmpty);
    s.get("window", cfg.eval.window);
    s.finish();
  }
  top.finish();
  cfg.train.seed = cfg.seed;
  cfg.validate();
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::config, "cannot read config file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string dump_config(const PipelineConfig& cfg) {
  auto dir = [](const SteeringDirection& d) {
    const Vec3& v = d.vector();
    return json{{"vector", {v.x, v.y, v.z}}};
  };
  const auto& sc = cfg.scene;
  const auto& sp = cfg.spectrogram;
  const auto& ar = cfg.arch;
  const auto& tc = cfg.train;
  json j = {
      {"seed", cfg.seed},
      {"n_total", sc.n_total},
      {"geometry",
       {{"file", cfg.geometry.file.string()},
        {"mics", cfg.geometry.mics},
        {"aperture_m", cfg.geometry.aperture_m},
        {"seed", cfg.geometry.seed}}},
      {"scene",
       {{"source", dir(sc.source_dir)},
        {"interferer", dir(sc.interferer_dir)},
        {"interferer_gain", sc.interferer_gain},
        {"interferer_band_hz", {sc.interferer_lo_hz, sc.interferer_hi_hz}},
        {"machine_noise_gain", sc.machine_noise_gain},
        {"machine_noise_corner_hz", sc.machine_noise_corner_hz},
        {"sensor_noise_sigma", sc.sensor_noise_sigma},
        {"speed_of_sound", sc.speed_of_sound},
        {"sample_rate_hz", sc.sample_rate},
        {"frame_seconds", sc.frame_seconds},
        {"sensor", to_string(sc.sensor)}}},
      {"wear",
       {{"centroid_start_hz", cfg.wear.centroid_start_hz},
        {"centroid_end_hz", cfg.wear.centroid_end_hz},
        {"bandwidth_hz", cfg.wear.bandwidth_hz},
        {"gain_start_db", cfg.wear.gain_start_db},
        {"gain_rise_db", cfg.wear.gain_rise_db},
        {"material_gain_db", cfg.wear.material_gain_db},
        {"material_centroid_hz", cfg.wear.material_centroid_hz},
        {"frame_jitter_db", cfg.wear.frame_jitter_db}}},
      {"dsp",
       {{"filter_order", cfg.dsp.filter_order},
        {"band_hz", {cfg.dsp.band_lo_hz, cfg.dsp.band_hi_hz}},
        {"welch_window", cfg.dsp.welch_window},
        {"welch_overlap", cfg.dsp.welch_overlap}}},
      {"spectrogram",
       {{"frames_per_run", sp.frames_per_run},
        {"db_anchor", cfg.dsp.anchor == DbAnchor::global ? "global" : "per_run"},
        {"split_before_augment", sp.split_before_augment},
        {"split", sp.split},
        {"augment",
         {{"copies", sp.augment.copies},
          {"max_shift", sp.augment.max_shift},
          {"noise_db_sigma", sp.augment.noise_db_sigma}}}}},
      {"nn",
       {{"architecture",
         {{"input_height", ar.input_height},
          {"input_width", ar.input_width},
          {"channels", ar.channels},
          {"kernel", ar.kernel},
          {"stride", ar.stride},
          {"padding", ar.padding},
          {"pool", ar.pool},
          {"pool_kind", nn::to_string(ar.pool_kind)},
          {"norm_kind", nn::to_string(ar.norm_kind)},
          {"leaky_slope", ar.leaky_slope},
          {"dropout", ar.dropout},
          {"fc_hidden", ar.fc_hidden}}},
        {"training",
         {{"learning_rate", tc.adam.learning_rate},
          {"beta1", tc.adam.beta1},
          {"beta2", tc.adam.beta2},
          {"epsilon", tc.adam.epsilon},
          {"max_epochs", tc.max_epochs},
          {"batch_size", tc.batch_size},
          {"patience", tc.patience},
          {"batch_norm_momentum", tc.batch_norm_momentum}}}}},
      {"eval", {{"window", cfg.eval.window}}},
  };
  return j.dump(2) + "\n";
}

ArrayGeometry make_geometry(const GeometryConfig& g) {
  if (g.file.empty()) return random_geometry(g.seed, g.mics, g.aperture_m);
  std::ifstream in(g.file);
  if (!in) throw Error(ErrorKind::config, "geometry.file: cannot read '" + g.file.string() + "'");
  return ArrayGeometry::parse(in);
}

}  // namespace toolwear
