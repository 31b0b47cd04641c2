#include <doctest.h>

#include <fstream>

#include "toolwear/config.hpp"
#include "toolwear/error.hpp"

using namespace toolwear;

namespace {

std::string config_error(const std::string& text) {
  try {
    parse_config(text);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::config);
    return e.what();
  }
  FAIL("config accepted: " << text);
  return "";
}

}  // namespace

TEST_CASE("empty config yields the documented defaults") {
  const PipelineConfig c = parse_config("{}");
  CHECK(c.seed == 1);
  CHECK(c.n_total() == 350);
  CHECK(c.geometry.mics == 32);
  CHECK(c.geometry.aperture_m == 0.05);
  CHECK(c.dsp.filter_order == 6);
  CHECK(c.dsp.band_lo_hz == 0.0);
  CHECK(c.dsp.band_hi_hz == 60e3);
  CHECK(c.dsp.welch_window == 1024);
  CHECK(c.spectrogram.frames_per_run == 128);
  CHECK(!c.spectrogram.split_before_augment);
  CHECK(c.spectrogram.augment.max_shift == 8);
  CHECK(c.spectrogram.augment.noise_db_sigma == 1.0);
  CHECK(c.arch == nn::Architecture{});
  CHECK(c.train.adam.learning_rate == 0.001);
  CHECK(c.train.max_epochs == 100);
  CHECK(c.train.batch_size == 16);
  CHECK(c.eval.window == 5);
  CHECK(make_geometry(c.geometry).size() == 32);
}

TEST_CASE("keys override defaults") {
  const PipelineConfig c = parse_config(R"({
    "seed": 9, "n_total": 10,
    "scene": {"source": {"azimuth_rad": 0.5, "elevation_rad": 0.2}, "interferer": {"vector": [1, 0, 0]},
              "sensor": "outside", "interferer_band_hz": [1000, 9000]},
    "wear": {"gain_rise_db": 9},
    "dsp": {"band_hz": [1000, 50000], "filter_order": 4},
    "spectrogram": {"frames_per_run": 16, "split_before_augment": true, "db_anchor": "per_run",
                    "augment": {"copies": 3, "max_shift": 2}},
    "nn": {"architecture": {"pool_kind": "avg", "norm_kind": "batch", "channels": [4, 4]},
           "training": {"max_epochs": 2, "patience": 1}},
    "eval": {"window": 3}
  })");
  CHECK(c.seed == 9);
  CHECK(c.train.seed == 9);
  CHECK(c.n_total() == 10);
  CHECK(c.scene.source_dir.vector().z == doctest::Approx(std::sin(0.2)));
  CHECK(c.scene.interferer_dir.vector().x == 1.0);
  CHECK(c.scene.sensor == SensorPosition::outside);
  CHECK(c.scene.interferer_hi_hz == 9000);
  CHECK(c.wear.gain_rise_db == 9);
  CHECK(c.dsp.band_lo_hz == 1000);
  CHECK(c.dsp.anchor == DbAnchor::per_run);
  CHECK(c.spectrogram.split_before_augment);
  CHECK(c.spectrogram.augment.copies == 3);
  CHECK(c.arch.input_width == 16);
  CHECK(c.arch.pool_kind == nn::PoolKind::avg);
  CHECK(c.arch.norm_kind == nn::NormKind::batch);
  CHECK(c.arch.channels == std::vector<std::size_t>{4, 4});
  CHECK(c.train.max_epochs == 2);
  CHECK(c.eval.window == 3);
}

TEST_CASE("dump and parse round trip") {
  const PipelineConfig c = parse_config(R"({"seed": 4, "n_total": 12, "spectrogram": {"frames_per_run": 32}})");
  const std::string text = dump_config(c);
  CHECK(dump_config(parse_config(text)) == text);
  CHECK(dump_config(parse_config("{}")) == dump_config(PipelineConfig{}));
}

TEST_CASE("errors name the offending key path") {
  CHECK(config_error(R"({"nn": {"training": {"learning_rat": 0.1}}})").find("nn.training.learning_rat") !=
        std::string::npos);
  CHECK(config_error(R"({"bogus": 1})").find("bogus: unknown key") != std::string::npos);
  CHECK(config_error(R"({"seed": -1})").find("seed") != std::string::npos);
  CHECK(config_error(R"({"seed": "one"})").find("seed") != std::string::npos);
  CHECK(config_error(R"({"dsp": {"band_hz": [0, 300000]}})").find("dsp") != std::string::npos);
  CHECK(config_error(R"({"dsp": {"band_hz": [1]}})").find("dsp.band_hz") != std::string::npos);
  CHECK(config_error(R"({"eval": {"window": 4}})").find("eval.window") != std::string::npos);
  CHECK(config_error(R"({"spectrogram": {"split": [0.5, 0.2, 0.2]}})").find("spectrogram.split") !=
        std::string::npos);
  CHECK(config_error(R"({"scene": {"source": {"vector": [1, 1, 0]}}})").find("scene.source.vector") !=
        std::string::npos);
  CHECK(config_error(R"({"scene": {"sensor": "roof"}})").find("scene.sensor") != std::string::npos);
  CHECK(config_error(R"({"nn": {"architecture": {"norm_kind": "group"}}})").find("nn.architecture.norm_kind") !=
        std::string::npos);
  CHECK(config_error(R"({"nn": {"architecture": {"input_width": 64}}})").find("input_width") != std::string::npos);
  CHECK(config_error(R"({"wear": {"centroid_end_hz": 70000}})").find("wear") != std::string::npos);
  CHECK(config_error(R"({"n_total": 1})").find("scene") != std::string::npos);
  CHECK(config_error("{not json").find("malformed") != std::string::npos);
  CHECK(config_error("[1, 2]").find("expected an object") != std::string::npos);
}

TEST_CASE("geometry file is read when given") {
  const auto path = std::filesystem::temp_directory_path() / "toolwear_geom.txt";
  {
    std::ofstream out(path);
    out << "# two mics\n0 0 0\n0.01 0 0\n";
  }
  const PipelineConfig c = parse_config(R"({"geometry": {"file": ")" + path.string() + R"("}})");
  CHECK(make_geometry(c.geometry).size() == 2);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(make_geometry(c.geometry), Error);
}
