#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "toolwear/array_model.hpp"
#include "toolwear/nn/model.hpp"
#include "toolwear/nn/train.hpp"
#include "toolwear/rul.hpp"
#include "toolwear/spectrogram.hpp"
#include "toolwear/synth.hpp"

namespace toolwear {

struct GeometryConfig {
  std::filesystem::path file;  // "x y z" per line; empty = generated layout
  std::size_t mics = 32;
  double aperture_m = 0.05;
  std::uint64_t seed = 7;  // layout seed, independent of the pipeline seed
};

struct AugmentConfig {
  std::size_t copies = 1;  // augmented variants per original spectrogram
  long max_shift = 8;      // frames, drawn uniformly from [-max_shift, max_shift]
  double noise_db_sigma = 1.0;
};

struct SpectrogramConfig {
  std::size_t frames_per_run = 128;
  bool split_before_augment = false;  // default pools augmented copies before splitting
  SplitFractions split = kDefaultSplit;
  AugmentConfig augment;
};

struct EvalConfig {
  int window = kDefaultWindow;
};

struct PipelineConfig {
  std::uint64_t seed = 1;
  GeometryConfig geometry;
  SceneConfig scene;  // scene.n_total is the tool life used everywhere
  WearProfile wear;
  PipelineOptions dsp;
  SpectrogramConfig spectrogram;
  nn::Architecture arch;
  nn::TrainConfig train;
  EvalConfig eval;

  int n_total() const { return scene.n_total; }
  void validate() const;
};

// Throws ErrorKind::config naming the offending key path.
PipelineConfig parse_config(const std::string& json_text);
PipelineConfig load_config(const std::filesystem::path& path);
std::string dump_config(const PipelineConfig& cfg);

ArrayGeometry make_geometry(const GeometryConfig& g);

}  // namespace toolwear
