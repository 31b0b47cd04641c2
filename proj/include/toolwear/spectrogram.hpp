#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "toolwear/dsp.hpp"

namespace toolwear {

enum class Material : std::uint8_t { c45 = 0, chromoly = 1 };
enum class SensorPosition : std::uint8_t { inside = 0, outside = 1 };

const char* to_string(Material m);
const char* to_string(SensorPosition p);
SensorPosition parse_sensor_position(const std::string& s);

// Row-major bins x frames power matrix; column n is the spectrum of frame n.
struct PowerMatrix {
  std::size_t bins = 0;
  std::size_t frames = 0;
  std::vector<double> values;

  double at(std::size_t bin, std::size_t frame) const { return values[bin * frames + frame]; }
  double max() const;
};

constexpr float kDbCeiling = 90.0f;

// dB-scaled spectrogram of one run, values in [0, 90], row-major bins x frames.
struct Spectrogram {
  std::size_t bins = 0;
  std::size_t frames = 0;
  std::vector<float> values;
  int run_label = 0;
  Material material = Material::c45;
  SensorPosition sensor = SensorPosition::inside;
  double frame_rate = kFrameRate;

  float at(std::size_t bin, std::size_t frame) const { return values[bin * frames + frame]; }
  float& at(std::size_t bin, std::size_t frame) { return values[bin * frames + frame]; }
  bool operator==(const Spectrogram&) const = default;
};

// All runs recorded with a single insert (tool life n_total runs).
struct SpectrogramDataset {
  int n_total = 0;
  SensorPosition sensor = SensorPosition::inside;
  std::vector<Spectrogram> runs;

  bool operator==(const SpectrogramDataset&) const = default;
};

PowerMatrix assemble(std::span<const PowerSpectrum> spectra);

// v = 10 log10(p / ref_power) + 90, clamped to [0, 90].
std::vector<float> normalize_db(const PowerMatrix& raw, double ref_power);
float power_to_db(double power, double ref_power);

// Circular time shift (column k -> (k + shift) mod N) plus i.i.d. Gaussian
// noise with the given dB sigma, re-clamped to [0, 90].
Spectrogram augment(const Spectrogram& sg, long shift, double noise_db_sigma, std::uint64_t seed);

struct DatasetSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

using SplitFractions = std::array<double, 3>;
constexpr SplitFractions kDefaultSplit{0.75, 0.10, 0.15};

// Seeded shuffle of [0, count) partitioned by the fractions.
DatasetSplit split_dataset(std::size_t count, std::uint64_t seed,
                           SplitFractions fractions = kDefaultSplit);

}  // namespace toolwear
