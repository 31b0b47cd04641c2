#include "toolwear/spectrogram.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "toolwear/error.hpp"
#include "toolwear/parallel.hpp"

namespace toolwear {

const char* to_string(Material m) { return m == Material::c45 ? "C45" : "Chromoly"; }

const char* to_string(SensorPosition p) { return p == SensorPosition::inside ? "inside" : "outside"; }

SensorPosition parse_sensor_position(const std::string& s) {
  if (s == "inside") return SensorPosition::inside;
  if (s == "outside") return SensorPosition::outside;
  throw Error(ErrorKind::invalid_argument, "unknown sensor position '" + s + "'");
}

double PowerMatrix::max() const {
  return values.empty() ? 0.0 : *std::max_element(values.begin(), values.end());
}

PowerMatrix assemble(std::span<const PowerSpectrum> spectra) {
  if (spectra.empty()) throw Error(ErrorKind::empty_input, "no spectra to assemble");
  const PowerSpectrum& first = spectra.front();
  PowerMatrix out;
  out.bins = first.bins();
  out.frames = spectra.size();
  out.values.resize(out.bins * out.frames);
  for (std::size_t n = 0; n < spectra.size(); ++n) {
    const PowerSpectrum& s = spectra[n];
    if (s.bins() != first.bins() || s.sample_rate != first.sample_rate ||
        s.window_length != first.window_length)
      throw Error(ErrorKind::dimension, "spectrum " + std::to_string(n) + " has " +
                                            std::to_string(s.bins()) + " bins, expected " +
                                            std::to_string(first.bins()));
    for (std::size_t b = 0; b < out.bins; ++b) out.values[b * out.frames + n] = s.power[b];
  }
  return out;
}

float power_to_db(double power, double ref_power) {
  if (!(power > 0.0)) return 0.0f;
  const double v = 10.0 * std::log10(power / ref_power) + kDbCeiling;
  return static_cast<float>(std::clamp(v, 0.0, static_cast<double>(kDbCeiling)));
}

std::vector<float> normalize_db(const PowerMatrix& raw, double ref_power) {
  if (!(ref_power > 0.0) || !std::isfinite(ref_power))
    throw Error(ErrorKind::invalid_reference, "dB reference power must be positive and finite");
  std::vector<float> out(raw.values.size());
  for (std::size_t i = 0; i < raw.values.size(); ++i) {
    if (raw.values[i] < 0.0 || std::isnan(raw.values[i]))
      throw Error(ErrorKind::numeric, "power matrix contains a negative or NaN entry");
    out[i] = power_to_db(raw.values[i], ref_power);
  }
  return out;
}

Spectrogram augment(const Spectrogram& sg, long shift, double noise_db_sigma, std::uint64_t seed) {
  const auto n = static_cast<long>(sg.frames);
  if (std::labs(shift) >= n)
    throw Error(ErrorKind::invalid_shift, "time shift " + std::to_string(shift) +
                                              " must be smaller than the frame count " +
                                              std::to_string(n));
  if (!(noise_db_sigma >= 0.0)) throw Error(ErrorKind::invalid_argument, "noise sigma must be >= 0");

  Spectrogram out = sg;
  for (std::size_t b = 0; b < sg.bins; ++b) {
    for (long k = 0; k < n; ++k) {
      const long dst = ((k + shift) % n + n) % n;
      out.at(b, static_cast<std::size_t>(dst)) = sg.at(b, static_cast<std::size_t>(k));
    }
  }
  if (noise_db_sigma > 0.0) {
    auto rng = make_rng(seed, 0x6175676d);
    std::normal_distribution<double> noise(0.0, noise_db_sigma);
    for (float& v : out.values)
      v = static_cast<float>(std::clamp(static_cast<double>(v) + noise(rng), 0.0,
                                        static_cast<double>(kDbCeiling)));
  }
  return out;
}

DatasetSplit split_dataset(std::size_t count, std::uint64_t seed, SplitFractions fractions) {
  if (count == 0) throw Error(ErrorKind::empty_input, "cannot split an empty dataset");
  const double total = fractions[0] + fractions[1] + fractions[2];
  if (std::abs(total - 1.0) > 1e-9 ||
      std::any_of(fractions.begin(), fractions.end(), [](double f) { return f < 0.0; }))
    throw Error(ErrorKind::invalid_argument, "split fractions must be non-negative and sum to 1");

  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  auto rng = make_rng(seed, 0x73706c74);
  // Fisher-Yates with an explicit draw so the permutation is portable.
  for (std::size_t i = count - 1; i > 0; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
    std::swap(order[i], order[j]);
  }
  const auto n = static_cast<double>(count);
  const auto n_train = std::min(count, static_cast<std::size_t>(std::llround(fractions[0] * n)));
  const auto n_val =
      std::min(count - n_train, static_cast<std::size_t>(std::llround(fractions[1] * n)));

  DatasetSplit split;
  split.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                   order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  split.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  return split;
}

}  // namespace toolwear
