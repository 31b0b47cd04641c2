#pragma once

// Independent reference implementations used as test oracles.

#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include "toolwear/nn/model.hpp"
#include "toolwear/nn/tensor.hpp"
#include "toolwear/spectrogram.hpp"

namespace oracle {

inline std::vector<double> white_noise(std::size_t n, std::uint64_t seed, double sigma = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sigma);
  std::vector<double> x(n);
  for (double& v : x) v = g(rng);
  return x;
}

// Welch PSD by direct O(W^2) DFT per segment, written from the textbook
// definition: periodic Hamming, hop = W/2, one-sided density.
inline std::vector<double> welch_direct(std::span<const double> x, double fs, std::size_t W = 1024) {
  const std::size_t hop = W / 2;
  std::vector<double> w(W);
  double wss = 0.0;
  for (std::size_t i = 0; i < W; ++i) {
    w[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(W));
    wss += w[i] * w[i];
  }
  const std::size_t bins = W / 2 + 1;
  std::vector<long double> c(W), sn(W);
  for (std::size_t j = 0; j < W; ++j) {
    const long double ang = -2.0L * std::numbers::pi_v<long double> * static_cast<long double>(j) / W;
    c[j] = std::cos(ang);
    sn[j] = std::sin(ang);
  }
  std::vector<double> acc(bins, 0.0);
  std::vector<long double> seg(W);
  std::size_t segs = 0;
  for (std::size_t s = 0; s + W <= x.size(); s += hop, ++segs) {
    for (std::size_t i = 0; i < W; ++i) seg[i] = static_cast<long double>(w[i]) * x[s + i];
    for (std::size_t k = 0; k < bins; ++k) {
      long double re = 0, im = 0;
      for (std::size_t i = 0, j = 0; i < W; ++i, j = (j + k) % W) {
        re += seg[i] * c[j];
        im += seg[i] * sn[j];
      }
      acc[k] += static_cast<double>(re * re + im * im);
    }
  }
  for (std::size_t k = 0; k < bins; ++k) {
    acc[k] /= fs * wss * static_cast<double>(segs);
    if (k != 0 && k != bins - 1) acc[k] *= 2.0;
  }
  return acc;
}

// |H(f)|^2 of an order-N digital Butterworth lowpass obtained by the
// pre-warped bilinear transform.
inline double butterworth_lowpass_db(double f, double fc, double fs, int order) {
  const double r = std::tan(std::numbers::pi * f / fs) / std::tan(std::numbers::pi * fc / fs);
  return -10.0 * std::log10(1.0 + std::pow(r, 2 * order));
}

// Central-difference gradient of a scalar function of a flat parameter vector.
inline std::vector<double> numeric_gradient(const std::function<double()>& f, std::span<double> params,
                                            double h = 1e-5) {
  std::vector<double> g(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double keep = params[i];
    params[i] = keep + h;
    const double up = f();
    params[i] = keep - h;
    const double down = f();
    params[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// max |a - b| / max(|a|, |b|, floor) over elements.
inline double max_relative_error(std::span<const double> a, std::span<const double> b, double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

inline toolwear::nn::Tensor random_tensor(toolwear::nn::Shape shape, std::uint64_t seed, double lo = -1.0,
                                          double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  toolwear::nn::Tensor t(std::move(shape));
  for (double& v : t.data()) v = u(rng);
  return t;
}

// Network that reproduces the run number from a spectrogram whose values are
// all 90 * label / n_total: batch norm is an exact identity (running mean 0,
// variance 1 - eps), every conv passes channel 0 through its centre tap, FC1
// reads one activation and FC2 is the identity.
inline toolwear::nn::ModelParams identity_model(toolwear::nn::Architecture arch) {
  using namespace toolwear::nn;
  arch.norm_kind = NormKind::batch;
  arch.pool_kind = PoolKind::max;
  ModelParams p(arch);
  const std::size_t k = arch.kernel;
  for (std::size_t b = 0; b < arch.channels.size(); ++b) {
    const std::string prefix = "block" + std::to_string(b);
    auto w = p.view(prefix + ".conv.weight");
    const std::size_t in_c = b == 0 ? 1 : arch.channels[b - 1];
    // weight [O, C, K, K]: element (0, 0, k/2, k/2)
    (void)in_c;
    w[(k / 2) * k + k / 2] = 1.0;
    for (double& g : p.view(prefix + ".norm.gain")) g = 1.0;
    for (double& v : p.view(prefix + ".norm.running_var")) v = 1.0 - kNormEpsilon;
  }
  p.view("fc1.weight")[0] = 1.0;
  p.view("fc2.weight")[0] = 1.0;
  return p;
}

inline toolwear::Spectrogram constant_spectrogram(int run, int n_total, std::size_t frames,
                                                  std::size_t bins = 513) {
  toolwear::Spectrogram sg;
  sg.bins = bins;
  sg.frames = frames;
  sg.run_label = run;
  sg.values.assign(bins * frames, static_cast<float>(90.0 * run / n_total));
  return sg;
}

inline toolwear::SpectrogramDataset constant_dataset(int n_total, std::size_t frames) {
  toolwear::SpectrogramDataset ds;
  ds.n_total = n_total;
  for (int r = 1; r <= n_total; ++r) ds.runs.push_back(constant_spectrogram(r, n_total, frames));
  return ds;
}

}  // namespace oracle
