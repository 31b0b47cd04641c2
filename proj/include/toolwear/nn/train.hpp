#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "toolwear/nn/model.hpp"

namespace toolwear::nn {

struct AdamConfig {
  // 0.01 kills every FC1 ReLU within the first epoch on the default network.
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;  // number of updates applied so far
};

// One bias-corrected Adam update at step t (t >= 1). Throws ErrorKind::numeric
// on a non-finite gradient; params are untouched in that case.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, std::uint64_t t,
               const AdamConfig& cfg);

struct TrainConfig {
  AdamConfig adam;
  std::size_t max_epochs = 100;
  std::size_t batch_size = 16;
  std::uint64_t seed = 1;
  std::size_t patience = 0;        // stop after this many epochs without improvement; 0 = never
  double batch_norm_momentum = 0.1;

  void validate() const;
};

struct Sample {
  Tensor input;   // [1, H, W]
  double target;  // run label / n_total
};

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct Checkpoint {
  ModelParams params;
  std::size_t epoch = 0;
  double val_loss = 0.0;
};

struct TrainResult {
  Checkpoint best;
  std::vector<EpochMetrics> curve;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

// Mean squared error of eval-mode predictions.
double evaluate_mse(const ModelParams& params, std::span<const Sample> samples);

// Minibatch Adam on MSE. After every epoch the eval-mode validation loss is
// recorded; the parameters of the epoch with the lowest validation loss are
// returned. Deterministic for a fixed seed.
TrainResult train(std::span<const Sample> train_set, std::span<const Sample> val_set, const Architecture& arch,
                  const TrainConfig& cfg, const EpochCallback& on_epoch = {});

// Continue from given initial parameters instead of a fresh initialization.
TrainResult train(std::span<const Sample> train_set, std::span<const Sample> val_set, ModelParams initial,
                  const TrainConfig& cfg, const EpochCallback& on_epoch = {});

Tensor stack_inputs(std::span<const Sample> samples, std::span<const std::size_t> order);

}  // namespace toolwear::nn
