#include "toolwear/nn/train.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "toolwear/error.hpp"
#include "toolwear/parallel.hpp"

namespace toolwear::nn {

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, std::uint64_t t,
               const AdamConfig& cfg) {
  if (params.size() != grads.size())
    throw Error(ErrorKind::dimension, "Adam: parameter and gradient sizes differ");
  if (t < 1) throw Error(ErrorKind::invalid_argument, "Adam step index must be >= 1");
  for (double g : grads)
    if (!std::isfinite(g)) throw Error(ErrorKind::numeric, "Adam: non-finite gradient");
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  const double td = static_cast<double>(t);
  const double c1 = 1.0 - std::pow(cfg.beta1, td);
  const double c2 = 1.0 - std::pow(cfg.beta2, td);
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grads[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
  }
  state.step = t;
}

void TrainConfig::validate() const {
  if (!(adam.learning_rate > 0.0)) throw Error(ErrorKind::config, "learning_rate must be positive");
  if (max_epochs < 1) throw Error(ErrorKind::config, "max_epochs must be at least 1");
  if (batch_size < 1) throw Error(ErrorKind::config, "batch_size must be at least 1");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0))
    throw Error(ErrorKind::config, "Adam betas must lie in [0, 1)");
  if (!(adam.epsilon > 0.0)) throw Error(ErrorKind::config, "Adam epsilon must be positive");
  if (!(batch_norm_momentum > 0.0 && batch_norm_momentum <= 1.0))
    throw Error(ErrorKind::config, "batch-norm momentum must lie in (0, 1]");
}

Tensor stack_inputs(std::span<const Sample> samples, std::span<const std::size_t> order) {
  if (order.empty()) throw Error(ErrorKind::empty_input, "empty batch");
  const Shape& one = samples[order[0]].input.shape();
  if (one.size() != 3) throw Error(ErrorKind::dimension, "sample inputs must be [1, H, W]");
  Tensor batch({order.size(), one[0], one[1], one[2]});
  const std::size_t stride = shape_size(one);
  for (std::size_t i = 0; i < order.size(); ++i) {
    const Tensor& in = samples[order[i]].input;
    if (in.shape() != one) throw Error(ErrorKind::dimension, "samples have mixed input shapes");
    std::copy(in.data().begin(), in.data().end(), batch.data().begin() + static_cast<std::ptrdiff_t>(i * stride));
  }
  return batch;
}

double evaluate_mse(const ModelParams& params, std::span<const Sample> samples) {
  if (samples.empty()) throw Error(ErrorKind::empty_input, "no samples to evaluate");
  constexpr std::size_t chunk = 32;
  double total = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t lo = 0; lo < samples.size(); lo += chunk) {
    idx.resize(std::min(chunk, samples.size() - lo));
    std::iota(idx.begin(), idx.end(), lo);
    const Tensor out = forward(params, stack_inputs(samples, idx), Mode::eval, 0);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const double e = out[i] - samples[idx[i]].target;
      total += e * e;
    }
  }
  return total / static_cast<double>(samples.size());
}

TrainResult train(std::span<const Sample> train_set, std::span<const Sample> val_set, const Architecture& arch,
                  const TrainConfig& cfg, const EpochCallback& on_epoch) {
  return train(train_set, val_set, ModelParams::initialize(arch, cfg.seed), cfg, on_epoch);
}

TrainResult train(std::span<const Sample> train_set, std::span<const Sample> val_set, ModelParams params,
                  const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_set.empty()) throw Error(ErrorKind::empty_input, "training split is empty");
  if (val_set.empty()) throw Error(ErrorKind::empty_input, "validation split is empty");

  AdamState adam;
  TrainResult result;
  result.best.val_loss = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  auto shuffle_rng = make_rng(cfg.seed, 0x73687566);
  std::uint64_t step = 0;
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    for (std::size_t i = order.size() - 1; i > 0; --i)
      std::swap(order[i], order[static_cast<std::size_t>(shuffle_rng() % (i + 1))]);

    double loss_sum = 0.0;
    for (std::size_t lo = 0; lo < order.size(); lo += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, order.size() - lo);
      const std::span<const std::size_t> batch_idx(order.data() + lo, n);
      ++step;
      ForwardCache cache;
      const Tensor out = forward(params, stack_inputs(train_set, batch_idx), Mode::train,
                                 cfg.seed ^ (step * 0x2545f4914f6cdd1dULL), &cache);
      Tensor grad({n, 1});
      double batch_loss = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double e = out[i] - train_set[batch_idx[i]].target;
        batch_loss += e * e;
        grad[i] = 2.0 * e / static_cast<double>(n);
      }
      if (!std::isfinite(batch_loss))
        throw Error(ErrorKind::training_failure, "non-finite training loss in epoch " + std::to_string(epoch));
      loss_sum += batch_loss;
      const std::vector<double> grads = backward(params, cache, grad);
      try {
        adam_step(params.values(), grads, adam, step, cfg.adam);
      } catch (const Error& e) {
        throw Error(ErrorKind::training_failure, std::string(e.what()) + " in epoch " + std::to_string(epoch));
      }
      update_running_stats(params, cache, cfg.batch_norm_momentum);
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = loss_sum / static_cast<double>(order.size());
    m.val_loss = evaluate_mse(params, val_set);
    if (!std::isfinite(m.val_loss))
      throw Error(ErrorKind::training_failure, "non-finite validation loss in epoch " + std::to_string(epoch));
    result.curve.push_back(m);
    if (on_epoch) on_epoch(m);
    if (m.val_loss < result.best.val_loss) {
      result.best = Checkpoint{params, epoch, m.val_loss};
      since_best = 0;
    } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
      break;
    }
  }
  return result;
}

}  // namespace toolwear::nn
