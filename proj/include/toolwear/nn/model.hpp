#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "toolwear/nn/layers.hpp"
#include "toolwear/nn/tensor.hpp"
#include "toolwear/spectrogram.hpp"

namespace toolwear::nn {

enum class PoolKind : std::uint8_t { max = 0, avg = 1 };
enum class NormKind : std::uint8_t { layer = 0, batch = 1 };

const char* to_string(PoolKind k);
const char* to_string(NormKind k);
PoolKind parse_pool_kind(const std::string& s);
NormKind parse_norm_kind(const std::string& s);

// Conv blocks (conv -> leaky ReLU -> pool -> norm -> dropout), flatten,
// FC(hidden) -> ReLU -> FC(1).
struct Architecture {
  std::size_t input_height = 128;  // frequency rows fed to the network
  std::size_t input_width = 128;   // frames
  std::vector<std::size_t> channels{8, 16, 32, 32};
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 1;
  std::size_t pool = 2;
  PoolKind pool_kind = PoolKind::max;
  NormKind norm_kind = NormKind::layer;
  double leaky_slope = kLeakySlope;
  double dropout = 0.1;
  std::size_t fc_hidden = 10;

  void validate() const;
  // Spatial size after block b (b = 0 is the input).
  std::pair<std::size_t, std::size_t> spatial(std::size_t blocks) const;
  std::size_t flatten_size() const;
  std::string describe() const;
  bool operator==(const Architecture&) const = default;
};

struct ParamTensor {
  std::string name;
  Shape shape;
  std::size_t offset = 0;
  bool trainable = true;  // batch-norm running statistics are not

  std::size_t size() const { return shape_size(shape); }
  bool operator==(const ParamTensor&) const = default;
};

// All weights and buffers of one network in a single flat vector; the layout
// order is the serialization order.
class ModelParams {
 public:
  ModelParams() = default;
  explicit ModelParams(Architecture arch);  // zero-filled

  // He-style initialization for the leaky slope; FC2 bias starts at 0.5.
  static ModelParams initialize(const Architecture& arch, std::uint64_t seed);

  const Architecture& architecture() const { return arch_; }
  const std::vector<ParamTensor>& layout() const { return layout_; }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::size_t size() const { return values_.size(); }

  const ParamTensor& entry(const std::string& name) const;
  std::span<double> view(const std::string& name);
  std::span<const double> view(const std::string& name) const;
  Tensor tensor(const std::string& name) const;

  bool operator==(const ModelParams&) const = default;

 private:
  Architecture arch_;
  std::vector<ParamTensor> layout_;
  std::vector<double> values_;
};

// Per-block intermediates needed by backward().
struct BlockCache {
  Tensor input;
  Tensor conv_out;
  Shape act_shape;
  std::vector<std::size_t> argmax;
  NormCache norm;
  DropoutResult drop;
  std::vector<double> batch_mean;
  std::vector<double> batch_var;
};

struct ForwardCache {
  std::vector<BlockCache> blocks;
  Tensor flat;
  Tensor hidden_pre;
  Tensor hidden;
  Mode mode = Mode::eval;
};

// Output [N, 1]. Pure: train-mode batch-norm statistics are reported through
// the cache instead of being written into params.
Tensor forward(const ModelParams& params, const Tensor& batch, Mode mode, std::uint64_t dropout_seed,
               ForwardCache* cache = nullptr);

// Gradient of sum(grad_output * output) with respect to every entry of the
// parameter vector (zero for non-trainable buffers).
std::vector<double> backward(const ModelParams& params, const ForwardCache& cache,
                             const Tensor& grad_output);

// Exponential moving update of batch-norm running statistics after a train step.
void update_running_stats(ModelParams& params, const ForwardCache& cache, double momentum);

// Network input [1, H, W] from a dB spectrogram: values scaled by 1/90 and
// the frequency axis average-pooled to the architecture's input height.
Tensor spectrogram_input(const Spectrogram& sg, const Architecture& arch);

// Eval-mode scalar output (normalized run number) for one spectrogram.
double forward(const ModelParams& params, const Spectrogram& sg, Mode mode = Mode::eval,
               std::uint64_t dropout_seed = 0);

}  // namespace toolwear::nn
