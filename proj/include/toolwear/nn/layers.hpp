#pragma once

// Forward and backward passes of the layer set used by the regression CNN.
// Image tensors are [N, C, H, W]; dense tensors are [N, features].

#include <cstdint>
#include <vector>

#include "toolwear/nn/tensor.hpp"

namespace toolwear::nn {

enum class Mode { train, eval };

// --- convolution ----------------------------------------------------------

struct ConvSpec {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

// Cross-correlation with kernel [O, C, KH, KW] and bias [O]. Output spatial
// size is floor((in + 2 pad - k) / stride) + 1.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, ConvSpec spec);

struct ConvGrads {
  Tensor input;  // empty when not requested
  Tensor kernel;
  Tensor bias;
};

ConvGrads conv2d_backward(const Tensor& input, const Tensor& kernel, const Tensor& grad_output,
                          ConvSpec spec, bool need_input_grad = true);

// --- activations -----------------------------------------------------------

constexpr double kLeakySlope = 0.01;

Tensor leaky_relu(const Tensor& x, double slope = kLeakySlope);
// Gradient uses slope for x < 0 and 1 otherwise.
Tensor leaky_relu_backward(const Tensor& x, const Tensor& grad_output, double slope = kLeakySlope);

inline Tensor relu(const Tensor& x) { return leaky_relu(x, 0.0); }
inline Tensor relu_backward(const Tensor& x, const Tensor& g) { return leaky_relu_backward(x, g, 0.0); }

// --- pooling ---------------------------------------------------------------

struct MaxPoolResult {
  Tensor output;
  std::vector<std::size_t> argmax;  // flat input index of each output element
};

// Non-overlapping size x size windows; trailing rows/cols that do not fill a
// window are dropped. Ties go to the first element in row-major order.
MaxPoolResult max_pool2d(const Tensor& input, std::size_t size = 2);
Tensor max_pool2d_backward(const Tensor& grad_output, const std::vector<std::size_t>& argmax,
                           const Shape& input_shape);

Tensor avg_pool2d(const Tensor& input, std::size_t size = 2);
Tensor avg_pool2d_backward(const Tensor& grad_output, const Shape& input_shape, std::size_t size = 2);

// --- normalization ---------------------------------------------------------

constexpr double kNormEpsilon = 1e-5;

struct NormCache {
  Tensor normalized;          // x-hat, before the affine step
  std::vector<double> mean;   // per sample (layer) or per channel (batch)
  std::vector<double> inv_std;
  bool frozen = false;        // eval-mode batch norm: statistics are constants
};

struct NormGrads {
  Tensor input;
  Tensor gain;
  Tensor shift;
};

// Per-sample normalization over (C, H, W) followed by a per-channel affine map.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& shift,
                  double eps = kNormEpsilon, NormCache* cache = nullptr);
NormGrads layer_norm_backward(const NormCache& cache, const Tensor& gain, const Tensor& grad_output);

// Per-channel normalization over (N, H, W). Train mode uses the batch
// statistics (reported through the cache); eval mode uses the running ones.
Tensor batch_norm(const Tensor& x, const Tensor& gain, const Tensor& shift, const Tensor& running_mean,
                  const Tensor& running_var, Mode mode, double eps = kNormEpsilon,
                  NormCache* cache = nullptr, std::vector<double>* batch_var = nullptr);
NormGrads batch_norm_backward(const NormCache& cache, const Tensor& gain, const Tensor& grad_output);

// --- dropout ---------------------------------------------------------------

struct DropoutResult {
  Tensor output;
  Tensor mask;  // 0 or 1/(1-p); empty in eval mode
};

// Inverted dropout: train mode zeroes each element with probability p and
// scales survivors by 1/(1-p). Eval mode is the identity.
DropoutResult dropout(const Tensor& x, double p, Mode mode, std::uint64_t seed);
Tensor dropout_backward(const DropoutResult& forward, const Tensor& grad_output);

// --- dense -----------------------------------------------------------------

// y = x W^T + b with W [out, in], b [out].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

struct LinearGrads {
  Tensor input;
  Tensor weight;
  Tensor bias;
};

LinearGrads linear_backward(const Tensor& x, const Tensor& weight, const Tensor& grad_output);

}  // namespace toolwear::nn
