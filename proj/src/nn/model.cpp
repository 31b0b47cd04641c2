#include "toolwear/nn/model.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "toolwear/error.hpp"
#include "toolwear/parallel.hpp"

namespace toolwear::nn {

const char* to_string(PoolKind k) { return k == PoolKind::max ? "max" : "avg"; }
const char* to_string(NormKind k) { return k == NormKind::layer ? "layer" : "batch"; }

PoolKind parse_pool_kind(const std::string& s) {
  if (s == "max") return PoolKind::max;
  if (s == "avg") return PoolKind::avg;
  throw Error(ErrorKind::config, "pool must be 'max' or 'avg', got '" + s + "'");
}

NormKind parse_norm_kind(const std::string& s) {
  if (s == "layer") return NormKind::layer;
  if (s == "batch") return NormKind::batch;
  throw Error(ErrorKind::config, "norm must be 'layer' or 'batch', got '" + s + "'");
}

std::pair<std::size_t, std::size_t> Architecture::spatial(std::size_t blocks) const {
  std::size_t h = input_height, w = input_width;
  for (std::size_t b = 0; b < blocks; ++b) {
    if (h + 2 * padding < kernel || w + 2 * padding < kernel) return {0, 0};
    h = (h + 2 * padding - kernel) / stride + 1;
    w = (w + 2 * padding - kernel) / stride + 1;
    h /= pool;
    w /= pool;
  }
  return {h, w};
}

std::size_t Architecture::flatten_size() const {
  const auto [h, w] = spatial(channels.size());
  return channels.empty() ? input_height * input_width : channels.back() * h * w;
}

void Architecture::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorKind::config, "architecture: " + m); };
  if (input_height == 0 || input_width == 0) fail("input dimensions must be positive");
  if (channels.empty()) fail("at least one convolutional block is required");
  for (std::size_t c : channels)
    if (c == 0) fail("channel counts must be positive");
  if (kernel == 0 || stride == 0 || pool == 0) fail("kernel, stride and pool must be positive");
  if (!(dropout >= 0.0) || !(dropout < 1.0)) fail("dropout must lie in [0, 1)");
  if (!(leaky_slope >= 0.0) || !std::isfinite(leaky_slope)) fail("leaky slope must be finite and >= 0");
  if (fc_hidden == 0) fail("hidden layer must be non-empty");
  std::size_t h = input_height, w = input_width;
  for (std::size_t b = 0; b < channels.size(); ++b) {
    if (h + 2 * padding < kernel || w + 2 * padding < kernel) fail("input too small for the kernel");
    h = (h + 2 * padding - kernel) / stride + 1;
    w = (w + 2 * padding - kernel) / stride + 1;
    if (h < pool || w < pool) fail("input too small for " + std::to_string(channels.size()) + " pooling stages");
    h /= pool;
    w /= pool;
  }
}

std::string Architecture::describe() const {
  std::ostringstream s;
  s << "input=" << input_height << "x" << input_width << " conv=[";
  for (std::size_t i = 0; i < channels.size(); ++i) s << (i ? "," : "") << channels[i];
  s << "] kernel=" << kernel << " stride=" << stride << " pad=" << padding << " pool=" << to_string(pool_kind)
    << pool << " norm=" << to_string(norm_kind) << " slope=" << leaky_slope << " dropout=" << dropout
    << " fc=" << fc_hidden << ",1";
  return s.str();
}

ModelParams::ModelParams(Architecture arch) : arch_(std::move(arch)) {
  arch_.validate();
  std::size_t offset = 0;
  auto add = [&](std::string name, Shape shape, bool trainable = true) {
    ParamTensor t{std::move(name), std::move(shape), offset, trainable};
    offset += t.size();
    layout_.push_back(std::move(t));
  };
  std::size_t in_ch = 1;
  for (std::size_t b = 0; b < arch_.channels.size(); ++b) {
    const std::size_t out_ch = arch_.channels[b];
    const std::string p = "block" + std::to_string(b) + ".";
    add(p + "conv.weight", {out_ch, in_ch, arch_.kernel, arch_.kernel});
    add(p + "conv.bias", {out_ch});
    add(p + "norm.gain", {out_ch});
    add(p + "norm.shift", {out_ch});
    if (arch_.norm_kind == NormKind::batch) {
      add(p + "norm.running_mean", {out_ch}, false);
      add(p + "norm.running_var", {out_ch}, false);
    }
    in_ch = out_ch;
  }
  add("fc1.weight", {arch_.fc_hidden, arch_.flatten_size()});
  add("fc1.bias", {arch_.fc_hidden});
  add("fc2.weight", {1, arch_.fc_hidden});
  add("fc2.bias", {1});
  values_.assign(offset, 0.0);
}

ModelParams ModelParams::initialize(const Architecture& arch, std::uint64_t seed) {
  ModelParams p(arch);
  auto rng = make_rng(seed, 0x696e6974);
  for (const ParamTensor& t : p.layout_) {
    auto v = p.view(t.name);
    const bool is_weight = t.name.ends_with(".weight");
    if (is_weight) {
      const std::size_t fan_in = t.size() / t.shape[0];
      const double slope = t.name.starts_with("block") ? arch.leaky_slope : 0.0;
      const double gain = t.name == "fc2.weight" ? 1.0 : std::sqrt(2.0 / (1.0 + slope * slope));
      const double bound = gain * std::sqrt(3.0 / static_cast<double>(fan_in));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (double& x : v) x = dist(rng);
    } else if (t.name.ends_with("norm.gain") || t.name.ends_with("running_var")) {
      std::fill(v.begin(), v.end(), 1.0);
    }
  }
  p.view("fc2.bias")[0] = 0.5;
  return p;
}

const ParamTensor& ModelParams::entry(const std::string& name) const {
  for (const ParamTensor& t : layout_)
    if (t.name == name) return t;
  throw Error(ErrorKind::not_found, "no parameter tensor named '" + name + "'");
}

std::span<double> ModelParams::view(const std::string& name) {
  const ParamTensor& t = entry(name);
  return std::span<double>(values_).subspan(t.offset, t.size());
}

std::span<const double> ModelParams::view(const std::string& name) const {
  const ParamTensor& t = entry(name);
  return std::span<const double>(values_).subspan(t.offset, t.size());
}

Tensor ModelParams::tensor(const std::string& name) const {
  const ParamTensor& t = entry(name);
  auto v = view(name);
  return Tensor(t.shape, std::vector<double>(v.begin(), v.end()));
}

namespace {

std::string block_name(std::size_t b, const char* leaf) { return "block" + std::to_string(b) + "." + leaf; }

void scatter(std::vector<double>& grads, const ModelParams& params, const std::string& name, const Tensor& g) {
  const ParamTensor& t = params.entry(name);
  for (std::size_t i = 0; i < g.size(); ++i) grads[t.offset + i] += g[i];
}

std::uint64_t block_seed(std::uint64_t seed, std::size_t b) {
  return seed * 0x9e3779b97f4a7c15ULL + b + 1;
}

}  // namespace

Tensor forward(const ModelParams& params, const Tensor& batch, Mode mode, std::uint64_t dropout_seed,
               ForwardCache* cache) {
  const Architecture& arch = params.architecture();
  if (batch.rank() != 4 || batch.dim(1) != 1 || batch.dim(2) != arch.input_height ||
      batch.dim(3) != arch.input_width)
    throw Error(ErrorKind::dimension, "model expects input [N,1," + std::to_string(arch.input_height) + "," +
                                          std::to_string(arch.input_width) + "], got " +
                                          shape_string(batch.shape()));
  if (cache) {
    cache->blocks.assign(arch.channels.size(), BlockCache{});
    cache->mode = mode;
  }
  const ConvSpec spec{arch.stride, arch.padding};
  Tensor x = batch;
  for (std::size_t b = 0; b < arch.channels.size(); ++b) {
    BlockCache local;
    BlockCache& bc = cache ? cache->blocks[b] : local;
    Tensor conv = conv2d(x, params.tensor(block_name(b, "conv.weight")),
                         params.tensor(block_name(b, "conv.bias")), spec);
    Tensor act = leaky_relu(conv, arch.leaky_slope);
    Tensor pooled;
    if (arch.pool_kind == PoolKind::max) {
      auto r = max_pool2d(act, arch.pool);
      pooled = std::move(r.output);
      bc.argmax = std::move(r.argmax);
    } else {
      pooled = avg_pool2d(act, arch.pool);
    }
    bc.act_shape = act.shape();
    const Tensor gain = params.tensor(block_name(b, "norm.gain"));
    const Tensor shift = params.tensor(block_name(b, "norm.shift"));
    Tensor normed;
    if (arch.norm_kind == NormKind::layer) {
      normed = layer_norm(pooled, gain, shift, kNormEpsilon, &bc.norm);
    } else {
      normed = batch_norm(pooled, gain, shift, params.tensor(block_name(b, "norm.running_mean")),
                          params.tensor(block_name(b, "norm.running_var")), mode, kNormEpsilon, &bc.norm,
                          &bc.batch_var);
      bc.batch_mean = bc.norm.mean;
    }
    bc.drop = dropout(normed, arch.dropout, mode, block_seed(dropout_seed, b));
    if (cache) {
      bc.input = std::move(x);
      bc.conv_out = std::move(conv);
    }
    x = std::move(bc.drop.output);
    if (cache) bc.drop.output = Tensor();
  }
  Tensor flat = x.reshaped({x.dim(0), x.size() / x.dim(0)});
  Tensor hidden_pre = linear(flat, params.tensor("fc1.weight"), params.tensor("fc1.bias"));
  Tensor hidden = relu(hidden_pre);
  Tensor out = linear(hidden, params.tensor("fc2.weight"), params.tensor("fc2.bias"));
  if (cache) {
    cache->flat = std::move(flat);
    cache->hidden_pre = std::move(hidden_pre);
    cache->hidden = std::move(hidden);
  }
  return out;
}

std::vector<double> backward(const ModelParams& params, const ForwardCache& cache, const Tensor& grad_output) {
  const Architecture& arch = params.architecture();
  if (cache.blocks.size() != arch.channels.size())
    throw Error(ErrorKind::dimension, "forward cache does not match the architecture");
  std::vector<double> grads(params.size(), 0.0);

  LinearGrads g2 = linear_backward(cache.hidden, params.tensor("fc2.weight"), grad_output);
  scatter(grads, params, "fc2.weight", g2.weight);
  scatter(grads, params, "fc2.bias", g2.bias);
  Tensor g = relu_backward(cache.hidden_pre, g2.input);
  LinearGrads g1 = linear_backward(cache.flat, params.tensor("fc1.weight"), g);
  scatter(grads, params, "fc1.weight", g1.weight);
  scatter(grads, params, "fc1.bias", g1.bias);

  const ConvSpec spec{arch.stride, arch.padding};
  const auto [last_h, last_w] = arch.spatial(arch.channels.size());
  g = g1.input.reshaped({cache.flat.dim(0), arch.channels.back(), last_h, last_w});
  for (std::size_t bi = arch.channels.size(); bi-- > 0;) {
    const BlockCache& bc = cache.blocks[bi];
    g = dropout_backward(bc.drop, g);
    const Tensor gain = params.tensor(block_name(bi, "norm.gain"));
    NormGrads ng = arch.norm_kind == NormKind::layer ? layer_norm_backward(bc.norm, gain, g)
                                                     : batch_norm_backward(bc.norm, gain, g);
    scatter(grads, params, block_name(bi, "norm.gain"), ng.gain);
    scatter(grads, params, block_name(bi, "norm.shift"), ng.shift);
    g = arch.pool_kind == PoolKind::max ? max_pool2d_backward(ng.input, bc.argmax, bc.act_shape)
                                        : avg_pool2d_backward(ng.input, bc.act_shape, arch.pool);
    g = leaky_relu_backward(bc.conv_out, g, arch.leaky_slope);
    ConvGrads cg = conv2d_backward(bc.input, params.tensor(block_name(bi, "conv.weight")), g, spec, bi > 0);
    scatter(grads, params, block_name(bi, "conv.weight"), cg.kernel);
    scatter(grads, params, block_name(bi, "conv.bias"), cg.bias);
    g = std::move(cg.input);
  }
  return grads;
}

void update_running_stats(ModelParams& params, const ForwardCache& cache, double momentum) {
  if (params.architecture().norm_kind != NormKind::batch || cache.mode != Mode::train) return;
  for (std::size_t b = 0; b < cache.blocks.size(); ++b) {
    auto mean = params.view(block_name(b, "norm.running_mean"));
    auto var = params.view(block_name(b, "norm.running_var"));
    const BlockCache& bc = cache.blocks[b];
    const double n = static_cast<double>(bc.norm.normalized.dim(0) * bc.norm.normalized.dim(2) *
                                         bc.norm.normalized.dim(3));
    const double unbias = n > 1.0 ? n / (n - 1.0) : 1.0;
    for (std::size_t c = 0; c < mean.size(); ++c) {
      mean[c] = (1.0 - momentum) * mean[c] + momentum * bc.batch_mean[c];
      var[c] = (1.0 - momentum) * var[c] + momentum * bc.batch_var[c] * unbias;
    }
  }
}

Tensor spectrogram_input(const Spectrogram& sg, const Architecture& arch) {
  if (sg.frames != arch.input_width)
    throw Error(ErrorKind::dimension, "spectrogram has " + std::to_string(sg.frames) + " frames, model expects " +
                                          std::to_string(arch.input_width));
  const std::size_t rows = arch.input_height;
  std::size_t group = 0;
  if (sg.bins % rows == 0) {
    group = sg.bins / rows;
  } else if ((sg.bins - 1) % rows == 0) {
    group = (sg.bins - 1) / rows;  // Nyquist bin dropped
  } else {
    throw Error(ErrorKind::dimension, "cannot pool " + std::to_string(sg.bins) + " frequency bins to " +
                                          std::to_string(rows) + " rows");
  }
  Tensor x({1, 1, rows, sg.frames});
  const double scale = 1.0 / (static_cast<double>(group) * static_cast<double>(kDbCeiling));
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t n = 0; n < sg.frames; ++n) {
      double s = 0.0;
      for (std::size_t k = 0; k < group; ++k) s += sg.at(r * group + k, n);
      x.at(0, 0, r, n) = s * scale;
    }
  }
  return x;
}

double forward(const ModelParams& params, const Spectrogram& sg, Mode mode, std::uint64_t dropout_seed) {
  return forward(params, spectrogram_input(sg, params.architecture()), mode, dropout_seed)[0];
}

}  // namespace toolwear::nn
