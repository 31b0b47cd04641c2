#include "toolwear/nn/layers.hpp"

#include <Eigen/Core>
#include <cmath>
#include <random>

#include "toolwear/error.hpp"
#include "toolwear/parallel.hpp"

namespace toolwear::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank)
    throw Error(ErrorKind::dimension, std::string(what) + " must have rank " + std::to_string(rank) +
                                          ", got " + shape_string(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape())
    throw Error(ErrorKind::dimension, std::string(what) + ": shape " + shape_string(a.shape()) +
                                          " vs " + shape_string(b.shape()));
}

struct ConvGeometry {
  std::size_t n, c, h, w, o, kh, kw, oh, ow;
  std::size_t stride, pad;
  std::size_t patch() const { return c * kh * kw; }
  std::size_t pixels() const { return oh * ow; }
};

ConvGeometry conv_geometry(const Tensor& input, const Tensor& kernel, ConvSpec spec) {
  require_rank(input, 4, "conv2d input");
  require_rank(kernel, 4, "conv2d kernel");
  if (spec.stride == 0) throw Error(ErrorKind::dimension, "conv2d stride must be positive");
  ConvGeometry g{input.dim(0), input.dim(1), input.dim(2), input.dim(3), kernel.dim(0),
                 kernel.dim(2), kernel.dim(3), 0, 0, spec.stride, spec.padding};
  if (kernel.dim(1) != g.c)
    throw Error(ErrorKind::dimension, "conv2d kernel expects " + std::to_string(kernel.dim(1)) +
                                          " input channels, input has " + std::to_string(g.c));
  if (g.h + 2 * g.pad < g.kh || g.w + 2 * g.pad < g.kw)
    throw Error(ErrorKind::dimension, "conv2d kernel larger than padded input");
  g.oh = (g.h + 2 * g.pad - g.kh) / g.stride + 1;
  g.ow = (g.w + 2 * g.pad - g.kw) / g.stride + 1;
  return g;
}

// cols[(c*kh + i)*kw + j][oy*ow + ox] = x[c][oy*s + i - pad][ox*s + j - pad]
void im2col(const double* x, const ConvGeometry& g, double* cols) {
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  const auto w = static_cast<std::ptrdiff_t>(g.w);
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        double* row = cols + ((c * g.kh + i) * g.kw + j) * g.pixels();
        // Output columns whose source column lies inside the image.
        const auto off = static_cast<std::ptrdiff_t>(j) - pad;
        const auto s = static_cast<std::ptrdiff_t>(g.stride);
        std::ptrdiff_t ox_lo = off >= 0 ? 0 : (-off + s - 1) / s;
        std::ptrdiff_t ox_hi = w - 1 - off < 0 ? 0 : (w - 1 - off) / s + 1;
        ox_hi = std::min<std::ptrdiff_t>(ox_hi, static_cast<std::ptrdiff_t>(g.ow));
        ox_lo = std::min(ox_lo, ox_hi);
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const auto y = static_cast<std::ptrdiff_t>(oy * g.stride + i) - pad;
          double* dst = row + oy * g.ow;
          if (y < 0 || y >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill(dst, dst + g.ow, 0.0);
            continue;
          }
          const double* src = x + (c * g.h + static_cast<std::size_t>(y)) * g.w;
          std::fill(dst, dst + ox_lo, 0.0);
          if (s == 1) {
            std::copy(src + ox_lo + off, src + ox_hi + off, dst + ox_lo);
          } else {
            for (std::ptrdiff_t ox = ox_lo; ox < ox_hi; ++ox) dst[ox] = src[ox * s + off];
          }
          std::fill(dst + ox_hi, dst + g.ow, 0.0);
        }
      }
    }
  }
}

// Scratch space reused across calls on the same thread.
std::vector<double>& scratch(std::size_t n) {
  thread_local std::vector<double> buf;
  if (buf.size() < n) buf.resize(n);
  return buf;
}

void col2im(const double* cols, const ConvGeometry& g, double* dx) {
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        const double* row = cols + ((c * g.kh + i) * g.kw + j) * g.pixels();
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const auto y = static_cast<std::ptrdiff_t>(oy * g.stride + i) - pad;
          if (y < 0 || y >= static_cast<std::ptrdiff_t>(g.h)) continue;
          double* dst = dx + (c * g.h + static_cast<std::size_t>(y)) * g.w;
          const double* src = row + oy * g.ow;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const auto xx = static_cast<std::ptrdiff_t>(ox * g.stride + j) - pad;
            if (xx >= 0 && xx < static_cast<std::ptrdiff_t>(g.w)) dst[static_cast<std::size_t>(xx)] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, ConvSpec spec) {
  const ConvGeometry g = conv_geometry(input, kernel, spec);
  if (bias.size() != g.o) throw Error(ErrorKind::dimension, "conv2d bias size must equal output channels");
  Tensor out({g.n, g.o, g.oh, g.ow});
  const ConstMapMat w(kernel.data().data(), static_cast<Eigen::Index>(g.o), static_cast<Eigen::Index>(g.patch()));
  const Eigen::Map<const Eigen::VectorXd> b(bias.data().data(), static_cast<Eigen::Index>(g.o));
  parallel_for(g.n, [&](std::size_t n) {
    auto& cols = scratch(g.patch() * g.pixels());
    im2col(input.data().data() + n * g.c * g.h * g.w, g, cols.data());
    const ConstMapMat c(cols.data(), static_cast<Eigen::Index>(g.patch()), static_cast<Eigen::Index>(g.pixels()));
    MapMat y(out.data().data() + n * g.o * g.pixels(), static_cast<Eigen::Index>(g.o),
             static_cast<Eigen::Index>(g.pixels()));
    y.noalias() = w * c;
    y.colwise() += b;
  });
  return out;
}

ConvGrads conv2d_backward(const Tensor& input, const Tensor& kernel, const Tensor& grad_output,
                          ConvSpec spec, bool need_input_grad) {
  const ConvGeometry g = conv_geometry(input, kernel, spec);
  if (grad_output.shape() != Shape{g.n, g.o, g.oh, g.ow})
    throw Error(ErrorKind::dimension, "conv2d gradient shape mismatch");
  ConvGrads grads;
  grads.kernel = Tensor(kernel.shape());
  grads.bias = Tensor({g.o});
  if (need_input_grad) grads.input = Tensor(input.shape());

  const ConstMapMat w(kernel.data().data(), static_cast<Eigen::Index>(g.o), static_cast<Eigen::Index>(g.patch()));
  // Per-sample kernel gradients, reduced below in sample order.
  std::vector<RowMat> per_sample(g.n);
  parallel_for(g.n, [&](std::size_t n) {
    auto& cols = scratch(g.patch() * g.pixels());
    im2col(input.data().data() + n * g.c * g.h * g.w, g, cols.data());
    const ConstMapMat c(cols.data(), static_cast<Eigen::Index>(g.patch()), static_cast<Eigen::Index>(g.pixels()));
    const ConstMapMat dy(grad_output.data().data() + n * g.o * g.pixels(), static_cast<Eigen::Index>(g.o),
                         static_cast<Eigen::Index>(g.pixels()));
    per_sample[n].noalias() = dy * c.transpose();
    if (need_input_grad) {
      MapMat dcols(cols.data(), static_cast<Eigen::Index>(g.patch()), static_cast<Eigen::Index>(g.pixels()));
      dcols.noalias() = w.transpose() * dy;
      col2im(cols.data(), g, grads.input.data().data() + n * g.c * g.h * g.w);
    }
  });
  MapMat dw(grads.kernel.data().data(), static_cast<Eigen::Index>(g.o), static_cast<Eigen::Index>(g.patch()));
  dw.setZero();
  for (std::size_t n = 0; n < g.n; ++n) {
    dw += per_sample[n];
    const double* dy = grad_output.data().data() + n * g.o * g.pixels();
    for (std::size_t o = 0; o < g.o; ++o) {
      double s = 0.0;
      for (std::size_t p = 0; p < g.pixels(); ++p) s += dy[o * g.pixels() + p];
      grads.bias[o] += s;
    }
  }
  return grads;
}

Tensor leaky_relu(const Tensor& x, double slope) {
  Tensor y = x;
  for (double& v : y.data())
    if (v < 0.0) v *= slope;
  return y;
}

Tensor leaky_relu_backward(const Tensor& x, const Tensor& grad_output, double slope) {
  require_same_shape(x, grad_output, "leaky_relu backward");
  Tensor g = grad_output;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (x[i] < 0.0) g[i] *= slope;
  return g;
}

namespace {
Shape pooled_shape(const Tensor& input, std::size_t size) {
  require_rank(input, 4, "pool input");
  if (size == 0 || input.dim(2) < size || input.dim(3) < size)
    throw Error(ErrorKind::dimension, "pool window " + std::to_string(size) + " larger than input " +
                                          shape_string(input.shape()));
  return {input.dim(0), input.dim(1), input.dim(2) / size, input.dim(3) / size};
}
}  // namespace

MaxPoolResult max_pool2d(const Tensor& input, std::size_t size) {
  const Shape os = pooled_shape(input, size);
  MaxPoolResult r{Tensor(os), std::vector<std::size_t>(shape_size(os))};
  const std::size_t h = input.dim(2), w = input.dim(3);
  std::size_t out = 0;
  for (std::size_t nc = 0; nc < os[0] * os[1]; ++nc) {
    const std::size_t base = nc * h * w;
    for (std::size_t oy = 0; oy < os[2]; ++oy) {
      for (std::size_t ox = 0; ox < os[3]; ++ox, ++out) {
        std::size_t best = base + (oy * size) * w + ox * size;
        for (std::size_t i = 0; i < size; ++i) {
          for (std::size_t j = 0; j < size; ++j) {
            const std::size_t idx = base + (oy * size + i) * w + ox * size + j;
            if (input[idx] > input[best]) best = idx;
          }
        }
        r.output[out] = input[best];
        r.argmax[out] = best;
      }
    }
  }
  return r;
}

Tensor max_pool2d_backward(const Tensor& grad_output, const std::vector<std::size_t>& argmax,
                           const Shape& input_shape) {
  if (argmax.size() != grad_output.size()) throw Error(ErrorKind::dimension, "max-pool gradient shape mismatch");
  Tensor g(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) g[argmax[i]] += grad_output[i];
  return g;
}

Tensor avg_pool2d(const Tensor& input, std::size_t size) {
  const Shape os = pooled_shape(input, size);
  Tensor out(os);
  const std::size_t h = input.dim(2), w = input.dim(3);
  const double scale = 1.0 / static_cast<double>(size * size);
  std::size_t o = 0;
  for (std::size_t nc = 0; nc < os[0] * os[1]; ++nc) {
    const std::size_t base = nc * h * w;
    for (std::size_t oy = 0; oy < os[2]; ++oy) {
      for (std::size_t ox = 0; ox < os[3]; ++ox, ++o) {
        double s = 0.0;
        for (std::size_t i = 0; i < size; ++i)
          for (std::size_t j = 0; j < size; ++j) s += input[base + (oy * size + i) * w + ox * size + j];
        out[o] = s * scale;
      }
    }
  }
  return out;
}

Tensor avg_pool2d_backward(const Tensor& grad_output, const Shape& input_shape, std::size_t size) {
  Tensor g(input_shape);
  const std::size_t h = input_shape.at(2), w = input_shape.at(3);
  const std::size_t oh = h / size, ow = w / size;
  if (grad_output.shape() != Shape{input_shape[0], input_shape[1], oh, ow})
    throw Error(ErrorKind::dimension, "avg-pool gradient shape mismatch");
  const double scale = 1.0 / static_cast<double>(size * size);
  std::size_t o = 0;
  for (std::size_t nc = 0; nc < input_shape[0] * input_shape[1]; ++nc) {
    const std::size_t base = nc * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox, ++o)
        for (std::size_t i = 0; i < size; ++i)
          for (std::size_t j = 0; j < size; ++j)
            g[base + (oy * size + i) * w + ox * size + j] += grad_output[o] * scale;
  }
  return g;
}

namespace {
void require_affine(const Tensor& x, const Tensor& gain, const Tensor& shift) {
  require_rank(x, 4, "normalization input");
  if (gain.size() != x.dim(1) || shift.size() != x.dim(1))
    throw Error(ErrorKind::dimension, "normalization gain/shift must have one entry per channel");
}
}  // namespace

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& shift, double eps, NormCache* cache) {
  require_affine(x, gain, shift);
  const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  const std::size_t features = c * plane;
  Tensor y(x.shape());
  Tensor xhat(x.shape());
  std::vector<double> means(n), inv_stds(n);
  for (std::size_t s = 0; s < n; ++s) {
    const double* in = x.data().data() + s * features;
    double mean = 0.0;
    for (std::size_t i = 0; i < features; ++i) mean += in[i];
    mean /= static_cast<double>(features);
    double var = 0.0;
    for (std::size_t i = 0; i < features; ++i) var += (in[i] - mean) * (in[i] - mean);
    var /= static_cast<double>(features);
    const double inv_std = 1.0 / std::sqrt(var + eps);
    means[s] = mean;
    inv_stds[s] = inv_std;
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t p = 0; p < plane; ++p) {
        const std::size_t i = s * features + ch * plane + p;
        xhat[i] = (x[i] - mean) * inv_std;
        y[i] = gain[ch] * xhat[i] + shift[ch];
      }
    }
  }
  if (cache) *cache = NormCache{std::move(xhat), std::move(means), std::move(inv_stds), false};
  return y;
}

NormGrads layer_norm_backward(const NormCache& cache, const Tensor& gain, const Tensor& grad_output) {
  const Tensor& xhat = cache.normalized;
  require_same_shape(xhat, grad_output, "layer_norm backward");
  const std::size_t n = xhat.dim(0), c = xhat.dim(1), plane = xhat.dim(2) * xhat.dim(3);
  const std::size_t features = c * plane;
  NormGrads g{Tensor(xhat.shape()), Tensor({c}), Tensor({c})};
  std::vector<double> dxhat(features);
  for (std::size_t s = 0; s < n; ++s) {
    double mean_d = 0.0, mean_dx = 0.0;
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t p = 0; p < plane; ++p) {
        const std::size_t f = ch * plane + p;
        const std::size_t i = s * features + f;
        g.gain[ch] += grad_output[i] * xhat[i];
        g.shift[ch] += grad_output[i];
        dxhat[f] = grad_output[i] * gain[ch];
        mean_d += dxhat[f];
        mean_dx += dxhat[f] * xhat[i];
      }
    }
    mean_d /= static_cast<double>(features);
    mean_dx /= static_cast<double>(features);
    for (std::size_t f = 0; f < features; ++f) {
      const std::size_t i = s * features + f;
      g.input[i] = cache.inv_std[s] * (dxhat[f] - mean_d - xhat[i] * mean_dx);
    }
  }
  return g;
}

Tensor batch_norm(const Tensor& x, const Tensor& gain, const Tensor& shift, const Tensor& running_mean,
                  const Tensor& running_var, Mode mode, double eps, NormCache* cache,
                  std::vector<double>* batch_var) {
  require_affine(x, gain, shift);
  const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  if (running_mean.size() != c || running_var.size() != c)
    throw Error(ErrorKind::dimension, "batch_norm running statistics must have one entry per channel");
  std::vector<double> means(c), inv_stds(c), vars(c);
  const double count = static_cast<double>(n * plane);
  for (std::size_t ch = 0; ch < c; ++ch) {
    if (mode == Mode::eval) {
      means[ch] = running_mean[ch];
      vars[ch] = running_var[ch];
    } else {
      double mean = 0.0;
      for (std::size_t s = 0; s < n; ++s)
        for (std::size_t p = 0; p < plane; ++p) mean += x[(s * c + ch) * plane + p];
      mean /= count;
      double var = 0.0;
      for (std::size_t s = 0; s < n; ++s)
        for (std::size_t p = 0; p < plane; ++p) {
          const double d = x[(s * c + ch) * plane + p] - mean;
          var += d * d;
        }
      means[ch] = mean;
      vars[ch] = var / count;
    }
    inv_stds[ch] = 1.0 / std::sqrt(vars[ch] + eps);
  }
  Tensor y(x.shape());
  Tensor xhat(x.shape());
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t p = 0; p < plane; ++p) {
        const std::size_t i = (s * c + ch) * plane + p;
        xhat[i] = (x[i] - means[ch]) * inv_stds[ch];
        y[i] = gain[ch] * xhat[i] + shift[ch];
      }
  if (batch_var) *batch_var = vars;
  if (cache) *cache = NormCache{std::move(xhat), std::move(means), std::move(inv_stds), mode == Mode::eval};
  return y;
}

NormGrads batch_norm_backward(const NormCache& cache, const Tensor& gain, const Tensor& grad_output) {
  const Tensor& xhat = cache.normalized;
  require_same_shape(xhat, grad_output, "batch_norm backward");
  const std::size_t n = xhat.dim(0), c = xhat.dim(1), plane = xhat.dim(2) * xhat.dim(3);
  const double count = static_cast<double>(n * plane);
  NormGrads g{Tensor(xhat.shape()), Tensor({c}), Tensor({c})};
  for (std::size_t ch = 0; ch < c; ++ch) {
    double sum_d = 0.0, sum_dx = 0.0;
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t p = 0; p < plane; ++p) {
        const std::size_t i = (s * c + ch) * plane + p;
        g.gain[ch] += grad_output[i] * xhat[i];
        g.shift[ch] += grad_output[i];
        const double d = grad_output[i] * gain[ch];
        sum_d += d;
        sum_dx += d * xhat[i];
      }
    const double mean_d = cache.frozen ? 0.0 : sum_d / count;
    const double mean_dx = cache.frozen ? 0.0 : sum_dx / count;
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t p = 0; p < plane; ++p) {
        const std::size_t i = (s * c + ch) * plane + p;
        const double d = grad_output[i] * gain[ch];
        g.input[i] = cache.inv_std[ch] * (d - mean_d - xhat[i] * mean_dx);
      }
  }
  return g;
}

DropoutResult dropout(const Tensor& x, double p, Mode mode, std::uint64_t seed) {
  if (!(p >= 0.0) || !(p < 1.0)) throw Error(ErrorKind::invalid_argument, "dropout probability must lie in [0, 1)");
  if (mode == Mode::eval || p == 0.0) return {x, Tensor()};
  DropoutResult r{Tensor(x.shape()), Tensor(x.shape())};
  auto rng = make_rng(seed, 0x64726f70);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double keep_scale = 1.0 / (1.0 - p);
  for (std::size_t i = 0; i < x.size(); ++i) {
    r.mask[i] = unit(rng) < p ? 0.0 : keep_scale;
    r.output[i] = x[i] * r.mask[i];
  }
  return r;
}

Tensor dropout_backward(const DropoutResult& forward, const Tensor& grad_output) {
  if (forward.mask.size() == 0) return grad_output;
  require_same_shape(forward.mask, grad_output, "dropout backward");
  Tensor g = grad_output;
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= forward.mask[i];
  return g;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank(x, 2, "linear input");
  require_rank(weight, 2, "linear weight");
  if (weight.dim(1) != x.dim(1) || bias.size() != weight.dim(0))
    throw Error(ErrorKind::dimension, "linear layer " + shape_string(weight.shape()) +
                                          " cannot take input " + shape_string(x.shape()));
  const auto n = static_cast<Eigen::Index>(x.dim(0));
  const auto in = static_cast<Eigen::Index>(x.dim(1));
  const auto out = static_cast<Eigen::Index>(weight.dim(0));
  Tensor y({x.dim(0), weight.dim(0)});
  const ConstMapMat xm(x.data().data(), n, in);
  const ConstMapMat wm(weight.data().data(), out, in);
  MapMat ym(y.data().data(), n, out);
  ym.noalias() = xm * wm.transpose();
  ym.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.data().data(), out);
  return y;
}

LinearGrads linear_backward(const Tensor& x, const Tensor& weight, const Tensor& grad_output) {
  const auto n = static_cast<Eigen::Index>(x.dim(0));
  const auto in = static_cast<Eigen::Index>(x.dim(1));
  const auto out = static_cast<Eigen::Index>(weight.dim(0));
  if (grad_output.shape() != Shape{x.dim(0), weight.dim(0)})
    throw Error(ErrorKind::dimension, "linear gradient shape mismatch");
  LinearGrads g{Tensor(x.shape()), Tensor(weight.shape()), Tensor({weight.dim(0)})};
  const ConstMapMat xm(x.data().data(), n, in);
  const ConstMapMat wm(weight.data().data(), out, in);
  const ConstMapMat gm(grad_output.data().data(), n, out);
  MapMat(g.input.data().data(), n, in).noalias() = gm * wm;
  MapMat(g.weight.data().data(), out, in).noalias() = gm.transpose() * xm;
  Eigen::Map<Eigen::RowVectorXd>(g.bias.data().data(), out) = gm.colwise().sum();
  return g;
}

}  // namespace toolwear::nn
