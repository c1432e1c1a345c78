#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "vibhead/error.hpp"
#include "vibhead/tensor.hpp"

namespace vibhead::nn {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

// ---------------------------------------------------------------------------
// 3x3 convolution, stride 1, zero "same" padding.

inline constexpr std::size_t kKernel = 3;
inline constexpr std::size_t kTaps = kKernel * kKernel;

struct ConvParams {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  Buffer kernel;  // [out][in][3][3]
  Buffer bias;    // [out]

  ConvParams() = default;
  ConvParams(std::size_t in, std::size_t out)
      : in_channels(in), out_channels(out), kernel(in * out * kTaps, 0.0), bias(out, 0.0) {}
};

struct ConvGrads {
  Tensor4 input;
  Buffer kernel;
  Buffer bias;
};

namespace detail {

// col[(ci*9 + ky*3 + kx), y*w + x] = in[ci][y+ky-1][x+kx-1] (0 outside).
inline void im2col(const double* in, std::size_t channels, std::size_t h, std::size_t w, double* col) {
  const std::size_t plane = h * w;
  for (std::size_t ci = 0; ci < channels; ++ci) {
    const double* src = in + ci * plane;
    for (std::size_t ky = 0; ky < kKernel; ++ky) {
      for (std::size_t kx = 0; kx < kKernel; ++kx) {
        double* dst = col + (ci * kTaps + ky * kKernel + kx) * plane;
        for (std::size_t y = 0; y < h; ++y) {
          const auto sy = static_cast<std::ptrdiff_t>(y + ky) - 1;
          double* row = dst + y * w;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) {
            std::fill_n(row, w, 0.0);
            continue;
          }
          const double* srow = src + static_cast<std::size_t>(sy) * w;
          for (std::size_t x = 0; x < w; ++x) {
            const auto sx = static_cast<std::ptrdiff_t>(x + kx) - 1;
            row[x] = (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) ? 0.0 : srow[sx];
          }
        }
      }
    }
  }
}

inline void col2im_add(const double* col, std::size_t channels, std::size_t h, std::size_t w, double* out) {
  const std::size_t plane = h * w;
  for (std::size_t ci = 0; ci < channels; ++ci) {
    double* dst = out + ci * plane;
    for (std::size_t ky = 0; ky < kKernel; ++ky) {
      for (std::size_t kx = 0; kx < kKernel; ++kx) {
        const double* src = col + (ci * kTaps + ky * kKernel + kx) * plane;
        for (std::size_t y = 0; y < h; ++y) {
          const auto sy = static_cast<std::ptrdiff_t>(y + ky) - 1;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
          double* drow = dst + static_cast<std::size_t>(sy) * w;
          const double* srow = src + y * w;
          for (std::size_t x = 0; x < w; ++x) {
            const auto sx = static_cast<std::ptrdiff_t>(x + kx) - 1;
            if (sx >= 0 && sx < static_cast<std::ptrdiff_t>(w)) drow[sx] += srow[x];
          }
        }
      }
    }
  }
}

inline void check_conv(const Shape4& s, const ConvParams& p) {
  if (s.c != p.in_channels)
    fail(ErrorCode::ShapeMismatch, "conv expects " + std::to_string(p.in_channels) + " channels, got " +
                                       std::to_string(s.c));
  if (p.kernel.size() != p.in_channels * p.out_channels * kTaps || p.bias.size() != p.out_channels)
    fail(ErrorCode::ShapeMismatch, "conv parameter sizes inconsistent");
}

}  // namespace detail

inline Tensor4 conv2d_forward(const Tensor4& input, const ConvParams& p) {
  const Shape4 s = input.shape();
  detail::check_conv(s, p);
  const std::size_t plane = s.plane(), taps = p.in_channels * kTaps;
  Tensor4 out({s.n, p.out_channels, s.h, s.w}, Tensor4::Uninitialized{});
  Buffer col(taps * plane);
  const ConstMatrixMap weights(p.kernel.data(), static_cast<Eigen::Index>(p.out_channels),
                               static_cast<Eigen::Index>(taps));
  for (std::size_t n = 0; n < s.n; ++n) {
    detail::im2col(input.plane(n, 0), s.c, s.h, s.w, col.data());
    const ConstMatrixMap cols(col.data(), static_cast<Eigen::Index>(taps), static_cast<Eigen::Index>(plane));
    MatrixMap dst(out.plane(n, 0), static_cast<Eigen::Index>(p.out_channels), static_cast<Eigen::Index>(plane));
    dst.noalias() = weights * cols;
    for (std::size_t o = 0; o < p.out_channels; ++o) dst.row(static_cast<Eigen::Index>(o)).array() += p.bias[o];
  }
  return out;
}

/// Gradients of conv2d_forward. When `need_input` is false the input
/// gradient is left empty (first layer of an encoder).
inline ConvGrads conv2d_backward(const Tensor4& grad_out, const Tensor4& input, const ConvParams& p,
                                 bool need_input = true) {
  const Shape4 s = input.shape();
  detail::check_conv(s, p);
  if (grad_out.shape() != Shape4{s.n, p.out_channels, s.h, s.w})
    fail(ErrorCode::ShapeMismatch, "conv grad_out shape " + grad_out.shape().str());
  const std::size_t plane = s.plane(), taps = p.in_channels * kTaps;
  ConvGrads g;
  g.kernel.assign(p.kernel.size(), 0.0);
  g.bias.assign(p.out_channels, 0.0);
  if (need_input) g.input = Tensor4(s);
  Buffer col(taps * plane), gcol(need_input ? taps * plane : 0);
  const ConstMatrixMap weights(p.kernel.data(), static_cast<Eigen::Index>(p.out_channels),
                               static_cast<Eigen::Index>(taps));
  MatrixMap gw(g.kernel.data(), static_cast<Eigen::Index>(p.out_channels), static_cast<Eigen::Index>(taps));
  for (std::size_t n = 0; n < s.n; ++n) {
    detail::im2col(input.plane(n, 0), s.c, s.h, s.w, col.data());
    const ConstMatrixMap cols(col.data(), static_cast<Eigen::Index>(taps), static_cast<Eigen::Index>(plane));
    const ConstMatrixMap go(grad_out.plane(n, 0), static_cast<Eigen::Index>(p.out_channels),
                            static_cast<Eigen::Index>(plane));
    gw.noalias() += go * cols.transpose();
    for (std::size_t o = 0; o < p.out_channels; ++o) g.bias[o] += go.row(static_cast<Eigen::Index>(o)).sum();
    if (need_input) {
      MatrixMap gc(gcol.data(), static_cast<Eigen::Index>(taps), static_cast<Eigen::Index>(plane));
      gc.noalias() = weights.transpose() * go;
      detail::col2im_add(gcol.data(), s.c, s.h, s.w, g.input.plane(n, 0));
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// ReLU

inline Tensor4 relu_forward(const Tensor4& input) {
  Tensor4 out = input;
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return out;
}

/// Subgradient at 0 is 0.
inline Tensor4 relu_backward(const Tensor4& grad_out, const Tensor4& input) {
  if (grad_out.shape() != input.shape()) fail(ErrorCode::ShapeMismatch, "relu backward shape");
  Tensor4 g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!(input[i] > 0.0)) g[i] = 0.0;
  return g;
}

// ---------------------------------------------------------------------------
// Batch normalization over (batch, height, width) per channel.

enum class Mode { Train, Infer };

struct BatchNormParams {
  Buffer gamma, beta, running_mean, running_var;
  double momentum = 0.9;
  double eps = 1e-5;

  BatchNormParams() = default;
  explicit BatchNormParams(std::size_t channels)
      : gamma(channels, 1.0), beta(channels, 0.0), running_mean(channels, 0.0), running_var(channels, 1.0) {}
  std::size_t channels() const { return gamma.size(); }
};

struct BatchNormCache {
  Tensor4 normalized;
  Buffer inv_std;
};

struct BatchNormGrads {
  Tensor4 input;
  Buffer gamma, beta;
};

namespace detail {

using ArrayMap = Eigen::Map<Eigen::ArrayXd>;
using ConstArrayMap = Eigen::Map<const Eigen::ArrayXd>;

inline ConstArrayMap plane_array(const Tensor4& t, std::size_t n, std::size_t c) {
  return {t.plane(n, c), static_cast<Eigen::Index>(t.shape().plane())};
}
inline ArrayMap plane_array(Tensor4& t, std::size_t n, std::size_t c) {
  return {t.plane(n, c), static_cast<Eigen::Index>(t.shape().plane())};
}

}  // namespace detail

/// Normalization with the running estimates; never mutates `p`.
inline Tensor4 batchnorm_infer(const Tensor4& input, const BatchNormParams& p) {
  const Shape4 s = input.shape();
  if (s.c != p.channels()) fail(ErrorCode::ShapeMismatch, "batchnorm channel count");
  Tensor4 out(s, Tensor4::Uninitialized{});
  for (std::size_t c = 0; c < s.c; ++c) {
    const double inv_std = 1.0 / std::sqrt(p.running_var[c] + p.eps);
    for (std::size_t n = 0; n < s.n; ++n)
      detail::plane_array(out, n, c) = (detail::plane_array(input, n, c) - p.running_mean[c]) * inv_std * p.gamma[c] + p.beta[c];
  }
  return out;
}

/// Train mode normalizes with batch statistics and folds them into the
/// running estimates (running = momentum * running + (1 - momentum) * batch,
/// unbiased variance). Infer mode uses the running estimates.
inline Tensor4 batchnorm_forward(const Tensor4& input, BatchNormParams& p, Mode mode,
                                 BatchNormCache* cache = nullptr) {
  const Shape4 s = input.shape();
  if (s.c != p.channels()) fail(ErrorCode::ShapeMismatch, "batchnorm channel count");
  if (mode == Mode::Infer && !cache) return batchnorm_infer(input, p);
  const std::size_t count = s.n * s.plane();
  if (mode == Mode::Train && count < 2) fail(ErrorCode::DegenerateBatch, "need >= 2 values per channel");
  Tensor4 out(s, Tensor4::Uninitialized{});
  Tensor4 scratch;
  Tensor4& normalized = cache ? cache->normalized : scratch;
  normalized = Tensor4(s, Tensor4::Uninitialized{});
  if (cache) cache->inv_std.assign(s.c, 0.0);
  for (std::size_t c = 0; c < s.c; ++c) {
    double mean = 0.0, var = 0.0;
    if (mode == Mode::Train) {
      for (std::size_t n = 0; n < s.n; ++n) mean += detail::plane_array(input, n, c).sum();
      mean /= static_cast<double>(count);
      for (std::size_t n = 0; n < s.n; ++n) var += (detail::plane_array(input, n, c) - mean).square().sum();
      const double unbiased = var / static_cast<double>(count - 1);
      var /= static_cast<double>(count);
      p.running_mean[c] = p.momentum * p.running_mean[c] + (1.0 - p.momentum) * mean;
      p.running_var[c] = p.momentum * p.running_var[c] + (1.0 - p.momentum) * unbiased;
    } else {
      mean = p.running_mean[c];
      var = p.running_var[c];
    }
    const double inv_std = 1.0 / std::sqrt(var + p.eps);
    for (std::size_t n = 0; n < s.n; ++n) {
      auto xh = detail::plane_array(normalized, n, c);
      xh = (detail::plane_array(input, n, c) - mean) * inv_std;
      detail::plane_array(out, n, c) = xh * p.gamma[c] + p.beta[c];
    }
    if (cache) cache->inv_std[c] = inv_std;
  }
  return out;
}

/// Backward through Train-mode batch normalization.
inline BatchNormGrads batchnorm_backward(const Tensor4& grad_out, const BatchNormParams& p,
                                         const BatchNormCache& cache) {
  const Shape4 s = grad_out.shape();
  if (s != cache.normalized.shape() || s.c != p.channels()) fail(ErrorCode::ShapeMismatch, "batchnorm backward shape");
  const double m = static_cast<double>(s.n * s.plane());
  BatchNormGrads g{Tensor4(s, Tensor4::Uninitialized{}), Buffer(s.c, 0.0), Buffer(s.c, 0.0)};
  for (std::size_t c = 0; c < s.c; ++c) {
    double sum_g = 0.0, sum_gx = 0.0;
    for (std::size_t n = 0; n < s.n; ++n) {
      const auto go = detail::plane_array(grad_out, n, c);
      sum_g += go.sum();
      sum_gx += (go * detail::plane_array(cache.normalized, n, c)).sum();
    }
    g.gamma[c] = sum_gx;
    g.beta[c] = sum_g;
    const double k = p.gamma[c] * cache.inv_std[c] / m;
    for (std::size_t n = 0; n < s.n; ++n)
      detail::plane_array(g.input, n, c) =
          k * (m * detail::plane_array(grad_out, n, c) - sum_g - detail::plane_array(cache.normalized, n, c) * sum_gx);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Non-overlapping max pooling (stride = kernel, floor on output dims).

struct PoolKernel {
  std::size_t kh = 2, kw = 2;
  bool operator==(const PoolKernel&) const = default;
};

struct PoolResult {
  Tensor4 output;
  std::vector<std::size_t> argmax;  // flat input index per output element
};

inline Shape4 pooled_shape(const Shape4& s, PoolKernel k) {
  if (k.kh == 0 || k.kw == 0 || s.h < k.kh || s.w < k.kw)
    fail(ErrorCode::KernelTooLarge, "pool kernel " + std::to_string(k.kh) + "x" + std::to_string(k.kw) +
                                        " exceeds input " + std::to_string(s.h) + "x" + std::to_string(s.w));
  return {s.n, s.c, s.h / k.kh, s.w / k.kw};
}

/// Ties resolve to the first occurrence in row-major window order.
inline PoolResult maxpool_forward(const Tensor4& input, PoolKernel k) {
  const Shape4 s = input.shape();
  const Shape4 os = pooled_shape(s, k);
  PoolResult r{Tensor4(os, Tensor4::Uninitialized{}), std::vector<std::size_t>(os.count())};
  std::size_t o = 0;
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c) {
      const std::size_t base = (n * s.c + c) * s.plane();
      for (std::size_t oy = 0; oy < os.h; ++oy)
        for (std::size_t ox = 0; ox < os.w; ++ox, ++o) {
          double best = -std::numeric_limits<double>::infinity();
          std::size_t best_i = base + oy * k.kh * s.w + ox * k.kw;
          for (std::size_t dy = 0; dy < k.kh; ++dy)
            for (std::size_t dx = 0; dx < k.kw; ++dx) {
              const std::size_t i = base + (oy * k.kh + dy) * s.w + ox * k.kw + dx;
              if (input[i] > best) {
                best = input[i];
                best_i = i;
              }
            }
          r.output[o] = best;
          r.argmax[o] = best_i;
        }
    }
  return r;
}

inline Tensor4 maxpool_backward(const Tensor4& grad_out, const PoolResult& fwd, const Shape4& input_shape) {
  if (grad_out.shape() != fwd.output.shape()) fail(ErrorCode::ShapeMismatch, "maxpool backward shape");
  Tensor4 g(input_shape);
  for (std::size_t o = 0; o < grad_out.size(); ++o) g[fwd.argmax[o]] += grad_out[o];
  return g;
}

// ---------------------------------------------------------------------------
// Height-wise concatenation.

inline Tensor4 concat_spatial(const Tensor4& a, const Tensor4& b) {
  const Shape4 sa = a.shape(), sb = b.shape();
  if (sa.n != sb.n || sa.c != sb.c || sa.w != sb.w)
    fail(ErrorCode::ShapeMismatch, "concat " + sa.str() + " with " + sb.str());
  Tensor4 out(sa.n, sa.c, sa.h + sb.h, sa.w);
  for (std::size_t n = 0; n < sa.n; ++n)
    for (std::size_t c = 0; c < sa.c; ++c) {
      double* dst = out.plane(n, c);
      std::copy_n(a.plane(n, c), sa.plane(), dst);
      std::copy_n(b.plane(n, c), sb.plane(), dst + sa.plane());
    }
  return out;
}

/// Inverse of concat_spatial: rows [0, top_height) and the rest.
inline std::pair<Tensor4, Tensor4> split_spatial(const Tensor4& t, std::size_t top_height) {
  const Shape4 s = t.shape();
  if (top_height == 0 || top_height >= s.h) fail(ErrorCode::ShapeMismatch, "split height out of range");
  Tensor4 a(s.n, s.c, top_height, s.w), b(s.n, s.c, s.h - top_height, s.w);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c) {
      const double* src = t.plane(n, c);
      std::copy_n(src, a.shape().plane(), a.plane(n, c));
      std::copy_n(src + a.shape().plane(), b.shape().plane(), b.plane(n, c));
    }
  return {std::move(a), std::move(b)};
}

// ---------------------------------------------------------------------------
// Dense layer, softmax, cross-entropy.

struct DenseParams {
  std::size_t inputs = 0, outputs = 0;
  Buffer weight;  // [outputs][inputs]
  Buffer bias;    // [outputs]

  DenseParams() = default;
  DenseParams(std::size_t in, std::size_t out) : inputs(in), outputs(out), weight(in * out, 0.0), bias(out, 0.0) {}
};

struct DenseGrads {
  Tensor4 input;
  Buffer weight, bias;
};

/// Flattens each batch item (c*h*w) and returns logits shaped (n, outputs, 1, 1).
inline Tensor4 dense_forward(const Tensor4& input, const DenseParams& p) {
  const Shape4 s = input.shape();
  const std::size_t d = s.c * s.plane();
  if (d != p.inputs) fail(ErrorCode::ShapeMismatch, "dense expects " + std::to_string(p.inputs) + " inputs, got " + std::to_string(d));
  Tensor4 out(s.n, p.outputs, 1, 1);
  const ConstMatrixMap x(input.data(), static_cast<Eigen::Index>(s.n), static_cast<Eigen::Index>(d));
  const ConstMatrixMap w(p.weight.data(), static_cast<Eigen::Index>(p.outputs), static_cast<Eigen::Index>(d));
  MatrixMap y(out.data(), static_cast<Eigen::Index>(s.n), static_cast<Eigen::Index>(p.outputs));
  y.noalias() = x * w.transpose();
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t k = 0; k < p.outputs; ++k) out[n * p.outputs + k] += p.bias[k];
  return out;
}

inline DenseGrads dense_backward(const Tensor4& grad_logits, const Tensor4& input, const DenseParams& p) {
  const Shape4 s = input.shape();
  const std::size_t d = s.c * s.plane();
  if (grad_logits.shape() != Shape4{s.n, p.outputs, 1, 1}) fail(ErrorCode::ShapeMismatch, "dense backward shape");
  DenseGrads g{Tensor4(s), Buffer(p.weight.size()), Buffer(p.outputs, 0.0)};
  const ConstMatrixMap x(input.data(), static_cast<Eigen::Index>(s.n), static_cast<Eigen::Index>(d));
  const ConstMatrixMap w(p.weight.data(), static_cast<Eigen::Index>(p.outputs), static_cast<Eigen::Index>(d));
  const ConstMatrixMap gy(grad_logits.data(), static_cast<Eigen::Index>(s.n), static_cast<Eigen::Index>(p.outputs));
  MatrixMap gw(g.weight.data(), static_cast<Eigen::Index>(p.outputs), static_cast<Eigen::Index>(d));
  MatrixMap gx(g.input.data(), static_cast<Eigen::Index>(s.n), static_cast<Eigen::Index>(d));
  gw.noalias() = gy.transpose() * x;
  gx.noalias() = gy * w;
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t k = 0; k < p.outputs; ++k) g.bias[k] += grad_logits[n * p.outputs + k];
  return g;
}

/// Row-wise softmax with max subtraction.
inline std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) fail(ErrorCode::EmptyInput, "softmax of empty vector");
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

inline Tensor4 softmax_rows(const Tensor4& logits) {
  const Shape4 s = logits.shape();
  const std::size_t k = s.c * s.plane();
  Tensor4 out(s);
  for (std::size_t n = 0; n < s.n; ++n) {
    const auto p = softmax(logits.values().subspan(n * k, k));
    std::copy(p.begin(), p.end(), out.data() + n * k);
  }
  return out;
}

/// -ln p[label].
inline double cross_entropy_loss(std::span<const double> probs, std::size_t label) {
  if (label >= probs.size()) fail(ErrorCode::LabelOutOfRange, "label " + std::to_string(label));
  return -std::log(std::max(probs[label], std::numeric_limits<double>::min()));
}

/// Mean loss over the batch and its gradient w.r.t. the logits, (p - onehot) / n.
inline std::pair<double, Tensor4> softmax_cross_entropy(const Tensor4& logits, std::span<const std::size_t> labels) {
  const Shape4 s = logits.shape();
  const std::size_t k = s.c * s.plane();
  if (labels.size() != s.n) fail(ErrorCode::ShapeMismatch, "label count differs from batch size");
  Tensor4 grad = softmax_rows(logits);
  double loss = 0.0;
  const double inv_n = 1.0 / static_cast<double>(s.n);
  for (std::size_t n = 0; n < s.n; ++n) {
    const auto row = grad.values().subspan(n * k, k);
    loss += cross_entropy_loss(row, labels[n]);
    row[labels[n]] -= 1.0;
    for (double& v : row) v *= inv_n;
  }
  return {loss * inv_n, std::move(grad)};
}

}  // namespace vibhead::nn
