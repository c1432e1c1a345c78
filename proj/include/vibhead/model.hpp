#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "vibhead/error.hpp"
#include "vibhead/features.hpp"
#include "vibhead/layers.hpp"
#include "vibhead/rng.hpp"

namespace vibhead {

/// Pooling per conv block plus block widths. The default pools bring a 1 s
/// sample (50x40 primitive, 98x39 MFCC) down to 2x1 and 8x1.
struct Architecture {
  std::array<nn::PoolKernel, 3> primitive_pools{{{3, 4}, {3, 4}, {2, 2}}};
  std::array<nn::PoolKernel, 3> mfcc_pools{{{3, 3}, {2, 3}, {2, 4}}};
  std::array<std::size_t, 3> channels{32, 64, 128};

  bool operator==(const Architecture&) const = default;
};

struct InputDescriptor {
  double clip_ms = 1000.0;
  std::size_t primitive_rows = 50, primitive_cols = 40;
  std::size_t mfcc_rows = 98, mfcc_cols = 39;

  bool operator==(const InputDescriptor&) const = default;

  static InputDescriptor of(const FeaturePair& x) {
    return {x.primitive.duration_ms, x.primitive.channels[0].rows, x.primitive.channels[0].cols,
            x.mfcc.channels[0].rows, x.mfcc.channels[0].cols};
  }

  void check(const FeaturePair& x) const {
    const auto& p = x.primitive.channels;
    const auto& m = x.mfcc.channels;
    for (std::size_t c = 0; c < 3; ++c) {
      if (p[c].rows != primitive_rows || p[c].cols != primitive_cols || m[c].rows != mfcc_rows ||
          m[c].cols != mfcc_cols)
        fail(ErrorCode::ShapeMismatch, "feature shape " + std::to_string(p[c].rows) + "x" + std::to_string(p[c].cols) +
                                           " / " + std::to_string(m[c].rows) + "x" + std::to_string(m[c].cols) +
                                           " does not match model input " + std::to_string(primitive_rows) + "x" +
                                           std::to_string(primitive_cols) + " / " + std::to_string(mfcc_rows) +
                                           "x" + std::to_string(mfcc_cols));
    }
  }
};

/// Gradient buffers, one entry per trainable tensor in `trainable()` order.
using GradientSet = std::vector<nn::Buffer>;
using ParameterList = std::vector<nn::Buffer*>;

/// Three conv -> batchnorm -> ReLU -> maxpool blocks. Max pooling commutes
/// with ReLU, so ReLU is applied to the pooled (smaller) tensor.
class Encoder {
 public:
  struct Block {
    nn::ConvParams conv;
    nn::BatchNormParams bn;
    nn::PoolKernel pool;
  };

  struct Cache {
    struct Layer {
      nn::Tensor4 conv_in;
      nn::BatchNormCache bn;
      nn::Shape4 bn_shape;
      nn::PoolResult pool;
    };
    std::array<Layer, 3> layers;
  };

  Encoder() = default;
  Encoder(std::size_t in_channels, const std::array<std::size_t, 3>& channels,
          const std::array<nn::PoolKernel, 3>& pools) {
    std::size_t in = in_channels;
    for (std::size_t i = 0; i < 3; ++i) {
      blocks_[i] = Block{nn::ConvParams(in, channels[i]), nn::BatchNormParams(channels[i]), pools[i]};
      in = channels[i];
    }
  }

  std::array<Block, 3>& blocks() { return blocks_; }
  const std::array<Block, 3>& blocks() const { return blocks_; }

  nn::Shape4 output_shape(nn::Shape4 in) const {
    for (const auto& b : blocks_) {
      in.c = b.conv.out_channels;
      in = nn::pooled_shape(in, b.pool);
    }
    return in;
  }

  nn::Tensor4 forward_train(const nn::Tensor4& x, Cache& cache) {
    nn::Tensor4 h = x;
    for (std::size_t i = 0; i < 3; ++i) {
      auto& b = blocks_[i];
      auto& l = cache.layers[i];
      l.conv_in = std::move(h);
      const nn::Tensor4 normalized =
          nn::batchnorm_forward(nn::conv2d_forward(l.conv_in, b.conv), b.bn, nn::Mode::Train, &l.bn);
      l.bn_shape = normalized.shape();
      l.pool = nn::maxpool_forward(normalized, b.pool);
      h = nn::relu_forward(l.pool.output);
    }
    return h;
  }

  nn::Tensor4 forward_infer(const nn::Tensor4& x) const {
    nn::Tensor4 h = x;
    for (const auto& b : blocks_)
      h = nn::relu_forward(nn::maxpool_forward(nn::batchnorm_infer(nn::conv2d_forward(h, b.conv), b.bn), b.pool).output);
    return h;
  }

  /// Appends gradients in parameter order (per block: kernel, bias, gamma, beta).
  void backward(const nn::Tensor4& grad_out, const Cache& cache, GradientSet& out) const {
    std::array<nn::ConvGrads, 3> conv;
    std::array<nn::BatchNormGrads, 3> bn;
    nn::Tensor4 g = grad_out;
    for (std::size_t k = 3; k-- > 0;) {
      const auto& b = blocks_[k];
      const auto& l = cache.layers[k];
      g = nn::relu_backward(g, l.pool.output);
      g = nn::maxpool_backward(g, l.pool, l.bn_shape);
      bn[k] = nn::batchnorm_backward(g, b.bn, l.bn);
      conv[k] = nn::conv2d_backward(bn[k].input, l.conv_in, b.conv, k > 0);
      g = std::move(conv[k].input);
    }
    for (std::size_t k = 0; k < 3; ++k) {
      out.push_back(std::move(conv[k].kernel));
      out.push_back(std::move(conv[k].bias));
      out.push_back(std::move(bn[k].gamma));
      out.push_back(std::move(bn[k].beta));
    }
  }

  void append_trainable(ParameterList& out) {
    for (auto& b : blocks_) {
      out.push_back(&b.conv.kernel);
      out.push_back(&b.conv.bias);
      out.push_back(&b.bn.gamma);
      out.push_back(&b.bn.beta);
    }
  }

 private:
  std::array<Block, 3> blocks_;
};

/// Labeled probabilities produced by a classifier.
struct ProbabilityVector {
  std::vector<UserId> labels;
  std::vector<double> probs;

  /// Index of the maximum; ties go to the lowest user id.
  std::size_t argmax_index() const {
    std::size_t best = 0;
    for (std::size_t i = 1; i < probs.size(); ++i)
      if (probs[i] > probs[best] || (probs[i] == probs[best] && labels[i] < labels[best])) best = i;
    return best;
  }
  UserId argmax() const { return labels[argmax_index()]; }
  double max() const { return probs[argmax_index()]; }

  double prob_of(UserId id) const {
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == id) return probs[i];
    return 0.0;
  }
};

/// Dual-encoder CNN F(x; theta) over an ordered label list.
class ClassifierModel {
 public:
  ClassifierModel() = default;

  ClassifierModel(std::vector<UserId> labels, const InputDescriptor& input, const Architecture& arch = {})
      : labels_(std::move(labels)), input_(input), arch_(arch) {
    std::vector<UserId> sorted = labels_;
    std::sort(sorted.begin(), sorted.end());
    if (sorted.size() < 2 || std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      fail(ErrorCode::InvalidArgument, "label list needs >= 2 distinct entries");
    primitive_ = Encoder(3, arch.channels, arch.primitive_pools);
    mfcc_ = Encoder(3, arch.channels, arch.mfcc_pools);
    const auto ps = primitive_.output_shape({1, 3, input.primitive_rows, input.primitive_cols});
    const auto ms = mfcc_.output_shape({1, 3, input.mfcc_rows, input.mfcc_cols});
    if (ps.w != ms.w) fail(ErrorCode::ShapeMismatch, "encoder output widths differ: " + ps.str() + " vs " + ms.str());
    primitive_height_ = ps.h;
    head_ = nn::DenseParams(ps.c * (ps.h + ms.h) * ps.w, labels_.size());
  }

  const std::vector<UserId>& labels() const { return labels_; }
  const InputDescriptor& input() const { return input_; }
  const Architecture& architecture() const { return arch_; }
  std::uint64_t config_fingerprint() const { return fingerprint_; }
  void set_config_fingerprint(std::uint64_t f) { fingerprint_ = f; }

  Encoder& primitive_encoder() { return primitive_; }
  Encoder& mfcc_encoder() { return mfcc_; }
  const Encoder& primitive_encoder() const { return primitive_; }
  const Encoder& mfcc_encoder() const { return mfcc_; }
  nn::DenseParams& head() { return head_; }
  const nn::DenseParams& head() const { return head_; }

  /// Kaiming-uniform (fan-in) weights, zero biases.
  void initialize(std::uint64_t seed) {
    std::uint64_t stream = 0;
    auto fill = [&](nn::Buffer& w, std::size_t fan_in) {
      CounterRng rng(seed, stream++);
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
      for (double& v : w) v = rng.uniform(-bound, bound);
    };
    for (Encoder* e : {&primitive_, &mfcc_})
      for (auto& b : e->blocks()) {
        fill(b.conv.kernel, b.conv.in_channels * nn::kTaps);
        std::fill(b.conv.bias.begin(), b.conv.bias.end(), 0.0);
      }
    fill(head_.weight, head_.inputs);
    std::fill(head_.bias.begin(), head_.bias.end(), 0.0);
  }

  ParameterList trainable() {
    ParameterList out;
    primitive_.append_trainable(out);
    mfcc_.append_trainable(out);
    out.push_back(&head_.weight);
    out.push_back(&head_.bias);
    return out;
  }

  struct Batch {
    nn::Tensor4 primitive;
    nn::Tensor4 mfcc;
  };

  Batch make_batch(std::span<const FeaturePair* const> items) const {
    Batch b{nn::Tensor4(items.size(), 3, input_.primitive_rows, input_.primitive_cols),
            nn::Tensor4(items.size(), 3, input_.mfcc_rows, input_.mfcc_cols)};
    for (std::size_t n = 0; n < items.size(); ++n) {
      input_.check(*items[n]);
      pack_channels(items[n]->primitive.channels, b.primitive, n);
      pack_channels(items[n]->mfcc.channels, b.mfcc, n);
    }
    return b;
  }

  /// Train-mode forward + backward. Updates batchnorm running statistics and
  /// returns the mean cross-entropy with gradients in `trainable()` order.
  double loss_and_gradients(const Batch& batch, std::span<const std::size_t> targets, GradientSet& grads) {
    Encoder::Cache pc, mc;
    const nn::Tensor4 pe = primitive_.forward_train(batch.primitive, pc);
    const nn::Tensor4 me = mfcc_.forward_train(batch.mfcc, mc);
    const nn::Tensor4 joined = nn::concat_spatial(pe, me);
    const nn::Tensor4 logits = nn::dense_forward(joined, head_);
    auto [loss, grad_logits] = nn::softmax_cross_entropy(logits, targets);
    nn::DenseGrads dg = nn::dense_backward(grad_logits, joined, head_);
    auto [gp, gm] = nn::split_spatial(dg.input, primitive_height_);
    grads.clear();
    primitive_.backward(gp, pc, grads);
    mfcc_.backward(gm, mc, grads);
    grads.push_back(std::move(dg.weight));
    grads.push_back(std::move(dg.bias));
    return loss;
  }

  nn::Tensor4 logits(const Batch& batch) const {
    const nn::Tensor4 joined =
        nn::concat_spatial(primitive_.forward_infer(batch.primitive), mfcc_.forward_infer(batch.mfcc));
    return nn::dense_forward(joined, head_);
  }

  /// Infer-mode class probabilities for one sample.
  ProbabilityVector predict(const FeaturePair& x) const {
    input_.check(x);
    const FeaturePair* items[] = {&x};
    const nn::Tensor4 p = nn::softmax_rows(logits(make_batch(items)));
    return {labels_, std::vector<double>(p.values().begin(), p.values().end())};
  }

  std::size_t label_index(UserId id) const {
    for (std::size_t i = 0; i < labels_.size(); ++i)
      if (labels_[i] == id) return i;
    fail(ErrorCode::LabelOutOfRange, "user " + std::to_string(id) + " not in model labels");
  }

 private:
  std::vector<UserId> labels_;
  InputDescriptor input_;
  Architecture arch_;
  Encoder primitive_, mfcc_;
  nn::DenseParams head_;
  std::size_t primitive_height_ = 0;
  std::uint64_t fingerprint_ = 0;
};

}  // namespace vibhead
