#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "vibhead/error.hpp"
#include "vibhead/model.hpp"
#include "vibhead/rng.hpp"

namespace vibhead {

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t epochs = 50;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 42;
  bool shuffle = true;

  void validate() const {
    if (batch_size < 2) fail(ErrorCode::InvalidArgument, "batch_size must be >= 2");
    if (epochs < 1) fail(ErrorCode::InvalidArgument, "epochs must be >= 1");
    if (!(learning_rate > 0.0)) fail(ErrorCode::InvalidArgument, "learning_rate must be positive");
  }

  /// FNV-1a over the fields that influence training.
  std::uint64_t fingerprint() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&](std::uint64_t v) {
      for (int i = 0; i < 8; ++i) {
        h ^= (v >> (8 * i)) & 0xFF;
        h *= 0x100000001b3ULL;
      }
    };
    auto bits = [](double d) { return std::bit_cast<std::uint64_t>(d); };
    mix(batch_size);
    mix(epochs);
    mix(bits(learning_rate));
    mix(bits(adam_beta1));
    mix(bits(adam_beta2));
    mix(bits(adam_eps));
    mix(seed);
    mix(shuffle ? 1 : 0);
    return h;
  }
};

/// Mean training loss per epoch.
using LossTrace = std::vector<double>;

class AdamOptimizer {
 public:
  AdamOptimizer(const TrainConfig& cfg, const ParameterList& params) : cfg_(cfg) {
    for (const auto* p : params) {
      m_.emplace_back(p->size(), 0.0);
      v_.emplace_back(p->size(), 0.0);
    }
  }

  void step(const ParameterList& params, const GradientSet& grads) {
    if (grads.size() != params.size()) fail(ErrorCode::ShapeMismatch, "gradient count differs from parameter count");
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.adam_beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.adam_beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = *params[i];
      const auto& g = grads[i];
      if (g.size() != p.size()) fail(ErrorCode::ShapeMismatch, "gradient size mismatch");
      for (std::size_t j = 0; j < p.size(); ++j) {
        m_[i][j] = cfg_.adam_beta1 * m_[i][j] + (1.0 - cfg_.adam_beta1) * g[j];
        v_[i][j] = cfg_.adam_beta2 * v_[i][j] + (1.0 - cfg_.adam_beta2) * g[j] * g[j];
        p[j] -= cfg_.learning_rate * (m_[i][j] / c1) / (std::sqrt(v_[i][j] / c2) + cfg_.adam_eps);
      }
    }
  }

 private:
  TrainConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::uint64_t t_ = 0;
};

/// Fisher-Yates permutation of [0, n) drawn from a counter stream.
inline std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed, std::uint64_t stream) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  CounterRng rng(seed, stream);
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
  return idx;
}

struct TrainResult {
  ClassifierModel model;
  LossTrace loss;
};

/// Mini-batch cross-entropy training with Adam. Output classes follow the
/// order in which user ids first appear in `dataset`, so renaming users
/// renames the outputs and changes nothing else. Every sample must carry a
/// user label.
inline TrainResult train_classifier(std::span<const FeaturePair> dataset, const TrainConfig& cfg,
                                    const Architecture& arch = {}, std::span<const UserId> expected_labels = {}) {
  cfg.validate();
  if (dataset.empty()) fail(ErrorCode::EmptyInput, "empty training set");
  std::map<UserId, std::size_t> counts;
  for (UserId id : expected_labels) counts[id] = 0;
  for (const auto& x : dataset) {
    if (!x.user) fail(ErrorCode::InvalidArgument, "training sample without user label");
    ++counts[*x.user];
  }
  for (const auto& [id, n] : counts)
    if (n == 0) fail(ErrorCode::EmptyClass, "user " + std::to_string(id) + " has no samples");
  if (counts.size() < 2) fail(ErrorCode::InvalidArgument, "need at least two users to train");

  const InputDescriptor input = InputDescriptor::of(dataset.front());
  for (const auto& x : dataset) input.check(x);

  std::vector<UserId> labels;
  for (const auto& x : dataset)
    if (std::find(labels.begin(), labels.end(), *x.user) == labels.end()) labels.push_back(*x.user);
  ClassifierModel model(labels, input, arch);
  model.initialize(cfg.seed);
  model.set_config_fingerprint(cfg.fingerprint());

  std::vector<std::size_t> targets(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) targets[i] = model.label_index(*dataset[i].user);

  auto params = model.trainable();
  AdamOptimizer adam(cfg, params);
  GradientSet grads;
  LossTrace trace;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(dataset.size());
    if (cfg.shuffle)
      order = seeded_permutation(dataset.size(), cfg.seed, 0x5348554646ULL + epoch);
    else
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    double total = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, order.size() - start);
      if (len < 2) break;
      std::vector<const FeaturePair*> items(len);
      std::vector<std::size_t> batch_targets(len);
      for (std::size_t k = 0; k < len; ++k) {
        items[k] = &dataset[order[start + k]];
        batch_targets[k] = targets[order[start + k]];
      }
      const auto batch = model.make_batch(items);
      const double loss = model.loss_and_gradients(batch, batch_targets, grads);
      adam.step(params, grads);
      total += loss * static_cast<double>(len);
      seen += len;
    }
    if (seen == 0) fail(ErrorCode::DegenerateBatch, "no mini-batch of size >= 2");
    trace.push_back(total / static_cast<double>(seen));
  }
  return {std::move(model), std::move(trace)};
}

inline ProbabilityVector predict(const ClassifierModel& model, const FeaturePair& x) { return model.predict(x); }

// ---------------------------------------------------------------------------
// Stratified train/test split.

struct StratumKey {
  UserId user = 0;
  std::optional<Gesture> gesture;
  auto operator<=>(const StratumKey&) const = default;
};

struct SplitIndices {
  std::vector<std::size_t> train, test;
};

/// Per (user, gesture) stratum: round(n * fraction) train samples, clamped so
/// each side keeps at least one. Output indices are ascending.
inline SplitIndices split_dataset(std::span<const StratumKey> keys, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) fail(ErrorCode::InvalidArgument, "train_fraction must be in (0, 1)");
  std::map<StratumKey, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < keys.size(); ++i) strata[keys[i]].push_back(i);
  SplitIndices out;
  for (const auto& [key, members] : strata) {
    const std::size_t n = members.size();
    if (n < 2)
      fail(ErrorCode::StratumTooSmall, "stratum user=" + std::to_string(key.user) + " has " + std::to_string(n) + " sample");
    auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(n) * train_fraction));
    n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
    const std::uint64_t stream = (static_cast<std::uint64_t>(static_cast<std::uint32_t>(key.user)) << 8) |
                                 (key.gesture ? static_cast<std::uint64_t>(*key.gesture) + 1 : 0);
    const auto perm = seeded_permutation(n, seed, stream);
    for (std::size_t k = 0; k < n; ++k) (k < n_train ? out.train : out.test).push_back(members[perm[k]]);
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

inline std::vector<StratumKey> strata_of(std::span<const FeaturePair> samples) {
  std::vector<StratumKey> keys;
  keys.reserve(samples.size());
  for (const auto& s : samples) keys.push_back({s.user.value_or(kImpostor), s.gesture});
  return keys;
}

}  // namespace vibhead
