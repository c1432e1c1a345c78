#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "vibhead/layers.hpp"
#include "vibhead/rng.hpp"

namespace vibhead::testing {

inline nn::Tensor4 random_tensor(nn::Shape4 s, CounterRng& rng, double lo = -1.0, double hi = 1.0) {
  nn::Tensor4 t(s);
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

template <typename Values>
void randomize(Values& xs, CounterRng& rng, double lo = -1.0, double hi = 1.0) {
  for (double& v : xs) v = rng.uniform(lo, hi);
}

/// |a - n| / max(|a|, |n|, floor). The floor keeps components whose true
/// gradient is ~0 from turning round-off into a huge ratio.
inline double relative_error(double analytic, double numeric, double floor = 1e-3) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

/// Central differences of `loss` with respect to every entry of `xs`, compared
/// with `analytic`. Returns the worst relative error.
inline double check_gradient(std::span<double> xs, std::span<const double> analytic,
                             const std::function<double()>& loss, double eps = 1e-5) {
  double worst = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double keep = xs[i];
    auto at = [&](double d) {
      xs[i] = keep + d;
      return loss();
    };
    // five-point stencil; plain central differences lose ~1e-6 to curvature
    // through batchnorm on 2-sample batches
    const double numeric = (8.0 * (at(eps) - at(-eps)) - (at(2.0 * eps) - at(-2.0 * eps))) / (12.0 * eps);
    xs[i] = keep;
    worst = std::max(worst, relative_error(analytic[i], numeric));
  }
  return worst;
}

template <typename Values>
std::vector<double> to_vector(const Values& v) {
  return std::vector<double>(v.begin(), v.end());
}

/// sum(out * weights), the scalar probe used for backward checks.
inline double weighted_sum(const nn::Tensor4& out, const nn::Tensor4& weights) {
  double s = 0.0;
  for (std::size_t i = 0; i < out.values().size(); ++i) s += out.values()[i] * weights.values()[i];
  return s;
}

}  // namespace vibhead::testing

#include "vibhead/features.hpp"
#include "vibhead/synth.hpp"

namespace vibhead::testing {

/// Features for a small synthetic corpus: `per_gesture` recordings of each
/// gesture for users 1..users, then impostors (label kImpostor).
inline std::vector<FeaturePair> synthetic_features(std::size_t users, std::size_t impostors, std::size_t per_gesture,
                                                   std::uint64_t seed = 42, double clip_ms = 1000.0) {
  synth::CorpusSpec spec;
  spec.users = users;
  spec.impostors = impostors;
  spec.samples_per_gesture = per_gesture;
  spec.master_seed = seed;
  FeatureConfig fc;
  fc.clip_ms = clip_ms;
  std::vector<FeaturePair> out;
  synth::generate_corpus(spec, [&](synth::CorpusEntry e) { out.push_back(features_from_recording(e.recording, fc)); });
  return out;
}

}  // namespace vibhead::testing
