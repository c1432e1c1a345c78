#pragma once

#include <cstddef>
#include <optional>

#include "vibhead/mfcc.hpp"
#include "vibhead/signal.hpp"
#include "vibhead/tensor.hpp"

namespace vibhead {

/// Classifier input x: primitive and MFCC feature maps of one clipped burst.
struct FeaturePair {
  PrimitiveFeature primitive;
  MfccFeature mfcc;
  std::optional<UserId> user;
  std::optional<Gesture> gesture;
};

struct FeatureConfig {
  BurstDetectorConfig burst;
  MfccConfig mfcc;
  double clip_ms = 1000.0;
};

inline FeaturePair extract_features(const VibrationRecording& clipped, const MfccConfig& mfcc = {}) {
  FeaturePair f;
  f.primitive = to_primitive_feature(clipped);
  f.mfcc = compute_mfcc(clipped, mfcc);
  f.user = clipped.user;
  f.gesture = clipped.gesture;
  return f;
}

/// Raw recording -> burst -> clip -> features.
inline FeaturePair features_from_recording(const VibrationRecording& rec, const FeatureConfig& cfg = {}) {
  const BurstSegment seg = detect_burst(rec, cfg.burst);
  return extract_features(clip_sample(rec, seg, cfg.clip_ms), cfg.mfcc);
}

/// Copies a 3-channel feature into batch slot `n` of `dst` (shape n x 3 x rows x cols).
inline void pack_channels(const std::array<Matrix, 3>& channels, nn::Tensor4& dst, std::size_t n) {
  for (std::size_t c = 0; c < 3; ++c) {
    const Matrix& m = channels[c];
    if (m.rows != dst.shape().h || m.cols != dst.shape().w)
      fail(ErrorCode::ShapeMismatch, "feature map " + std::to_string(m.rows) + "x" + std::to_string(m.cols) +
                                         " does not match model input " + std::to_string(dst.shape().h) + "x" +
                                         std::to_string(dst.shape().w));
    std::copy(m.values.begin(), m.values.end(), dst.plane(n, c));
  }
}

}  // namespace vibhead
