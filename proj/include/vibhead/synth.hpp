#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "vibhead/error.hpp"
#include "vibhead/rng.hpp"
#include "vibhead/signal.hpp"

namespace vibhead::synth {

/// RBJ peaking section: unity far from `center_hz`, `gain` at the center.
struct ResonantSection {
  double center_hz = 0.0;
  double q = 1.0;
  double gain = 1.0;
  bool operator==(const ResonantSection&) const = default;
};

struct Biquad {
  double b0 = 1, b1 = 0, b2 = 0, a1 = 0, a2 = 0;

  static Biquad peaking(const ResonantSection& s, int sample_rate_hz) {
    const double w0 = 2.0 * std::numbers::pi * s.center_hz / sample_rate_hz;
    const double alpha = std::sin(w0) / (2.0 * s.q);
    const double a = std::sqrt(s.gain);
    const double a0 = 1.0 + alpha / a;
    return {(1.0 + alpha * a) / a0, -2.0 * std::cos(w0) / a0, (1.0 - alpha * a) / a0, -2.0 * std::cos(w0) / a0,
            (1.0 - alpha / a) / a0};
  }

  /// Roots of z^2 + a1 z + a2.
  std::array<std::complex<double>, 2> poles() const {
    const std::complex<double> disc = std::sqrt(std::complex<double>(a1 * a1 - 4.0 * a2, 0.0));
    return {(-a1 + disc) / 2.0, (-a1 - disc) / 2.0};
  }

  std::complex<double> response(double hz, int sample_rate_hz) const {
    const std::complex<double> z1 = std::polar(1.0, -2.0 * std::numbers::pi * hz / sample_rate_hz);
    return (b0 + b1 * z1 + b2 * z1 * z1) / (1.0 + a1 * z1 + a2 * z1 * z1);
  }

  /// Direct form I over the whole signal, in place.
  void run(std::vector<double>& x) const {
    double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
    for (double& v : x) {
      const double y = b0 * v + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
      x2 = x1;
      x1 = v;
      y2 = y1;
      y1 = y;
      v = y;
    }
  }
};

/// Pseudo head transfer function of one synthetic person.
struct SyntheticUserProfile {
  std::uint64_t seed = 0;
  std::array<std::vector<ResonantSection>, 3> sections;
  std::array<std::array<double, 3>, 3> coupling{};  // out axis <- filtered axis
  double noise_sigma = 0.0;

  bool operator==(const SyntheticUserProfile&) const = default;
};

struct GestureEffect {
  double amplitude_scale = 1.0;
  double scale_jitter = 0.0;  // relative std-dev per sample
  double motion_amplitude = 0.0;
  double motion_hz_min = 0.0, motion_hz_max = 0.0;
  double noise_multiplier = 1.0;
};

inline GestureEffect gesture_effect(Gesture g) {
  switch (g) {
    case Gesture::Standing: return {1.00, 0.015, 0.0, 0.0, 0.0, 1.0};
    case Gesture::SittingUpright: return {0.96, 0.015, 0.0, 0.0, 0.0, 1.0};
    case Gesture::SittingLeanForward: return {1.05, 0.015, 0.0, 0.0, 0.0, 1.0};
    case Gesture::SittingLeanBackward: return {0.93, 0.015, 0.0, 0.0, 0.0, 1.0};
    case Gesture::Walking: return {1.00, 0.03, 0.08, 1.5, 2.5, 3.0};
  }
  return {};
}

struct SynthConfig {
  int sample_rate_hz = 2000;
  double drive_hz = 300.0;
  double drive_amplitude = 1.0;
  double ramp_ms = 20.0;
  double pad_ms = 500.0;
  double noise_scale = 1.0;  // multiplies every noise source; 0 disables noise
  double center_min_hz = 150.0, center_max_hz = 900.0;
  double q_min = 2.0, q_max = 15.0;
  double gain_min = 0.3, gain_max = 2.0;
  double sensor_noise_min = 0.01, sensor_noise_max = 0.02;
};

namespace streams {
inline constexpr std::uint64_t kProfile = 0x50524f46ULL;
inline constexpr std::uint64_t kSample = 0x53414d50ULL;
inline constexpr std::uint64_t kNoise = 0x4e4f4953ULL;
}  // namespace streams

inline SyntheticUserProfile make_user(std::uint64_t seed, const SynthConfig& cfg = {}) {
  SyntheticUserProfile p;
  p.seed = seed;
  CounterRng rng(seed, streams::kProfile);
  for (auto& axis : p.sections) {
    const auto n = rng.uniform_int(2, 4);
    for (std::int64_t k = 0; k < n; ++k)
      axis.push_back({rng.uniform(cfg.center_min_hz, cfg.center_max_hz), rng.uniform(cfg.q_min, cfg.q_max),
                      rng.uniform(cfg.gain_min, cfg.gain_max)});
  }
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) p.coupling[i][j] = i == j ? 1.0 : rng.uniform(0.05, 0.35);
  p.noise_sigma = rng.uniform(cfg.sensor_noise_min, cfg.sensor_noise_max);
  return p;
}

struct RecordingLayout {
  std::size_t lead_samples = 0;   // silence before the burst
  std::size_t burst_samples = 0;
  std::size_t tail_samples = 0;
  std::size_t total() const { return lead_samples + burst_samples + tail_samples; }
};

inline RecordingLayout default_layout(double duration_ms, const SynthConfig& cfg = {}) {
  const std::size_t pad = detail::ms_to_samples(cfg.pad_ms, cfg.sample_rate_hz);
  return {pad, detail::ms_to_samples(duration_ms, cfg.sample_rate_hz), pad};
}

/// Raised-cosine gated sinusoidal drive through the profile, plus gesture
/// motion and white sensor noise.
inline VibrationRecording generate_recording(const SyntheticUserProfile& profile, Gesture gesture,
                                             std::uint64_t sample_seed, const RecordingLayout& layout,
                                             const SynthConfig& cfg = {}) {
  if (layout.burst_samples == 0) fail(ErrorCode::InvalidArgument, "burst duration must be positive");
  const int fs = cfg.sample_rate_hz;
  const std::size_t total = layout.total();
  const std::size_t ramp = std::min(detail::ms_to_samples(cfg.ramp_ms, fs), layout.burst_samples / 2);

  std::vector<double> drive(total, 0.0);
  for (std::size_t i = 0; i < layout.burst_samples; ++i) {
    double env = 1.0;
    const std::size_t from_end = layout.burst_samples - 1 - i;
    if (ramp > 0 && i < ramp) env = 0.5 * (1.0 - std::cos(std::numbers::pi * static_cast<double>(i) / ramp));
    if (ramp > 0 && from_end < ramp)
      env = std::min(env, 0.5 * (1.0 - std::cos(std::numbers::pi * static_cast<double>(from_end) / ramp)));
    drive[layout.lead_samples + i] =
        cfg.drive_amplitude * env * std::sin(2.0 * std::numbers::pi * cfg.drive_hz * static_cast<double>(i) / fs);
  }

  std::array<std::vector<double>, 3> filtered;
  for (std::size_t a = 0; a < 3; ++a) {
    filtered[a] = drive;
    for (const auto& s : profile.sections[a]) Biquad::peaking(s, fs).run(filtered[a]);
  }

  const GestureEffect g = gesture_effect(gesture);
  CounterRng rng(sample_seed, streams::kSample);
  const double scale = g.amplitude_scale * (1.0 + cfg.noise_scale * g.scale_jitter * rng.normal());
  const double motion_hz = rng.uniform(g.motion_hz_min, g.motion_hz_max);
  const double motion_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  std::array<double, 3> motion_dir{};
  for (double& d : motion_dir) d = rng.uniform(0.3, 1.0);
  const double sigma = cfg.noise_scale * profile.noise_sigma * g.noise_multiplier;

  VibrationRecording rec;
  rec.sample_rate_hz = fs;
  rec.gesture = gesture;
  for (std::size_t a = 0; a < 3; ++a) {
    CounterRng noise(sample_seed, streams::kNoise + a);
    auto& out = rec.axes[a];
    out.resize(total);
    for (std::size_t i = 0; i < total; ++i) {
      double v = 0.0;
      for (std::size_t j = 0; j < 3; ++j) v += profile.coupling[a][j] * filtered[j][i];
      v *= scale;
      if (g.motion_amplitude > 0.0)
        v += cfg.noise_scale * g.motion_amplitude * motion_dir[a] *
             std::sin(2.0 * std::numbers::pi * motion_hz * static_cast<double>(i) / fs + motion_phase);
      if (sigma > 0.0) v += sigma * noise.normal();
      out[i] = v;
    }
  }
  return rec;
}

inline VibrationRecording generate_recording(const SyntheticUserProfile& profile, Gesture gesture, double duration_ms,
                                             std::uint64_t sample_seed, const SynthConfig& cfg = {}) {
  if (!(duration_ms > 0.0)) fail(ErrorCode::InvalidArgument, "duration must be positive");
  return generate_recording(profile, gesture, sample_seed, default_layout(duration_ms, cfg), cfg);
}

struct CorpusEntry {
  std::string name;
  std::size_t person = 0;  // registered users first, then impostors
  std::uint64_t seed = 0;
  VibrationRecording recording;
};

struct CorpusSpec {
  std::size_t users = 10;
  std::size_t impostors = 10;
  std::size_t samples_per_gesture = 20;
  double duration_ms = 1000.0;
  std::uint64_t master_seed = 42;
};

inline std::uint64_t person_seed(std::uint64_t master, std::size_t person) {
  return hash_triple(master, streams::kProfile, person);
}

inline std::uint64_t sample_seed(std::uint64_t master, std::size_t person, Gesture g, std::size_t k) {
  return hash_triple(master, streams::kSample, (static_cast<std::uint64_t>(person) << 24) |
                                                   (static_cast<std::uint64_t>(g) << 16) | k);
}

inline std::string entry_name(std::size_t person, std::size_t users, Gesture g, std::size_t k) {
  const std::string who = person < users ? "user" + std::to_string(person + 1) : "impostor" + std::to_string(person - users + 1);
  return who + "_" + std::string(to_string(g)) + "_" + std::to_string(k) + ".csv";
}

/// Recordings in (person, gesture, index) order; registered users get ids
/// 1..users, impostors carry kImpostor.
template <typename Sink>
void generate_corpus(const CorpusSpec& spec, Sink&& sink, const SynthConfig& cfg = {}) {
  if (spec.users < 3) fail(ErrorCode::TooFewUsers, "corpus needs at least 3 registered users");
  for (std::size_t person = 0; person < spec.users + spec.impostors; ++person) {
    const auto profile = make_user(person_seed(spec.master_seed, person), cfg);
    for (Gesture g : kAllGestures)
      for (std::size_t k = 0; k < spec.samples_per_gesture; ++k) {
        CorpusEntry e;
        e.person = person;
        e.seed = sample_seed(spec.master_seed, person, g, k);
        e.name = entry_name(person, spec.users, g, k);
        e.recording = generate_recording(profile, g, spec.duration_ms, e.seed, cfg);
        e.recording.user = person < spec.users ? static_cast<UserId>(person + 1) : kImpostor;
        sink(std::move(e));
      }
  }
}

inline std::vector<CorpusEntry> generate_corpus(const CorpusSpec& spec, const SynthConfig& cfg = {}) {
  std::vector<CorpusEntry> out;
  generate_corpus(spec, [&](CorpusEntry&& e) { out.push_back(std::move(e)); }, cfg);
  return out;
}

}  // namespace vibhead::synth
