#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "vibhead/error.hpp"
#include "vibhead/matrix.hpp"

namespace vibhead {

enum class Gesture { Standing, SittingUpright, SittingLeanForward, SittingLeanBackward, Walking };

inline constexpr std::array<Gesture, 5> kAllGestures = {
    Gesture::Standing, Gesture::SittingUpright, Gesture::SittingLeanForward,
    Gesture::SittingLeanBackward, Gesture::Walking};

constexpr std::string_view to_string(Gesture g) {
  switch (g) {
    case Gesture::Standing: return "standing";
    case Gesture::SittingUpright: return "sitting_upright";
    case Gesture::SittingLeanForward: return "sitting_lean_forward";
    case Gesture::SittingLeanBackward: return "sitting_lean_backward";
    case Gesture::Walking: return "walking";
  }
  return "standing";
}

inline std::optional<Gesture> parse_gesture(std::string_view name) {
  for (Gesture g : kAllGestures)
    if (to_string(g) == name) return g;
  return std::nullopt;
}

using UserId = int;
/// Registered users are numbered from 1; 0 marks an impostor, matching the
/// "0 = illegitimate" convention of the authentication confusion matrix.
inline constexpr UserId kImpostor = 0;

struct VibrationRecording {
  int sample_rate_hz = 2000;
  std::array<std::vector<double>, 3> axes;
  std::optional<Gesture> gesture;
  std::optional<UserId> user;

  std::size_t size() const { return axes[0].size(); }

  void validate() const {
    if (sample_rate_hz <= 0) fail(ErrorCode::InvalidArgument, "sample rate must be positive");
    if (axes[0].empty()) fail(ErrorCode::EmptyInput, "recording has no samples");
    if (axes[1].size() != axes[0].size() || axes[2].size() != axes[0].size())
      fail(ErrorCode::ShapeMismatch, "axis lengths differ");
  }

  bool operator==(const VibrationRecording&) const = default;
};

struct BurstSegment {
  std::size_t start_index = 0;
  std::size_t end_index = 0;

  std::size_t length() const { return end_index - start_index; }
  double duration_ms(int sample_rate_hz) const {
    return 1000.0 * static_cast<double>(length()) / sample_rate_hz;
  }
};

struct PrimitiveFeature {
  static constexpr std::size_t kColumns = 40;
  std::array<Matrix, 3> channels;
  double duration_ms = 0.0;
};

namespace detail {

inline std::size_t ms_to_samples(double ms, int sample_rate_hz) {
  return static_cast<std::size_t>(std::llround(ms * sample_rate_hz / 1000.0));
}

inline double population_variance(std::span<const double> xs) {
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double acc = 0.0;
  for (double x : xs) acc += (x - mean) * (x - mean);
  return acc / static_cast<double>(xs.size());
}

}  // namespace detail

struct BurstDetectorConfig {
  double window_ms = 50.0;
  double step_ms = 5.0;
  double ratio_threshold = 5.0;
  std::size_t baseline_windows = 10;
};

/// Short-time variance of the acceleration magnitude, one value per window.
inline std::vector<double> short_time_variance(const VibrationRecording& rec,
                                               const BurstDetectorConfig& cfg = {}) {
  rec.validate();
  const std::size_t win = detail::ms_to_samples(cfg.window_ms, rec.sample_rate_hz);
  const std::size_t step = detail::ms_to_samples(cfg.step_ms, rec.sample_rate_hz);
  if (win == 0 || step == 0) fail(ErrorCode::InvalidArgument, "window and step must span >= 1 sample");
  const std::size_t n = rec.size();
  if (n < win + step) fail(ErrorCode::RecordingTooShort, "fewer than two analysis windows fit");

  std::vector<double> magnitude(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = rec.axes[0][i], y = rec.axes[1][i], z = rec.axes[2][i];
    magnitude[i] = std::sqrt(x * x + y * y + z * z);
  }
  const std::size_t count = (n - win) / step + 1;
  std::vector<double> out(count);
  for (std::size_t k = 0; k < count; ++k)
    out[k] = detail::population_variance(std::span<const double>(magnitude).subspan(k * step, win));
  return out;
}

/// Locates the vibration impulse as the longest run of windows whose variance
/// exceeds `ratio_threshold` times the median variance of the leading windows.
/// The start is taken at the end of the first rising window minus one step
/// (the onset lies in that last step); the end at the end of the last window.
inline BurstSegment detect_burst(const VibrationRecording& rec, const BurstDetectorConfig& cfg = {}) {
  const auto var = short_time_variance(rec, cfg);
  const std::size_t win = detail::ms_to_samples(cfg.window_ms, rec.sample_rate_hz);
  const std::size_t step = detail::ms_to_samples(cfg.step_ms, rec.sample_rate_hz);

  std::vector<double> lead(var.begin(), var.begin() + std::min(cfg.baseline_windows, var.size()));
  std::sort(lead.begin(), lead.end());
  const std::size_t m = lead.size();
  const double baseline = (m % 2 == 1) ? lead[m / 2] : 0.5 * (lead[m / 2 - 1] + lead[m / 2]);
  const double threshold = cfg.ratio_threshold * baseline;

  std::size_t best_start = 0, best_len = 0;
  for (std::size_t k = 0; k < var.size();) {
    if (!(var[k] > threshold)) {
      ++k;
      continue;
    }
    std::size_t j = k;
    while (j < var.size() && var[j] > threshold) ++j;
    if (j - k > best_len) {
      best_len = j - k;
      best_start = k;
    }
    k = j;
  }
  if (best_len == 0) fail(ErrorCode::NoBurstFound, "no window exceeds the variance threshold");

  const std::size_t first = best_start, last = best_start + best_len - 1;
  BurstSegment seg;
  seg.start_index = first * step + win - step;
  seg.end_index = std::min(rec.size(), last * step + win);
  if (seg.end_index <= seg.start_index) seg.end_index = std::min(rec.size(), seg.start_index + step);
  return seg;
}

/// First `duration_ms` of the segment on every axis.
inline VibrationRecording clip_sample(const VibrationRecording& rec, const BurstSegment& seg,
                                      double duration_ms) {
  rec.validate();
  if (!(duration_ms > 0.0)) fail(ErrorCode::InvalidArgument, "clip duration must be positive");
  if (seg.start_index >= seg.end_index || seg.end_index > rec.size())
    fail(ErrorCode::InvalidArgument, "segment outside recording");
  const std::size_t n = detail::ms_to_samples(duration_ms, rec.sample_rate_hz);
  if (seg.length() < n)
    fail(ErrorCode::SegmentTooShort, "segment has " + std::to_string(seg.length()) +
                                         " samples, clip needs " + std::to_string(n));
  VibrationRecording out;
  out.sample_rate_hz = rec.sample_rate_hz;
  out.gesture = rec.gesture;
  out.user = rec.user;
  for (std::size_t a = 0; a < 3; ++a) {
    const auto first = rec.axes[a].begin() + static_cast<std::ptrdiff_t>(seg.start_index);
    out.axes[a].assign(first, first + static_cast<std::ptrdiff_t>(n));
  }
  return out;
}

/// Row-major reshape of each axis into rows of 40 samples; a trailing partial
/// row is dropped.
inline PrimitiveFeature to_primitive_feature(const VibrationRecording& clipped) {
  clipped.validate();
  constexpr std::size_t cols = PrimitiveFeature::kColumns;
  const std::size_t n = clipped.size();
  if (n < cols) fail(ErrorCode::EmptyInput, "need at least 40 samples per axis");
  const std::size_t rows = n / cols;
  PrimitiveFeature f;
  f.duration_ms = 1000.0 * static_cast<double>(n) / clipped.sample_rate_hz;
  for (std::size_t a = 0; a < 3; ++a) {
    f.channels[a] = Matrix(rows, cols);
    std::copy_n(clipped.axes[a].begin(), rows * cols, f.channels[a].values.begin());
  }
  return f;
}

// ---------------------------------------------------------------------------
// Recording CSV
//
//   sample_rate_hz,2000
//   x,y,z            (one row per sample, 9 significant digits)
//   gesture,<name>   (optional)
//   user,<id|impostor>  (optional)

inline std::string format_number(double v) {
  std::array<char, 32> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v, std::chars_format::general, 9);
  return std::string(buf.data(), ptr);
}

inline double parse_number(std::string_view s, const std::string& context) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    fail(ErrorCode::ParseError, context + ": bad number '" + std::string(s) + "'");
  return v;
}

inline void write_recording_csv(std::ostream& os, const VibrationRecording& rec) {
  rec.validate();
  os << "sample_rate_hz," << rec.sample_rate_hz << '\n';
  for (std::size_t i = 0; i < rec.size(); ++i)
    os << format_number(rec.axes[0][i]) << ',' << format_number(rec.axes[1][i]) << ','
       << format_number(rec.axes[2][i]) << '\n';
  if (rec.gesture) os << "gesture," << to_string(*rec.gesture) << '\n';
  if (rec.user) {
    if (*rec.user == kImpostor)
      os << "user,impostor\n";
    else
      os << "user," << *rec.user << '\n';
  }
}

inline VibrationRecording read_recording_csv(std::istream& is, const std::string& name = "<stream>") {
  VibrationRecording rec;
  std::string line;
  std::size_t lineno = 0;
  auto where = [&] { return name + ":" + std::to_string(lineno); };
  if (!std::getline(is, line)) fail(ErrorCode::ParseError, name + ": empty file");
  ++lineno;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (!line.starts_with("sample_rate_hz,")) fail(ErrorCode::ParseError, where() + ": missing sample_rate_hz header");
  {
    const std::string_view v = std::string_view(line).substr(15);
    int sr = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), sr);
    if (ec != std::errc() || ptr != v.data() + v.size() || sr <= 0)
      fail(ErrorCode::ParseError, where() + ": bad sample rate");
    rec.sample_rate_hz = sr;
  }
  bool in_metadata = false;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.starts_with("gesture,")) {
      auto g = parse_gesture(std::string_view(line).substr(8));
      if (!g) fail(ErrorCode::ParseError, where() + ": unknown gesture");
      rec.gesture = g;
      in_metadata = true;
      continue;
    }
    if (line.starts_with("user,")) {
      const std::string_view v = std::string_view(line).substr(5);
      if (v == "impostor") {
        rec.user = kImpostor;
      } else {
        int id = 0;
        auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), id);
        if (ec != std::errc() || ptr != v.data() + v.size() || id <= 0)
          fail(ErrorCode::ParseError, where() + ": bad user id");
        rec.user = id;
      }
      in_metadata = true;
      continue;
    }
    if (in_metadata) fail(ErrorCode::ParseError, where() + ": sample row after metadata");
    const auto c1 = line.find(',');
    const auto c2 = c1 == std::string::npos ? c1 : line.find(',', c1 + 1);
    if (c2 == std::string::npos || line.find(',', c2 + 1) != std::string::npos)
      fail(ErrorCode::ParseError, where() + ": expected x,y,z");
    const std::string_view sv(line);
    rec.axes[0].push_back(parse_number(sv.substr(0, c1), where()));
    rec.axes[1].push_back(parse_number(sv.substr(c1 + 1, c2 - c1 - 1), where()));
    rec.axes[2].push_back(parse_number(sv.substr(c2 + 1), where()));
  }
  if (rec.axes[0].empty()) fail(ErrorCode::ParseError, name + ": no samples");
  return rec;
}

inline void save_recording(const std::string& path, const VibrationRecording& rec) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorCode::IoError, "cannot write " + path);
  write_recording_csv(os, rec);
  if (!os) fail(ErrorCode::IoError, "write failed: " + path);
}

inline VibrationRecording load_recording(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorCode::IoError, "cannot open " + path);
  return read_recording_csv(is, path);
}

}  // namespace vibhead
