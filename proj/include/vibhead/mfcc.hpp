#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <ostream>
#include <span>
#include <vector>

#include "vibhead/error.hpp"
#include "vibhead/matrix.hpp"
#include "vibhead/signal.hpp"

namespace vibhead {

struct MfccConfig {
  double frame_ms = 25.0;
  double hop_ms = 10.0;
  std::size_t n_filterbanks = 40;
  std::size_t n_cepstra = 12;
  bool include_energy = true;
  std::size_t delta_window = 2;
  double fmin_hz = 0.0;
  double fmax_hz = 0.0;  // <= 0 means Nyquist
  double log_floor = 1e-10;

  double upper_hz(int sample_rate_hz) const { return fmax_hz > 0.0 ? fmax_hz : 0.5 * sample_rate_hz; }
  std::size_t statics() const { return n_cepstra + (include_energy ? 1 : 0); }
  std::size_t columns() const { return 3 * statics(); }

  void validate(int sample_rate_hz) const {
    if (!(hop_ms > 0.0) || !(frame_ms > hop_ms)) fail(ErrorCode::InvalidArgument, "need frame_ms > hop_ms > 0");
    if (n_cepstra == 0 || n_cepstra >= n_filterbanks) fail(ErrorCode::InvalidArgument, "need 0 < n_cepstra < n_filterbanks");
    if (delta_window == 0) fail(ErrorCode::InvalidArgument, "delta window must be >= 1");
    if (upper_hz(sample_rate_hz) > 0.5 * sample_rate_hz + 1e-9) fail(ErrorCode::BadRange, "fmax above Nyquist");
    if (fmin_hz < 0.0 || fmin_hz >= upper_hz(sample_rate_hz)) fail(ErrorCode::BadRange, "need 0 <= fmin < fmax");
  }
};

/// Per-axis matrices of n_frames x 39: [c1..c12, logE, deltas, delta-deltas].
struct MfccFeature {
  std::array<Matrix, 3> channels;
};

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

inline std::size_t frame_length(const MfccConfig& cfg, int sample_rate_hz) {
  return detail::ms_to_samples(cfg.frame_ms, sample_rate_hz);
}
inline std::size_t hop_length(const MfccConfig& cfg, int sample_rate_hz) {
  return detail::ms_to_samples(cfg.hop_ms, sample_rate_hz);
}
inline std::size_t fft_size(std::size_t frame_len) {
  std::size_t n = 1;
  while (n < frame_len) n <<= 1;
  return n;
}

inline std::size_t frame_count(std::size_t n_samples, std::size_t frame_len, std::size_t hop) {
  if (n_samples < frame_len) fail(ErrorCode::InputTooShort, "signal shorter than one frame");
  return (n_samples - frame_len) / hop + 1;
}

inline std::vector<double> hamming_window(std::size_t n) {
  std::vector<double> w(n, 1.0);
  if (n == 1) return w;
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n - 1));
  return w;
}

/// Hamming-windowed frames, one row per frame.
inline Matrix frame_signal(std::span<const double> samples, const MfccConfig& cfg, int sample_rate_hz) {
  cfg.validate(sample_rate_hz);
  const std::size_t len = frame_length(cfg, sample_rate_hz);
  const std::size_t hop = hop_length(cfg, sample_rate_hz);
  const std::size_t count = frame_count(samples.size(), len, hop);
  const auto window = hamming_window(len);
  Matrix frames(count, len);
  for (std::size_t f = 0; f < count; ++f)
    for (std::size_t i = 0; i < len; ++i) frames(f, i) = samples[f * hop + i] * window[i];
  return frames;
}

/// In-place iterative radix-2 transform; size must be a power of two.
inline void fft_inplace(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> w(std::cos(ang * static_cast<double>(k)), std::sin(ang * static_cast<double>(k)));
        const auto u = a[i + k];
        const auto v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
      }
    }
  }
}

/// |X_k|^2 for k = 0..n_fft/2 of a zero-padded frame.
inline std::vector<double> power_spectrum(std::span<const double> frame, std::size_t n_fft) {
  std::vector<std::complex<double>> buf(n_fft);
  for (std::size_t i = 0; i < frame.size() && i < n_fft; ++i) buf[i] = frame[i];
  fft_inplace(buf);
  std::vector<double> p(n_fft / 2 + 1);
  for (std::size_t k = 0; k < p.size(); ++k) p[k] = std::norm(buf[k]);
  return p;
}

struct MelFilterbank {
  std::vector<double> lower_hz, center_hz, upper_hz;
  Matrix weights;  // filters x bins
};

namespace detail {

// Exact integral of a triangle (l, c, u) over [a, b].
inline double triangle_integral(double l, double c, double u, double a, double b) {
  auto tri = [&](double f) {
    if (f <= l || f >= u) return 0.0;
    return f <= c ? (f - l) / (c - l) : (u - f) / (u - c);
  };
  std::array<double, 5> pts = {a, l, c, u, b};
  std::sort(pts.begin() + 1, pts.begin() + 4);
  double acc = 0.0;
  double prev = a;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double x = std::clamp(pts[i], a, b);
    if (x > prev) acc += 0.5 * (tri(prev) + tri(x)) * (x - prev);
    prev = std::max(prev, x);
  }
  return acc;
}

}  // namespace detail

/// Triangular filters with peaks equally spaced on the HTK mel scale. Each
/// bin's weight is the triangle's mean over that bin's frequency cell, so
/// filters narrower than one bin still receive energy.
inline MelFilterbank mel_filterbank(int sample_rate_hz, std::size_t n_fft, const MfccConfig& cfg) {
  const double fmax = cfg.upper_hz(sample_rate_hz);
  if (!(cfg.fmin_hz < fmax)) fail(ErrorCode::BadRange, "fmin must be below fmax");
  if (fmax > 0.5 * sample_rate_hz + 1e-9) fail(ErrorCode::BadRange, "fmax above Nyquist");
  if (n_fft < frame_length(cfg, sample_rate_hz)) fail(ErrorCode::InvalidArgument, "n_fft shorter than frame");
  const std::size_t m = cfg.n_filterbanks;
  const double mel_lo = hz_to_mel(cfg.fmin_hz), mel_hi = hz_to_mel(fmax);
  std::vector<double> edges(m + 2);
  for (std::size_t i = 0; i < m + 2; ++i)
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / static_cast<double>(m + 1));

  MelFilterbank fb;
  const std::size_t bins = n_fft / 2 + 1;
  const double df = static_cast<double>(sample_rate_hz) / static_cast<double>(n_fft);
  fb.weights = Matrix(m, bins);
  for (std::size_t j = 0; j < m; ++j) {
    fb.lower_hz.push_back(edges[j]);
    fb.center_hz.push_back(edges[j + 1]);
    fb.upper_hz.push_back(edges[j + 2]);
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = df * static_cast<double>(k);
      const double a = std::max(0.0, f - 0.5 * df), b = std::min(0.5 * sample_rate_hz, f + 0.5 * df);
      if (b > a) fb.weights(j, k) = detail::triangle_integral(edges[j], edges[j + 1], edges[j + 2], a, b) / (b - a);
    }
  }
  return fb;
}

/// Log filterbank energies of one windowed frame (natural log, floored).
inline std::vector<double> log_mel_energies(std::span<const double> frame, const MelFilterbank& fb,
                                            std::size_t n_fft, double floor) {
  const auto p = power_spectrum(frame, n_fft);
  std::vector<double> e(fb.weights.rows);
  for (std::size_t j = 0; j < e.size(); ++j) {
    double acc = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) acc += fb.weights(j, k) * p[k];
    e[j] = std::log(std::max(acc, floor));
  }
  return e;
}

/// Orthonormal DCT-II coefficient k of `x`.
inline double dct2(std::span<const double> x, std::size_t k) {
  const double n = static_cast<double>(x.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    acc += x[i] * std::cos(std::numbers::pi * static_cast<double>(k) * (static_cast<double>(i) + 0.5) / n);
  return acc * std::sqrt((k == 0 ? 1.0 : 2.0) / n);
}

/// Regression deltas over a window of +-M frames with edge frames replicated.
inline Matrix regression_deltas(const Matrix& statics, std::size_t window) {
  Matrix out(statics.rows, statics.cols);
  double denom = 0.0;
  for (std::size_t m = 1; m <= window; ++m) denom += static_cast<double>(m * m);
  denom *= 2.0;
  const auto last = static_cast<std::ptrdiff_t>(statics.rows) - 1;
  for (std::size_t t = 0; t < statics.rows; ++t) {
    for (std::size_t m = 1; m <= window; ++m) {
      const auto ti = static_cast<std::ptrdiff_t>(t);
      const auto mi = static_cast<std::ptrdiff_t>(m);
      const auto fwd = static_cast<std::size_t>(std::min(ti + mi, last));
      const auto bwd = static_cast<std::size_t>(std::max<std::ptrdiff_t>(ti - mi, 0));
      for (std::size_t c = 0; c < statics.cols; ++c)
        out(t, c) += static_cast<double>(m) * (statics(fwd, c) - statics(bwd, c));
    }
    for (std::size_t c = 0; c < statics.cols; ++c) out(t, c) /= denom;
  }
  return out;
}

/// Static coefficients per frame: c1..c_n then (optionally) log frame energy.
inline Matrix mfcc_statics(std::span<const double> samples, const MfccConfig& cfg, int sample_rate_hz) {
  const Matrix frames = frame_signal(samples, cfg, sample_rate_hz);
  const std::size_t n_fft = fft_size(frames.cols);
  const auto fb = mel_filterbank(sample_rate_hz, n_fft, cfg);
  Matrix statics(frames.rows, cfg.statics());
  for (std::size_t t = 0; t < frames.rows; ++t) {
    const auto frame = frames.row(t);
    const auto loge = log_mel_energies(frame, fb, n_fft, cfg.log_floor);
    for (std::size_t k = 1; k <= cfg.n_cepstra; ++k) statics(t, k - 1) = dct2(loge, k);
    if (cfg.include_energy) {
      double energy = 0.0;
      for (double v : frame) energy += v * v;
      statics(t, cfg.n_cepstra) = std::log(std::max(energy, cfg.log_floor));
    }
  }
  return statics;
}

inline Matrix mfcc_axis(std::span<const double> samples, const MfccConfig& cfg, int sample_rate_hz) {
  const Matrix statics = mfcc_statics(samples, cfg, sample_rate_hz);
  const Matrix d1 = regression_deltas(statics, cfg.delta_window);
  const Matrix d2 = regression_deltas(d1, cfg.delta_window);
  const std::size_t s = statics.cols;
  Matrix out(statics.rows, 3 * s);
  for (std::size_t t = 0; t < statics.rows; ++t)
    for (std::size_t c = 0; c < s; ++c) {
      out(t, c) = statics(t, c);
      out(t, s + c) = d1(t, c);
      out(t, 2 * s + c) = d2(t, c);
    }
  return out;
}

inline MfccFeature compute_mfcc(const VibrationRecording& clipped, const MfccConfig& cfg = {}) {
  clipped.validate();
  MfccFeature f;
  for (std::size_t a = 0; a < 3; ++a) f.channels[a] = mfcc_axis(clipped.axes[a], cfg, clipped.sample_rate_hz);
  return f;
}

/// One row per frame, comma separated, 9 significant digits.
inline void write_feature_csv(std::ostream& os, const Matrix& m) {
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t c = 0; c < m.cols; ++c) {
      if (c) os << ',';
      os << format_number(m(r, c));
    }
    os << '\n';
  }
}

}  // namespace vibhead
