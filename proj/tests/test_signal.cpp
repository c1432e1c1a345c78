#include <gtest/gtest.h>

#include <sstream>

#include "vibhead/signal.hpp"
#include "vibhead/synth.hpp"

using namespace vibhead;

namespace {

VibrationRecording constant_recording(std::size_t n, double value = 0.0) {
  VibrationRecording r;
  for (auto& a : r.axes) a.assign(n, value);
  return r;
}

VibrationRecording ramp_recording(std::size_t n) {
  VibrationRecording r;
  for (std::size_t a = 0; a < 3; ++a) {
    r.axes[a].resize(n);
    for (std::size_t i = 0; i < n; ++i) r.axes[a][i] = static_cast<double>(a * 100000 + i);
  }
  return r;
}

/// Burst of `burst` samples after `lead` samples of noise, `tail` after.
VibrationRecording injected(std::size_t lead, std::size_t burst, std::size_t tail, std::uint64_t seed) {
  const auto profile = synth::make_user(seed);
  return synth::generate_recording(profile, Gesture::Standing, seed * 31 + 7, {lead, burst, tail});
}

void expect_error(ErrorCode code, const auto& fn) {
  try {
    fn();
    ADD_FAILURE() << "expected " << to_string(code);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

}  // namespace

TEST(DetectBurst, ZeroSignalHasNoBurst) {
  expect_error(ErrorCode::NoBurstFound, [] { detect_burst(constant_recording(6000)); });
}

TEST(DetectBurst, LocatesInjectedBurst) {
  const auto rec = injected(2000, 2000, 2000, 3);
  const auto seg = detect_burst(rec);
  EXPECT_NEAR(static_cast<double>(seg.start_index), 2000.0, 20.0);
  // High-Q sections ring on after the drive stops.
  EXPECT_GE(seg.end_index, 3980u);
  EXPECT_LE(seg.end_index, 4300u);
}

TEST(DetectBurst, ShortRecordingRejected) {
  expect_error(ErrorCode::RecordingTooShort, [] { detect_burst(constant_recording(99, 1.0)); });
}

TEST(DetectBurst, ShiftMovesStartByShiftWithinOneStep) {
  const auto base = detect_burst(injected(1500, 2000, 1500, 9)).start_index;
  for (std::size_t k : {1u, 7u, 13u, 40u, 333u}) {
    const auto moved = detect_burst(injected(1500 + k, 2000, 1500, 9)).start_index;
    EXPECT_NEAR(static_cast<double>(moved), static_cast<double>(base + k), 10.0) << "shift " << k;
  }
}

TEST(DetectBurst, LongestRunWinsAndTiesGoEarliest) {
  // Two bursts: a short one first, then a long one. The magnitude must vary,
  // so the bursts toggle between 0 and 1 rather than +-1.
  VibrationRecording r = constant_recording(8000);
  CounterRng noise(5, 1);
  for (auto& a : r.axes)
    for (double& v : a) v = 0.001 * noise.normal();
  auto burst = [&](std::size_t from, std::size_t len) {
    for (std::size_t i = from; i < from + len; ++i) r.axes[0][i] += (i % 2 ? 1.0 : 0.0);
  };
  burst(1000, 600);
  burst(3000, 2000);
  EXPECT_NEAR(static_cast<double>(detect_burst(r).start_index), 3000.0, 10.0);

  VibrationRecording tie = constant_recording(8000);
  for (auto& a : tie.axes)
    for (double& v : a) v = 0.001 * noise.normal();
  r = tie;
  burst(1000, 1000);
  burst(4000, 1000);
  EXPECT_NEAR(static_cast<double>(detect_burst(r).start_index), 1000.0, 10.0);
}

TEST(ClipSample, TakesPrefixOfRequestedLength) {
  const auto rec = ramp_recording(4000);
  const BurstSegment seg{500, 2500};
  const auto clip = clip_sample(rec, seg, 400);
  ASSERT_EQ(clip.size(), 800u);
  EXPECT_EQ(clip.axes[1][0], rec.axes[1][500]);
  EXPECT_EQ(clip.axes[2][799], rec.axes[2][1299]);
}

TEST(ClipSample, FullLengthIsIdentity) {
  const auto rec = ramp_recording(4000);
  const auto clip = clip_sample(rec, {1000, 3000}, 1000);
  for (std::size_t a = 0; a < 3; ++a)
    EXPECT_EQ(clip.axes[a], std::vector<double>(rec.axes[a].begin() + 1000, rec.axes[a].begin() + 3000));
}

TEST(ClipSample, SegmentShorterThanClip) {
  const auto rec = ramp_recording(4000);
  expect_error(ErrorCode::SegmentTooShort, [&] { clip_sample(rec, {0, 1200}, 800); });
}

TEST(ClipSample, LengthLaw) {
  const auto rec = ramp_recording(5000);
  for (double t : {1.0, 5.0, 100.0, 400.0, 600.0, 800.0, 1000.0, 2000.0})
    EXPECT_EQ(clip_sample(rec, {100, 4100}, t).size(), static_cast<std::size_t>(t * 2000 / 1000));
}

TEST(PrimitiveFeature, ShapesFollowFortyColumnLayout) {
  EXPECT_EQ(to_primitive_feature(ramp_recording(2000)).channels[0].rows, 50u);
  EXPECT_EQ(to_primitive_feature(ramp_recording(800)).channels[2].rows, 20u);
  const auto f = to_primitive_feature(ramp_recording(2010));
  for (const auto& m : f.channels) {
    EXPECT_EQ(m.rows, 50u);
    EXPECT_EQ(m.cols, 40u);
  }
  EXPECT_DOUBLE_EQ(to_primitive_feature(ramp_recording(2000)).duration_ms, 1000.0);
}

TEST(PrimitiveFeature, RowMajorPrefixIsLossless) {
  for (std::size_t n : {40u, 79u, 800u, 2010u, 4321u}) {
    const auto rec = ramp_recording(n);
    const auto f = to_primitive_feature(rec);
    for (std::size_t a = 0; a < 3; ++a) {
      const std::size_t kept = f.channels[a].rows * 40;
      EXPECT_EQ(kept, n / 40 * 40);
      EXPECT_EQ(f.channels[a].values, std::vector<double>(rec.axes[a].begin(), rec.axes[a].begin() + kept));
    }
  }
}

TEST(PrimitiveFeature, FewerThanOneRow) {
  expect_error(ErrorCode::EmptyInput, [] { to_primitive_feature(ramp_recording(39)); });
}

TEST(RecordingCsv, RoundTripsAtNineDigits) {
  auto rec = injected(300, 500, 300, 4);
  rec.user = 7;
  std::stringstream first;
  write_recording_csv(first, rec);
  const auto back = read_recording_csv(first, "mem");
  EXPECT_EQ(back.user, std::optional<UserId>(7));
  EXPECT_EQ(back.gesture, std::optional<Gesture>(Gesture::Standing));
  ASSERT_EQ(back.size(), rec.size());
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t i = 0; i < rec.size(); ++i)
      EXPECT_NEAR(back.axes[a][i], rec.axes[a][i], 5e-9 * std::max(1.0, std::abs(rec.axes[a][i])));
  std::stringstream second;
  write_recording_csv(second, back);
  EXPECT_EQ(second.str(), first.str());
}

TEST(RecordingCsv, ImpostorLabel) {
  auto rec = ramp_recording(50);
  rec.user = kImpostor;
  std::stringstream s;
  write_recording_csv(s, rec);
  EXPECT_NE(s.str().find("user,impostor"), std::string::npos);
  EXPECT_EQ(read_recording_csv(s).user, std::optional<UserId>(kImpostor));
}

TEST(RecordingCsv, ParseErrorNamesFileAndLine) {
  std::stringstream s("sample_rate_hz,2000\n1,2,3\n4,oops,6\n");
  try {
    read_recording_csv(s, "bad.csv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ParseError);
    EXPECT_NE(std::string(e.what()).find("bad.csv:3"), std::string::npos) << e.what();
  }
  std::stringstream header("rate,2000\n1,2,3\n");
  expect_error(ErrorCode::ParseError, [&] { read_recording_csv(header, "h.csv"); });
  std::stringstream cols("sample_rate_hz,2000\n1,2\n");
  expect_error(ErrorCode::ParseError, [&] { read_recording_csv(cols, "c.csv"); });
}
