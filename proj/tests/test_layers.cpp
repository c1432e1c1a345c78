#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "support.hpp"
#include "vibhead/layers.hpp"

using namespace vibhead;
using namespace vibhead::nn;
using vibhead::testing::random_tensor;
using vibhead::testing::randomize;

namespace {

// Direct same-padded 3x3 convolution, six nested loops.
Tensor4 conv_reference(const Tensor4& x, const ConvParams& p) {
  const Shape4 s = x.shape();
  Tensor4 y(s.n, p.out_channels, s.h, s.w);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t o = 0; o < p.out_channels; ++o)
      for (std::size_t r = 0; r < s.h; ++r)
        for (std::size_t c = 0; c < s.w; ++c) {
          double acc = p.bias[o];
          for (std::size_t i = 0; i < s.c; ++i)
            for (std::size_t ky = 0; ky < 3; ++ky)
              for (std::size_t kx = 0; kx < 3; ++kx) {
                const auto yy = static_cast<std::ptrdiff_t>(r + ky) - 1;
                const auto xx = static_cast<std::ptrdiff_t>(c + kx) - 1;
                if (yy < 0 || xx < 0 || yy >= static_cast<std::ptrdiff_t>(s.h) || xx >= static_cast<std::ptrdiff_t>(s.w))
                  continue;
                acc += p.kernel[((o * s.c + i) * 3 + ky) * 3 + kx] *
                       x.at(n, i, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
              }
          y.at(n, o, r, c) = acc;
        }
  return y;
}

}  // namespace

TEST(Conv, ZeroInputZeroBias) {
  CounterRng rng(1, 0);
  ConvParams p(2, 3);
  randomize(p.kernel, rng);
  const auto y = conv2d_forward(Tensor4(2, 2, 4, 5), p);
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(Conv, CenterTapIsIdentity) {
  CounterRng rng(2, 0);
  ConvParams p(1, 1);
  p.kernel[4] = 1.0;
  const auto x = random_tensor({2, 1, 6, 7}, rng);
  EXPECT_EQ(conv2d_forward(x, p), x);
}

TEST(Conv, MatchesNestedLoopReference) {
  CounterRng rng(3, 0);
  ConvParams p(2, 4);
  randomize(p.kernel, rng);
  randomize(p.bias, rng);
  const auto x = random_tensor({1, 2, 5, 4}, rng);
  const auto fast = conv2d_forward(x, p);
  const auto slow = conv_reference(x, p);
  for (std::size_t i = 0; i < fast.size(); ++i) EXPECT_NEAR(fast[i], slow[i], 1e-12);

  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 1 + rng.uniform_int(0, 2), c = 1 + rng.uniform_int(0, 3), o = 1 + rng.uniform_int(0, 4);
    const std::size_t h = 1 + rng.uniform_int(0, 7), w = 1 + rng.uniform_int(0, 7);
    ConvParams q(c, o);
    randomize(q.kernel, rng);
    randomize(q.bias, rng);
    const auto xi = random_tensor({n, c, h, w}, rng);
    const auto a = conv2d_forward(xi, q), b = conv_reference(xi, q);
    for (std::size_t i = 0; i < a.size(); ++i) ASSERT_NEAR(a[i], b[i], 1e-12);
  }
}

TEST(Conv, BackwardZeroAndBiasCases) {
  CounterRng rng(4, 0);
  ConvParams p(2, 3);
  randomize(p.kernel, rng);
  const auto x = random_tensor({2, 2, 4, 4}, rng);
  const auto g0 = conv2d_backward(Tensor4(2, 3, 4, 4), x, p);
  for (double v : g0.input.values()) EXPECT_EQ(v, 0.0);
  for (double v : g0.kernel) EXPECT_EQ(v, 0.0);
  for (double v : g0.bias) EXPECT_EQ(v, 0.0);

  Tensor4 single(2, 3, 4, 4);
  single.at(1, 2, 3, 0) = 1.0;
  const auto g1 = conv2d_backward(single, x, p);
  EXPECT_EQ(g1.bias[2], 1.0);
  EXPECT_EQ(g1.bias[0], 0.0);
  EXPECT_EQ(g1.bias[1], 0.0);
}

TEST(Relu, Cases) {
  Tensor4 neg(1, 2, 3, 3, -0.5);
  const auto cleared = relu_forward(neg);
  for (double v : cleared.values()) EXPECT_EQ(v, 0.0);
  CounterRng rng(5, 0);
  const auto pos = random_tensor({2, 2, 3, 3}, rng, 0.0, 2.0);
  EXPECT_EQ(relu_forward(pos), pos);
  Tensor4 zero(1, 1, 1, 2);
  zero[1] = 1.0;
  const auto g = relu_backward(Tensor4(1, 1, 1, 2, 1.0), zero);
  EXPECT_EQ(g[0], 0.0);
  EXPECT_EQ(g[1], 1.0);
}

TEST(BatchNorm, TrainModeNormalizesPerChannel) {
  CounterRng rng(6, 0);
  for (int trial = 0; trial < 10; ++trial) {
    const Shape4 s{2 + static_cast<std::size_t>(rng.uniform_int(0, 6)), 1 + static_cast<std::size_t>(rng.uniform_int(0, 4)),
                   1 + static_cast<std::size_t>(rng.uniform_int(0, 5)), 1 + static_cast<std::size_t>(rng.uniform_int(0, 5))};
    auto x = random_tensor(s, rng, -12.0, 8.0);
    BatchNormParams p(s.c);
    const auto y = batchnorm_forward(x, p, Mode::Train);
    const double count = static_cast<double>(s.n * s.plane());
    auto moments = [&](const Tensor4& t, std::size_t c) {
      double mean = 0.0, var = 0.0;
      for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t i = 0; i < s.plane(); ++i) mean += t.plane(n, c)[i] / count;
      for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t i = 0; i < s.plane(); ++i) var += (t.plane(n, c)[i] - mean) * (t.plane(n, c)[i] - mean) / count;
      return std::pair{mean, var};
    };
    for (std::size_t c = 0; c < s.c; ++c) {
      const auto [in_mean, in_var] = moments(x, c);
      const auto [mean, var] = moments(y, c);
      EXPECT_LT(std::abs(mean), 1e-9);
      EXPECT_NEAR(var, 1.0, 1e-6) << s.str();
      // Exactly var / (var + eps) since the divisor is sqrt(var + eps).
      EXPECT_NEAR(var, in_var / (in_var + p.eps), 1e-12);
    }
  }
}

TEST(BatchNorm, ZeroGammaGivesBeta) {
  CounterRng rng(7, 0);
  BatchNormParams p(3);
  std::fill(p.gamma.begin(), p.gamma.end(), 0.0);
  const auto x = random_tensor({4, 3, 2, 2}, rng);
  const auto train = batchnorm_forward(x, p, Mode::Train);
  const auto infer = batchnorm_forward(x, p, Mode::Infer);
  for (double v : train.values()) EXPECT_EQ(v, 0.0);
  for (double v : infer.values()) EXPECT_EQ(v, 0.0);
}

TEST(BatchNorm, InferMatchesScalarFormula) {
  CounterRng rng(8, 0);
  BatchNormParams p(3);
  randomize(p.gamma, rng);
  randomize(p.beta, rng);
  randomize(p.running_mean, rng);
  randomize(p.running_var, rng, 0.2, 3.0);
  const auto x = random_tensor({2, 3, 4, 3}, rng);
  const auto y = batchnorm_forward(x, p, Mode::Infer);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < 12; ++i) {
        const double ref = (x.plane(n, c)[i] - p.running_mean[c]) / std::sqrt(p.running_var[c] + p.eps) * p.gamma[c] + p.beta[c];
        EXPECT_NEAR(y.plane(n, c)[i], ref, 1e-12);
      }
}

TEST(BatchNorm, RunningStatisticsUpdate) {
  CounterRng rng(9, 0);
  BatchNormParams p(1);
  const auto x = random_tensor({4, 1, 2, 2}, rng);
  double mean = 0.0, ss = 0.0;
  for (double v : x.values()) mean += v / 16.0;
  for (double v : x.values()) ss += (v - mean) * (v - mean);
  batchnorm_forward(x, p, Mode::Train);
  EXPECT_NEAR(p.running_mean[0], 0.1 * mean, 1e-15);
  EXPECT_NEAR(p.running_var[0], 0.9 + 0.1 * ss / 15.0, 1e-15);
}

TEST(BatchNorm, SingleValueBatchRejected) {
  BatchNormParams p(2);
  try {
    batchnorm_forward(Tensor4(1, 2, 1, 1, 1.0), p, Mode::Train);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateBatch);
  }
}

TEST(MaxPool, ShapesAndConstants) {
  const auto r = maxpool_forward(Tensor4(2, 3, 50, 40, 1.5), {3, 4});
  EXPECT_EQ(r.output.shape(), (Shape4{2, 3, 16, 10}));
  for (double v : r.output.values()) EXPECT_EQ(v, 1.5);
  try {
    maxpool_forward(Tensor4(1, 1, 2, 5), {3, 1});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::KernelTooLarge);
  }
}

TEST(MaxPool, BackwardRoutesOnePerWindow) {
  Tensor4 x(2, 2, 7, 9);
  std::iota(x.values().begin(), x.values().end(), 0.0);
  const auto r = maxpool_forward(x, {2, 3});
  const auto g = maxpool_backward(Tensor4(r.output.shape(), 1.0), r, x.shape());
  const double total = std::accumulate(g.values().begin(), g.values().end(), 0.0);
  EXPECT_EQ(total, static_cast<double>(r.output.size()));
  for (std::size_t i = 0; i < r.output.size(); ++i) EXPECT_EQ(x[r.argmax[i]], r.output[i]);
}

TEST(MaxPool, TiesPickFirst) {
  Tensor4 x(1, 1, 2, 2, 3.0);
  const auto r = maxpool_forward(x, {2, 2});
  EXPECT_EQ(r.argmax[0], 0u);
}

TEST(Concat, JoinsEncoderOutputs) {
  CounterRng rng(10, 0);
  const auto a = random_tensor({32, 128, 2, 1}, rng), b = random_tensor({32, 128, 8, 1}, rng);
  const auto j = concat_spatial(a, b);
  EXPECT_EQ(j.shape(), (Shape4{32, 128, 10, 1}));
  const auto [ra, rb] = split_spatial(j, 2);
  EXPECT_EQ(ra, a);
  EXPECT_EQ(rb, b);
  EXPECT_THROW(Tensor4(Shape4{32, 128, 0, 1}), Error);
  EXPECT_THROW(concat_spatial(a, random_tensor({32, 64, 8, 1}, rng)), Error);
}

TEST(Softmax, UniformAndShiftInvariance) {
  const std::vector<double> zeros(10, 0.0);
  const auto p = softmax(zeros);
  for (double v : p) EXPECT_NEAR(v, 0.1, 1e-15);
  EXPECT_NEAR(cross_entropy_loss(p, 3), std::log(10.0), 1e-12);

  CounterRng rng(11, 0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> z(2 + rng.uniform_int(0, 12));
    randomize(z, rng, -20.0, 20.0);
    const auto q = softmax(z);
    EXPECT_NEAR(std::accumulate(q.begin(), q.end(), 0.0), 1.0, 1e-12);
    const double c = rng.uniform(-500.0, 500.0);
    auto shifted = z;
    for (double& v : shifted) v += c;
    const auto qs = softmax(shifted);
    for (std::size_t i = 0; i < q.size(); ++i) EXPECT_NEAR(qs[i], q[i], 1e-12);
    EXPECT_EQ(std::max_element(q.begin(), q.end()) - q.begin(), std::max_element(z.begin(), z.end()) - z.begin());
  }
}

TEST(Softmax, CrossEntropyOfOneHotIsZero) {
  EXPECT_EQ(cross_entropy_loss(std::vector<double>{0.0, 1.0, 0.0}, 1), 0.0);
  for (std::size_t k = 2; k <= 12; ++k)
    EXPECT_NEAR(cross_entropy_loss(std::vector<double>(k, 1.0 / k), 0), std::log(static_cast<double>(k)), 1e-12);
  EXPECT_THROW(cross_entropy_loss(std::vector<double>{0.5, 0.5}, 2), Error);
}

TEST(Softmax, CombinedGradientIsProbsMinusOneHot) {
  CounterRng rng(12, 0);
  auto logits = random_tensor({4, 6, 1, 1}, rng, -3.0, 3.0);
  const std::vector<std::size_t> labels{0, 5, 2, 2};
  const auto [loss, grad] = softmax_cross_entropy(logits, labels);
  double expected_loss = 0.0;
  for (std::size_t n = 0; n < 4; ++n) {
    const auto p = softmax(logits.values().subspan(n * 6, 6));
    expected_loss += -std::log(p[labels[n]]) / 4.0;
    for (std::size_t k = 0; k < 6; ++k) EXPECT_NEAR(grad[n * 6 + k], (p[k] - (k == labels[n] ? 1.0 : 0.0)) / 4.0, 1e-12);
  }
  EXPECT_NEAR(loss, expected_loss, 1e-12);
}

TEST(Dense, MatchesLoops) {
  CounterRng rng(13, 0);
  DenseParams p(12, 5);
  randomize(p.weight, rng);
  randomize(p.bias, rng);
  const auto x = random_tensor({3, 2, 3, 2}, rng);
  const auto y = dense_forward(x, p);
  for (std::size_t n = 0; n < 3; ++n)
    for (std::size_t k = 0; k < 5; ++k) {
      double acc = p.bias[k];
      for (std::size_t i = 0; i < 12; ++i) acc += p.weight[k * 12 + i] * x[n * 12 + i];
      EXPECT_NEAR(y[n * 5 + k], acc, 1e-12);
    }
}

TEST(Forward, BitIdenticalAcrossCalls) {
  CounterRng rng(14, 0);
  ConvParams p(3, 4);
  randomize(p.kernel, rng);
  const auto x = random_tensor({2, 3, 9, 8}, rng);
  EXPECT_EQ(conv2d_forward(x, p), conv2d_forward(x, p));
  BatchNormParams a(4), b(4);
  const auto y = conv2d_forward(x, p);
  EXPECT_EQ(batchnorm_forward(y, a, Mode::Train), batchnorm_forward(y, b, Mode::Train));
}
