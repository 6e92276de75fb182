#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "hseg/error.hpp"
#include "hseg/kernels.hpp"
#include "oracles.hpp"

namespace k = hseg::kernels;
using hseg::Shape;
using hseg::Tensor;

namespace {

Tensor identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0f;
  return t;
}

void expect_close(const Tensor& got, const std::vector<double>& want, double tol) {
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) {
    ASSERT_NEAR(got[i], want[i], tol) << "element " << i;
  }
}

}  // namespace

TEST(Matmul, IdentityIsExact) {
  std::mt19937_64 rng(1);
  const Tensor x = oracle::random_tensor({3, 3}, rng);
  EXPECT_EQ(k::matmul(identity(3), x), x);
  EXPECT_EQ(k::matmul(x, identity(3)), x);
}

TEST(Matmul, HandCheckedTwoByTwo) {
  const Tensor c = k::matmul(Tensor::from_rows({{1, 2}, {3, 4}}), Tensor::from_rows({{0}, {1}}));
  EXPECT_EQ(c, Tensor::from_rows({{2}, {4}}));
}

TEST(Matmul, RandomMatchesTripleLoop) {
  std::mt19937_64 rng(2);
  const Tensor a = oracle::random_tensor({17, 5}, rng);
  const Tensor b = oracle::random_tensor({5, 9}, rng);
  expect_close(k::matmul(a, b), oracle::matmul(a, b), 1e-6);
}

TEST(Matmul, RaggedBlockSizesMatchTripleLoop) {
  std::mt19937_64 rng(3);
  const std::size_t dims[][3] = {{67, 33, 35}, {1, 1, 1}, {130, 7, 17}, {5, 64, 48}};
  for (const auto& d : dims) {
    const Tensor a = oracle::random_tensor({d[0], d[1]}, rng);
    const Tensor b = oracle::random_tensor({d[1], d[2]}, rng);
    expect_close(k::matmul(a, b), oracle::matmul(a, b), 1e-5);
  }
}

TEST(Matmul, RowsIndependentOfBlocking) {
  std::mt19937_64 rng(4);
  const Tensor a = oracle::random_tensor({70, 40}, rng);
  const Tensor b = oracle::random_tensor({40, 37}, rng);
  const Tensor c = k::matmul(a, b);
  for (std::size_t i : {0u, 3u, 63u, 64u, 69u}) {
    Tensor row({1, 40});
    for (std::size_t t = 0; t < 40; ++t) row[t] = a.at(i, t);
    const Tensor ci = k::matmul(row, b);
    for (std::size_t j = 0; j < 37; ++j) ASSERT_EQ(ci[j], c.at(i, j));
  }
}

TEST(Matmul, InnerExtentMismatchThrows) {
  EXPECT_THROW(k::matmul(Tensor({2, 3}), Tensor({2, 3})), hseg::DimensionError);
}

TEST(Softmax, UniformRow) {
  const Tensor s = k::softmax_rows(Tensor::from_rows({{0, 0, 0}}));
  for (float v : s.values()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-7);
}

TEST(Softmax, LargeLogitsDoNotOverflow) {
  const Tensor s = k::softmax_rows(Tensor::from_rows({{1000, 0}}));
  EXPECT_NEAR(s[0], 1.0, 1e-6);
  EXPECT_NEAR(s[1], 0.0, 1e-6);
}

TEST(Softmax, MatchesExtendedPrecision) {
  std::mt19937_64 rng(5);
  const Tensor x = oracle::random_tensor({8, 8}, rng, -5.0f, 5.0f);
  const Tensor s = k::softmax_rows(x);
  for (std::size_t i = 0; i < 8; ++i) {
    const auto want = oracle::softmax_row(x.data() + i * 8, 8);
    double sum = 0.0;
    for (std::size_t j = 0; j < 8; ++j) {
      EXPECT_NEAR(s.at(i, j), static_cast<double>(want[j]), 1e-6);
      EXPECT_GE(s.at(i, j), 0.0f);
      sum += s.at(i, j);
    }
    EXPECT_NEAR(sum, 1.0, 1e-6);
  }
}

TEST(Softmax, ShiftInvariant) {
  std::mt19937_64 rng(6);
  const Tensor x = oracle::random_tensor({4, 16}, rng, -3.0f, 3.0f);
  Tensor shifted = x;
  for (float& v : shifted.values()) v += 7.25f;
  EXPECT_LE(hseg::max_abs_diff(k::softmax_rows(x), k::softmax_rows(shifted)), 1e-6f);
}

TEST(Softmax, NanInputThrows) {
  Tensor x({1, 2});
  x[1] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(k::softmax_rows(x), hseg::NumericError);
}

TEST(Conv2d, ZeroKernelGivesZeros) {
  std::mt19937_64 rng(7);
  const Tensor y = k::conv2d(oracle::random_tensor({1, 5, 5}, rng), Tensor({1, 1, 3, 3}), {}, 1, 1);
  for (float v : y.values()) EXPECT_EQ(v, 0.0f);
}

TEST(Conv2d, OneByOneStrideTwo) {
  const Tensor y = k::conv2d(Tensor({1, 4, 4}, 1.0f), Tensor({1, 1, 1, 1}, 2.0f), {}, 2, 0);
  EXPECT_EQ(y.shape(), (Shape{1, 2, 2}));
  for (float v : y.values()) EXPECT_EQ(v, 2.0f);
}

TEST(Conv2d, RandomMatchesSixLoopOracle) {
  std::mt19937_64 rng(8);
  struct Case { std::size_t cin, cout, h, w, k, stride, pad; };
  for (const Case c : {Case{3, 4, 9, 7, 3, 1, 1}, Case{5, 2, 16, 16, 3, 2, 1},
                       Case{2, 3, 8, 11, 5, 2, 2}, Case{1, 1, 6, 6, 1, 1, 0}}) {
    const Tensor x = oracle::random_tensor({c.cin, c.h, c.w}, rng);
    const Tensor w = oracle::random_tensor({c.cout, c.cin, c.k, c.k}, rng);
    const Tensor b = oracle::random_tensor({c.cout}, rng);
    const std::vector<float> bias(b.values().begin(), b.values().end());
    expect_close(k::conv2d(x, w, bias, c.stride, c.pad),
                 oracle::conv2d(x, w, bias, c.stride, c.pad), 1e-5);
  }
}

TEST(Conv2d, Linearity) {
  std::mt19937_64 rng(9);
  const Tensor x = oracle::random_tensor({3, 10, 10}, rng);
  const Tensor y = oracle::random_tensor({3, 10, 10}, rng);
  const Tensor w = oracle::random_tensor({4, 3, 3, 3}, rng);
  const float a = 1.5f, b = -0.75f;
  Tensor mix(x.shape());
  for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = a * x[i] + b * y[i];
  const Tensor lhs = k::conv2d(mix, w, {}, 1, 1);
  const Tensor cx = k::conv2d(x, w, {}, 1, 1), cy = k::conv2d(y, w, {}, 1, 1);
  for (std::size_t i = 0; i < lhs.size(); ++i) EXPECT_NEAR(lhs[i], a * cx[i] + b * cy[i], 1e-4);
}

TEST(Conv2d, EmptyOutputThrows) {
  EXPECT_THROW(k::conv2d(Tensor({1, 2, 2}), Tensor({1, 1, 5, 5}), {}, 1, 0), hseg::DimensionError);
  EXPECT_THROW(k::conv2d(Tensor({2, 4, 4}), Tensor({1, 3, 3, 3}), {}, 1, 1), hseg::DimensionError);
}

TEST(Deconv2d, SinglePixelSpreadsToBlock) {
  const Tensor y = k::deconv2d(Tensor({1, 1, 1}, 3.5f), Tensor({1, 1, 2, 2}, 1.0f), {}, 2);
  EXPECT_EQ(y.shape(), (Shape{1, 2, 2}));
  for (float v : y.values()) EXPECT_EQ(v, 3.5f);
}

TEST(Deconv2d, ZerosInZerosOut) {
  std::mt19937_64 rng(10);
  const Tensor y = k::deconv2d(Tensor({3, 4, 5}), oracle::random_tensor({3, 2, 2, 2}, rng), {}, 2);
  EXPECT_EQ(y.shape(), (Shape{2, 8, 10}));
  for (float v : y.values()) EXPECT_EQ(v, 0.0f);
}

TEST(Deconv2d, RandomMatchesZeroStuffOracle) {
  std::mt19937_64 rng(11);
  const Tensor x = oracle::random_tensor({4, 5, 6}, rng);
  const Tensor w = oracle::random_tensor({4, 3, 2, 2}, rng);
  const Tensor b = oracle::random_tensor({3}, rng);
  const std::vector<float> bias(b.values().begin(), b.values().end());
  expect_close(k::deconv2d(x, w, bias, 2), oracle::deconv_zero_stuff(x, w, bias, 2), 1e-5);
}

// Same identity through the library's own convolution: stuff zeros, flip
// the kernel, correlate with padding k - 1.
TEST(Deconv2d, EqualsConvOfZeroStuffedInputOverSeeds) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    const std::size_t cin = 1 + seed % 3, cout = 1 + seed % 4, h = 1 + seed % 5, w = 1 + seed % 6;
    const Tensor x = oracle::random_tensor({cin, h, w}, rng);
    const Tensor wt = oracle::random_tensor({cin, cout, 2, 2}, rng);
    Tensor stuffed({cin, 2 * h - 1, 2 * w - 1});
    for (std::size_t c = 0; c < cin; ++c)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t xx = 0; xx < w; ++xx) stuffed.at(c, 2 * y, 2 * xx) = x.at(c, y, xx);
    Tensor flipped({cout, cin, 2, 2});
    for (std::size_t co = 0; co < cout; ++co)
      for (std::size_t ci = 0; ci < cin; ++ci)
        for (std::size_t ky = 0; ky < 2; ++ky)
          for (std::size_t kx = 0; kx < 2; ++kx)
            flipped[((co * cin + ci) * 2 + ky) * 2 + kx] = wt[((ci * cout + co) * 2 + 1 - ky) * 2 + 1 - kx];
    const Tensor via_conv = k::conv2d(stuffed, flipped, {}, 1, 1);
    ASSERT_LE(hseg::max_abs_diff(k::deconv2d(x, wt, {}, 2), via_conv), 1e-5f) << "seed " << seed;
  }
}

TEST(Deconv2d, KernelMustEqualStride) {
  EXPECT_THROW(k::deconv2d(Tensor({1, 2, 2}), Tensor({1, 1, 3, 3}), {}, 2), hseg::DimensionError);
}

TEST(MaxPool, AllZero) {
  const Tensor y = k::maxpool_to(Tensor({1, 64, 64}), 4, 4);
  EXPECT_EQ(y, Tensor({1, 4, 4}));
}

TEST(MaxPool, SingleCornerPixel) {
  Tensor x({1, 32, 32});
  x[0] = 1.0f;
  const Tensor y = k::maxpool_to(x, 2, 2);
  EXPECT_EQ(y, Tensor(Shape{1, 2, 2}, std::vector<float>{1, 0, 0, 0}));
}

TEST(MaxPool, RandomBinaryMatchesWindowScan) {
  std::mt19937_64 rng(12);
  const Tensor x = oracle::random_binary({1, 64, 64}, rng, 0.02);
  const Tensor y = k::maxpool_to(x, 4, 8);
  for (std::size_t oy = 0; oy < 4; ++oy)
    for (std::size_t ox = 0; ox < 8; ++ox) {
      float m = 0.0f;
      for (std::size_t yy = oy * 16; yy < oy * 16 + 16; ++yy)
        for (std::size_t xx = ox * 8; xx < ox * 8 + 8; ++xx) m = std::max(m, x[yy * 64 + xx]);
      EXPECT_EQ(y[oy * 8 + ox], m);
    }
}

TEST(MaxPool, NonDivisibleThrows) {
  EXPECT_THROW(k::maxpool_to(Tensor({1, 10, 10}), 3, 5), hseg::DimensionError);
}

TEST(UniformAvg, ConstantInteriorAndZeros) {
  const Tensor y = k::uniform_avg_conv(Tensor({1, 20, 20}, 0.5f));
  EXPECT_FLOAT_EQ(y[10 * 20 + 10], 0.5f);
  EXPECT_LT(y[0], 0.5f);  // zero padding at the corner
  EXPECT_EQ(k::uniform_avg_conv(Tensor({1, 9, 9})), Tensor({1, 9, 9}));
}

TEST(UniformAvg, RandomBinaryMatchesWindowSum) {
  std::mt19937_64 rng(13);
  const Tensor x = oracle::random_binary({1, 23, 31}, rng);
  const Tensor y = k::uniform_avg_conv(x);
  for (long yy = 0; yy < 23; ++yy)
    for (long xx = 0; xx < 31; ++xx) {
      int s = 0;
      for (long dy = -3; dy <= 3; ++dy)
        for (long dx = -3; dx <= 3; ++dx) {
          const long a = yy + dy, b = xx + dx;
          if (a >= 0 && b >= 0 && a < 23 && b < 31) s += x[a * 31 + b] != 0.0f;
        }
      ASSERT_NEAR(y[yy * 31 + xx], s / 49.0, 1e-6);
    }
}

TEST(Activations, GeluAndSigmoid) {
  EXPECT_EQ(k::gelu(0.0f), 0.0f);
  for (float x : {-3.0f, -0.5f, 0.25f, 2.0f}) EXPECT_NEAR(k::gelu(x), oracle::gelu(x), 1e-6);
  EXPECT_FLOAT_EQ(k::sigmoid(0.0f), 0.5f);
  EXPECT_NEAR(k::sigmoid(20.0f), 1.0f, 1e-6);
}

TEST(LayerNorm, RowsNormalized) {
  std::mt19937_64 rng(14);
  const Tensor x = oracle::random_tensor({5, 64}, rng, -4.0f, 9.0f);
  const std::vector<float> gamma(64, 1.0f), beta(64, 0.0f);
  const Tensor y = k::layer_norm_rows(x, gamma, beta);
  for (std::size_t i = 0; i < 5; ++i) {
    double mean = 0.0, var = 0.0;
    for (float v : y.row(i)) mean += v;
    mean /= 64.0;
    for (float v : y.row(i)) var += (v - mean) * (v - mean);
    EXPECT_NEAR(mean, 0.0, 1e-5);
    EXPECT_NEAR(var / 64.0, 1.0, 1e-3);
  }
}
