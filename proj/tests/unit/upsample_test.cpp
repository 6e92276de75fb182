#include <gtest/gtest.h>

#include <random>

#include "hseg/error.hpp"
#include "hseg/upsample.hpp"
#include "oracles.hpp"

using namespace hseg::upsample;
using hseg::Shape;
using hseg::Tensor;
using hseg::kernels::Layer;
using hseg::prompt::PromptBBox;

namespace {

Layer conv_layer(std::size_t cout, std::size_t cin, std::size_t k, std::mt19937_64& rng, float b = 0.3f) {
  return {oracle::random_tensor({cout, cin, k, k}, rng, -b, b), oracle::random_tensor({cout}, rng, -0.05f, 0.05f)};
}

CannyNetWeights random_cannynet(std::size_t d, std::mt19937_64& rng) {
  CannyNetWeights w;
  const std::size_t ch[5] = {1, 4, 16, 64, d};
  for (std::size_t s = 0; s < 4; ++s) {
    w.stages[s].down = conv_layer(ch[s + 1], ch[s], 3, rng);
    for (auto& b : w.stages[s].blocks) {
      b.conv1 = conv_layer(ch[s + 1], ch[s + 1], 3, rng, 0.1f);
      b.conv2 = conv_layer(ch[s + 1], ch[s + 1], 3, rng, 0.1f);
    }
  }
  return w;
}

DluWeights random_dlu(std::size_t d, std::mt19937_64& rng) {
  DluWeights w;
  w.mlp_fc1 = {oracle::random_tensor({d, 64}, rng), oracle::random_tensor({64}, rng)};
  w.mlp_fc2 = {oracle::random_tensor({64, 1}, rng), oracle::random_tensor({1}, rng)};
  const std::size_t ch[5] = {d, 64, 16, 4, 1};
  for (std::size_t s = 0; s < 4; ++s) {
    w.fuse[s] = conv_layer(ch[s], ch[s], 3, rng, 0.1f);
    w.deconv[s] = {oracle::random_tensor({ch[s], ch[s + 1], 2, 2}, rng, -0.3f, 0.3f),
                   oracle::random_tensor({ch[s + 1]}, rng, -0.05f, 0.05f)};
  }
  w.cannynet = random_cannynet(d, rng);
  return w;
}

EdgeFeatures random_features(std::size_t d, std::size_t h, std::size_t w, std::mt19937_64& rng) {
  return {oracle::random_tensor({4, 8 * h, 8 * w}, rng), oracle::random_tensor({16, 4 * h, 4 * w}, rng),
          oracle::random_tensor({64, 2 * h, 2 * w}, rng), oracle::random_tensor({d, h, w}, rng)};
}

Tensor rgb(std::size_t h, std::size_t w, float v) { return Tensor({3, h, w}, v); }

}  // namespace

TEST(Canny, ConstantImageHasNoEdges) {
  const Tensor e = canny(rgb(32, 40, 128.0f));
  EXPECT_EQ(e.shape(), (Shape{1, 32, 40}));
  for (float v : e.values()) EXPECT_EQ(v, 0.0f);
}

TEST(Canny, VerticalStepGivesOnePixelPerRow) {
  Tensor img = rgb(24, 32, 0.0f);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < 24; ++y)
      for (std::size_t x = 16; x < 32; ++x) img.at(c, y, x) = 255.0f;
  const Tensor e = canny(img);
  for (std::size_t y = 0; y < 24; ++y) {
    std::size_t count = 0, col = 0;
    for (std::size_t x = 0; x < 32; ++x)
      if (e.at(0, y, x) != 0.0f) {
        ++count;
        col = x;
      }
    EXPECT_EQ(count, 1u) << "row " << y;
    EXPECT_TRUE(col == 15 || col == 16) << "row " << y << " col " << col;
  }
}

TEST(Canny, OutputBinaryAndEdgesAreLocalMaxima) {
  // A diagonal ramp edge: pixels flagged only where the blurred step is steepest.
  Tensor img = rgb(32, 32, 0.0f);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < 32; ++y)
      for (std::size_t x = 0; x < 32; ++x) img.at(c, y, x) = x + y > 31 ? 200.0f : 20.0f;
  const Tensor e = canny(img);
  std::size_t n = 0;
  for (std::size_t y = 0; y < 32; ++y)
    for (std::size_t x = 0; x < 32; ++x) {
      const float v = e.at(0, y, x);
      ASSERT_TRUE(v == 0.0f || v == 1.0f);
      if (v != 0.0f) {
        ++n;
        EXPECT_LE(std::abs(long(x + y) - 31), 1) << y << "," << x;
      }
    }
  EXPECT_GE(n, 30u);
}

TEST(Canny, LowAmplitudeNoiseIsSuppressed) {
  std::mt19937_64 rng(80);
  Tensor img = oracle::random_tensor({3, 48, 48}, rng, 126.0f, 130.0f);
  const Tensor e = canny(img);
  for (float v : e.values()) EXPECT_EQ(v, 0.0f);
}

TEST(Canny, ThresholdsValidated) {
  EXPECT_THROW(canny(rgb(8, 8, 0.0f), 100.0f, 50.0f), hseg::InputError);
  EXPECT_THROW(canny(rgb(8, 8, 0.0f), 0.0f, 50.0f), hseg::InputError);
  EXPECT_THROW(canny(Tensor({1, 8, 8})), hseg::DimensionError);
}

TEST(CannyNet, ShapesAndZeroInput) {
  std::mt19937_64 rng(81);
  CannyNetWeights w = random_cannynet(8, rng);
  for (auto& st : w.stages) {
    st.down.bias.fill(0.0f);
    for (auto& b : st.blocks) {
      b.conv1.bias.fill(0.0f);
      b.conv2.bias.fill(0.0f);
    }
  }
  const EdgeFeatures f = cannynet(Tensor({1, 64, 48}), w);
  EXPECT_EQ(f.f1.shape(), (Shape{4, 32, 24}));
  EXPECT_EQ(f.f2.shape(), (Shape{16, 16, 12}));
  EXPECT_EQ(f.f3.shape(), (Shape{64, 8, 6}));
  EXPECT_EQ(f.f4.shape(), (Shape{8, 4, 3}));
  for (const Tensor* t : {&f.f1, &f.f2, &f.f3, &f.f4})
    for (float v : t->values()) EXPECT_EQ(v, 0.0f);
  EXPECT_THROW(cannynet(Tensor({1, 40, 48}), w), hseg::DimensionError);
}

TEST(CannyNet, ZeroedBlocksReduceToStridedConvs) {
  std::mt19937_64 rng(82);
  CannyNetWeights w = random_cannynet(8, rng);
  for (auto& st : w.stages)
    for (auto& b : st.blocks) {
      b.conv2.weight.fill(0.0f);
      b.conv2.bias.fill(0.0f);
    }
  const Tensor edges = oracle::random_binary({1, 32, 32}, rng, 0.1);
  const EdgeFeatures f = cannynet(edges, w);
  Tensor x = edges;
  const Tensor* got[4] = {&f.f1, &f.f2, &f.f3, &f.f4};
  for (std::size_t s = 0; s < 4; ++s) {
    x = hseg::kernels::conv2d(x, w.stages[s].down.weight, w.stages[s].down.bias.values(), 2, 1);
    EXPECT_EQ(*got[s], x) << "stage " << s;
  }
}

TEST(Lowres, MatchesPerTokenOracle) {
  std::mt19937_64 rng(83);
  const DluWeights w = random_dlu(12, rng);
  const Tensor f = oracle::random_tensor({12, 3, 5}, rng);
  const Tensor lr = lowres_mask(f, w);
  ASSERT_EQ(lr.shape(), (Shape{1, 3, 5}));
  for (std::size_t p = 0; p < 15; ++p) {
    double out = w.mlp_fc2.bias[0];
    for (std::size_t j = 0; j < 64; ++j) {
      double hdn = w.mlp_fc1.bias[j];
      for (std::size_t c = 0; c < 12; ++c) hdn += double(f[c * 15 + p]) * w.mlp_fc1.weight.at(c, j);
      out += oracle::gelu(hdn) * w.mlp_fc2.weight[j];
    }
    EXPECT_NEAR(lr[p], out, 1e-5);
  }
}

TEST(RefineBBox, SinglePositiveToken) {
  Tensor lr({1, 16, 16}, -1.0f);
  lr.at(0, 5, 5) = 2.0f;
  EXPECT_EQ(extract_refine_bbox(lr, 2), (PromptBBox{3, 3, 8, 8}));
}

TEST(RefineBBox, ClampedAndFallbacks) {
  Tensor lr({1, 8, 10}, -1.0f);
  EXPECT_EQ(extract_refine_bbox(lr), (PromptBBox{0, 0, 10, 8}));
  lr.at(0, 0, 9) = 1.0f;
  EXPECT_EQ(extract_refine_bbox(lr, 2), (PromptBBox{7, 0, 10, 3}));
  EXPECT_EQ(extract_refine_bbox(Tensor({1, 8, 10}, 1.0f)), (PromptBBox{0, 0, 10, 8}));
}

TEST(Dlu, FullBboxIsNonDluBitwise) {
  std::mt19937_64 rng(84);
  const DluWeights w = random_dlu(8, rng);
  const Tensor f = oracle::random_tensor({8, 3, 4}, rng);
  const EdgeFeatures ef = random_features(8, 3, 4, rng);
  EXPECT_EQ(dlu_upsample(f, {0, 0, 4, 3}, ef, w), dlu_upsample_full(f, ef, w));
  EXPECT_EQ(dlu_upsample_full(f, ef, w).shape(), (Shape{48, 64}));
}

TEST(Dlu, ComposedFromKernels) {
  std::mt19937_64 rng(85);
  const DluWeights w = random_dlu(8, rng);
  const Tensor f = oracle::random_tensor({8, 2, 3}, rng);
  const EdgeFeatures ef = random_features(8, 2, 3, rng);
  Tensor x = f;
  const Tensor* feats[4] = {&ef.f4, &ef.f3, &ef.f2, &ef.f1};
  for (std::size_t s = 0; s < 4; ++s) {
    hseg::kernels::add_inplace(x, *feats[s]);
    x = hseg::kernels::conv2d(x, w.fuse[s].weight, w.fuse[s].bias.values(), 1, 1);
    hseg::kernels::gelu_inplace(x.values());
    x = hseg::kernels::deconv2d(x, w.deconv[s].weight, w.deconv[s].bias.values(), 2);
  }
  EXPECT_EQ(dlu_upsample_full(f, ef, w), x.reshaped({32, 48}));
}

TEST(Dlu, OutsideBboxIsExactlyZeroAndInteriorMatchesFull) {
  std::mt19937_64 rng(86);
  const std::size_t d = 6, h = 8, ww = 8;
  for (int t = 0; t < 100; ++t) {
    const DluWeights w = random_dlu(d, rng);
    const Tensor f = oracle::random_tensor({d, h, ww}, rng);
    const EdgeFeatures ef = random_features(d, h, ww, rng);
    const std::size_t x1 = rng() % 5, y1 = rng() % 5;
    const std::size_t x2 = x1 + 1 + rng() % (ww - x1), y2 = y1 + 1 + rng() % (h - y1);
    const PromptBBox b{x1, y1, x2, y2};
    const Tensor local = dlu_upsample(f, b, ef, w);
    const Tensor full = dlu_upsample_full(f, ef, w);
    double outside = 0.0;
    for (std::size_t y = 0; y < 16 * h; ++y)
      for (std::size_t x = 0; x < 16 * ww; ++x) {
        const bool in = y >= 16 * y1 && y < 16 * y2 && x >= 16 * x1 && x < 16 * x2;
        if (!in) {
          outside += std::abs(local.at(y, x));
          continue;
        }
        const bool interior = y >= 16 * y1 + 32 && y + 32 < 16 * y2 && x >= 16 * x1 + 32 && x + 32 < 16 * x2;
        if (interior) ASSERT_NEAR(local.at(y, x), full.at(y, x), 1e-5) << "case " << t;
      }
    ASSERT_EQ(outside, 0.0) << "case " << t;
  }
}

TEST(Dlu, MisalignmentThrows) {
  std::mt19937_64 rng(87);
  const DluWeights w = random_dlu(4, rng);
  const Tensor f = oracle::random_tensor({4, 2, 2}, rng);
  EdgeFeatures ef = random_features(4, 2, 2, rng);
  EXPECT_THROW(dlu_upsample(f, {0, 0, 3, 2}, ef, w), hseg::DimensionError);
  EXPECT_THROW(dlu_upsample(f, {1, 0, 1, 2}, ef, w), hseg::DimensionError);
  ef.f2 = oracle::random_tensor({16, 4, 4}, rng);
  EXPECT_THROW(dlu_upsample_full(f, ef, w), hseg::DimensionError);
}

TEST(Crop, CopiesWindow) {
  Tensor x({2, 4, 5});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = float(i);
  const Tensor c = crop(x, 1, 2, 2, 3);
  EXPECT_EQ(c.at(1, 1, 2), x.at(1, 2, 4));
  EXPECT_THROW(crop(x, 3, 0, 2, 1), hseg::DimensionError);
}
