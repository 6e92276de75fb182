#include "hseg/upsample.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "hseg/error.hpp"

namespace hseg::upsample {

namespace {

// Replicate-border 2-D filter of a single plane.
std::vector<float> filter_replicate(const std::vector<float>& src, std::size_t h, std::size_t w,
                                    const float* kernel, int k) {
  const int r = k / 2;
  std::vector<float> out(h * w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      float acc = 0.0f;
      for (int ky = 0; ky < k; ++ky) {
        const long yy = std::clamp<long>(static_cast<long>(y) + ky - r, 0, static_cast<long>(h) - 1);
        for (int kx = 0; kx < k; ++kx) {
          const long xx =
              std::clamp<long>(static_cast<long>(x) + kx - r, 0, static_cast<long>(w) - 1);
          acc += kernel[ky * k + kx] * src[static_cast<std::size_t>(yy) * w +
                                           static_cast<std::size_t>(xx)];
        }
      }
      out[y * w + x] = acc;
    }
  }
  return out;
}

std::array<float, 25> gaussian5(float sigma) {
  std::array<float, 25> g{};
  double sum = 0.0;
  std::array<double, 25> raw{};
  for (int y = -2; y <= 2; ++y)
    for (int x = -2; x <= 2; ++x) {
      raw[(y + 2) * 5 + x + 2] = std::exp(-(x * x + y * y) / (2.0 * sigma * sigma));
      sum += raw[(y + 2) * 5 + x + 2];
    }
  for (std::size_t i = 0; i < 25; ++i) g[i] = static_cast<float>(raw[i] / sum);
  return g;
}

Tensor conv_same(const Tensor& x, const kernels::Layer& l) {
  return kernels::conv2d(x, l.weight, l.bias.values(), 1, 1);
}

void check_scale(const Tensor& feat, std::size_t h, std::size_t w, const char* name) {
  if (feat.rank() != 3 || feat.dim(1) != h || feat.dim(2) != w) {
    throw DimensionError(std::string("dlu_upsample: edge feature ") + name + " " +
                         shape_string(feat.shape()) + " does not match " + std::to_string(h) +
                         "x" + std::to_string(w));
  }
}

}  // namespace

Tensor crop(const Tensor& x, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) {
  if (x.rank() != 3 || y0 + h > x.dim(1) || x0 + w > x.dim(2)) {
    throw DimensionError("crop: window outside " + shape_string(x.shape()));
  }
  const std::size_t c = x.dim(0);
  Tensor out({c, h, w});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      std::memcpy(out.data() + (ch * h + y) * w, x.data() + (ch * x.dim(1) + y0 + y) * x.dim(2) + x0,
                  w * sizeof(float));
  return out;
}

Tensor canny(const Tensor& image, float lo, float hi) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw DimensionError("canny: expected [3 x H x W], got " + shape_string(image.shape()));
  }
  if (!(lo > 0.0f) || !(hi > lo)) throw InputError("canny: thresholds must satisfy hi > lo > 0");
  const std::size_t h = image.dim(1), w = image.dim(2), n = h * w;

  std::vector<float> gray(n);
  for (std::size_t i = 0; i < n; ++i)
    gray[i] = 0.299f * image[i] + 0.587f * image[n + i] + 0.114f * image[2 * n + i];

  const auto g = gaussian5(1.4f);
  const std::vector<float> blur = filter_replicate(gray, h, w, g.data(), 5);
  static constexpr float kSobelX[9] = {-1, 0, 1, -2, 0, 2, -1, 0, 1};
  static constexpr float kSobelY[9] = {-1, -2, -1, 0, 0, 0, 1, 2, 1};
  const std::vector<float> gx = filter_replicate(blur, h, w, kSobelX, 3);
  const std::vector<float> gy = filter_replicate(blur, h, w, kSobelY, 3);

  std::vector<float> mag(n);
  for (std::size_t i = 0; i < n; ++i) mag[i] = std::sqrt(gx[i] * gx[i] + gy[i] * gy[i]);

  auto mag_at = [&](long y, long x) {
    if (y < 0 || x < 0 || y >= static_cast<long>(h) || x >= static_cast<long>(w)) return 0.0f;
    return mag[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)];
  };

  // Non-maximum suppression along the quantized gradient direction. A pixel
  // survives if it beats the backward neighbour and ties or beats the forward
  // one, which keeps exactly one pixel across a symmetric ridge.
  std::vector<float> thin(n, 0.0f);
  constexpr double kPi = 3.14159265358979323846;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t i = y * w + x;
      if (mag[i] == 0.0f) continue;
      double angle = std::atan2(gy[i], gx[i]) * 180.0 / kPi;
      if (angle < 0) angle += 180.0;
      int dy = 0, dx = 0;
      if (angle < 22.5 || angle >= 157.5) {
        dx = 1;
      } else if (angle < 67.5) {
        dy = 1;
        dx = 1;
      } else if (angle < 112.5) {
        dy = 1;
      } else {
        dy = 1;
        dx = -1;
      }
      const long yy = static_cast<long>(y), xx = static_cast<long>(x);
      const float back = mag_at(yy - dy, xx - dx), fwd = mag_at(yy + dy, xx + dx);
      if (mag[i] > back && mag[i] >= fwd) thin[i] = mag[i];
    }
  }

  Tensor out({1, h, w});
  std::vector<std::size_t> stack;
  for (std::size_t i = 0; i < n; ++i) {
    if (thin[i] >= hi && out[i] == 0.0f) {
      out[i] = 1.0f;
      stack.push_back(i);
    }
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      const long py = static_cast<long>(p / w), px = static_cast<long>(p % w);
      for (long dy = -1; dy <= 1; ++dy) {
        for (long dx = -1; dx <= 1; ++dx) {
          const long qy = py + dy, qx = px + dx;
          if (qy < 0 || qx < 0 || qy >= static_cast<long>(h) || qx >= static_cast<long>(w))
            continue;
          const std::size_t q = static_cast<std::size_t>(qy) * w + static_cast<std::size_t>(qx);
          if (out[q] == 0.0f && thin[q] >= lo) {
            out[q] = 1.0f;
            stack.push_back(q);
          }
        }
      }
    }
  }
  return out;
}

EdgeFeatures cannynet(const Tensor& edges, const CannyNetWeights& w) {
  if (edges.rank() != 3 || edges.dim(0) != 1 || edges.dim(1) % 16 != 0 ||
      edges.dim(2) % 16 != 0 || edges.dim(1) == 0 || edges.dim(2) == 0) {
    throw DimensionError("cannynet: expected [1 x H x W] with H, W multiples of 16, got " +
                         shape_string(edges.shape()));
  }
  std::array<Tensor, 4> feats;
  Tensor x = edges;
  for (std::size_t s = 0; s < 4; ++s) {
    const CannyNetStage& st = w.stages[s];
    x = kernels::conv2d(x, st.down.weight, st.down.bias.values(), 2, 1);
    for (const ResBlock& b : st.blocks) {
      Tensor t = x;
      kernels::gelu_inplace(t.values());
      t = conv_same(t, b.conv1);
      kernels::gelu_inplace(t.values());
      t = conv_same(t, b.conv2);
      kernels::add_inplace(x, t);
    }
    feats[s] = x;
  }
  return {std::move(feats[0]), std::move(feats[1]), std::move(feats[2]), std::move(feats[3])};
}

Tensor lowres_mask(const Tensor& f, const DluWeights& w) {
  if (f.rank() != 3) throw DimensionError("lowres_mask: expected [d x h x w]");
  const std::size_t h = f.dim(1), ww = f.dim(2);
  Tensor hidden = kernels::linear(channels_to_tokens(f), w.mlp_fc1.weight, w.mlp_fc1.bias.values());
  kernels::gelu_inplace(hidden.values());
  const Tensor logits = kernels::linear(hidden, w.mlp_fc2.weight, w.mlp_fc2.bias.values());
  return logits.reshaped({1, h, ww});
}

prompt::PromptBBox extract_refine_bbox(const Tensor& lowres, std::size_t pad_tokens) {
  if (lowres.rank() != 3 || lowres.dim(0) != 1) {
    throw DimensionError("extract_refine_bbox: expected [1 x h x w]");
  }
  const std::size_t h = lowres.dim(1), w = lowres.dim(2);
  std::size_t x1 = w, y1 = h, x2 = 0, y2 = 0;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      if (!(lowres[y * w + x] > 0.0f)) continue;
      x1 = std::min(x1, x);
      y1 = std::min(y1, y);
      x2 = std::max(x2, x + 1);
      y2 = std::max(y2, y + 1);
    }
  }
  if (x2 == 0) return {0, 0, w, h};
  return {x1 > pad_tokens ? x1 - pad_tokens : 0, y1 > pad_tokens ? y1 - pad_tokens : 0,
          std::min(w, x2 + pad_tokens), std::min(h, y2 + pad_tokens)};
}

Tensor dlu_upsample(const Tensor& f, const prompt::PromptBBox& bbox, const EdgeFeatures& ef,
                    const DluWeights& w) {
  if (f.rank() != 3) throw DimensionError("dlu_upsample: expected [d x h x w] tokens");
  const std::size_t h = f.dim(1), ww = f.dim(2);
  if (bbox.x1 >= bbox.x2 || bbox.y1 >= bbox.y2 || bbox.x2 > ww || bbox.y2 > h) {
    throw DimensionError("dlu_upsample: bbox outside the " + std::to_string(h) + "x" +
                         std::to_string(ww) + " token grid");
  }
  check_scale(ef.f4, h, ww, "f4");
  check_scale(ef.f3, 2 * h, 2 * ww, "f3");
  check_scale(ef.f2, 4 * h, 4 * ww, "f2");
  check_scale(ef.f1, 8 * h, 8 * ww, "f1");

  const std::array<const Tensor*, 4> feats = {&ef.f4, &ef.f3, &ef.f2, &ef.f1};
  Tensor x = crop(f, bbox.y1, bbox.x1, bbox.height(), bbox.width());
  for (std::size_t s = 0; s < 4; ++s) {
    const std::size_t scale = std::size_t{1} << s;
    kernels::add_inplace(x, crop(*feats[s], bbox.y1 * scale, bbox.x1 * scale,
                                 bbox.height() * scale, bbox.width() * scale));
    x = conv_same(x, w.fuse[s]);
    kernels::gelu_inplace(x.values());
    x = kernels::deconv2d(x, w.deconv[s].weight, w.deconv[s].bias.values(), 2);
  }
  if (x.dim(0) != 1) throw DimensionError("dlu_upsample: last deconv must output 1 channel");

  const std::size_t hp = 16 * h, wp = 16 * ww;
  const std::size_t oy = 16 * bbox.y1, ox = 16 * bbox.x1, bw = 16 * bbox.width();
  Tensor out({hp, wp});
  for (std::size_t y = 0; y < 16 * bbox.height(); ++y)
    std::memcpy(out.data() + (oy + y) * wp + ox, x.data() + y * bw, bw * sizeof(float));
  return out;
}

Tensor dlu_upsample_full(const Tensor& f, const EdgeFeatures& ef, const DluWeights& w) {
  if (f.rank() != 3) throw DimensionError("dlu_upsample_full: expected [d x h x w] tokens");
  return dlu_upsample(f, {0, 0, f.dim(2), f.dim(1)}, ef, w);
}

}  // namespace hseg::upsample
