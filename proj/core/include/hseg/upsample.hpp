#pragma once

#include <array>
#include <cstddef>

#include "hseg/kernels.hpp"
#include "hseg/prompt.hpp"
#include "hseg/tensor.hpp"

/// Dynamic local upsampling: coarse localization on the token grid, Canny
/// edge features, and deconvolution restricted to the detected box.
namespace hseg::upsample {

inline constexpr float kCannyLow = 50.0f;
inline constexpr float kCannyHigh = 150.0f;
inline constexpr std::size_t kRefinePad = 2;

/// Multi-scale edge features at 1/2, 1/4, 1/8 and 1/16 resolution.
struct EdgeFeatures {
  Tensor f1;  // [4 x H/2 x W/2]
  Tensor f2;  // [16 x H/4 x W/4]
  Tensor f3;  // [64 x H/8 x W/8]
  Tensor f4;  // [d x H/16 x W/16]
};

struct ResBlock {
  kernels::Layer conv1;  // 3x3, same channels
  kernels::Layer conv2;
};

struct CannyNetStage {
  kernels::Layer down;  // 3x3, stride 2
  std::array<ResBlock, 2> blocks;
};

struct CannyNetWeights {
  std::array<CannyNetStage, 4> stages;  // 1 -> 4 -> 16 -> 64 -> d
};

struct DluWeights {
  kernels::Layer mlp_fc1;                // [d x 64]
  kernels::Layer mlp_fc2;                // [64 x 1]
  std::array<kernels::Layer, 4> fuse;    // 3x3 at 1/16, 1/8, 1/4, 1/2: d, 64, 16, 4 channels
  std::array<kernels::Layer, 4> deconv;  // 2x2 stride 2: d -> 64 -> 16 -> 4 -> 1
  CannyNetWeights cannynet;
};

/// Classical Canny on an RGB image in 0..255: grayscale, 5x5 Gaussian
/// (sigma 1.4), Sobel, non-maximum suppression and hysteresis with
/// 8-connectivity. Borders replicate. Returns [1 x H x W] with values 0/1.
Tensor canny(const Tensor& image, float lo = kCannyLow, float hi = kCannyHigh);

/// Four stages, each a stride-2 conv followed by two pre-activation residual
/// blocks x + conv2(gelu(conv1(gelu(x)))). Extents must be divisible by 16.
EdgeFeatures cannynet(const Tensor& edges, const CannyNetWeights& w);

/// Per-token MLP d -> 64 -> 1 over f [d x h x w]; returns [1 x h x w] logits.
Tensor lowres_mask(const Tensor& f, const DluWeights& w);

/// Token-space box around logits > 0, padded and clamped. Falls back to the
/// full extent when nothing is positive.
prompt::PromptBBox extract_refine_bbox(const Tensor& lowres, std::size_t pad_tokens = kRefinePad);

/// Upsamples the tokens inside `bbox` (token units) to pixel logits [H x W],
/// fusing the edge features at each scale. Pixels outside the box are 0.
Tensor dlu_upsample(const Tensor& f, const prompt::PromptBBox& bbox, const EdgeFeatures& ef,
                    const DluWeights& w);

/// dlu_upsample over the full token grid.
Tensor dlu_upsample_full(const Tensor& f, const EdgeFeatures& ef, const DluWeights& w);

/// Channel-wise crop of [c x H x W].
Tensor crop(const Tensor& x, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w);

}  // namespace hseg::upsample
