#include "hseg/prompt.hpp"

#include <algorithm>
#include <string>

#include "hseg/error.hpp"
#include "hseg/image_io.hpp"

namespace hseg::prompt {

namespace {

std::size_t round_down(std::size_t v, std::size_t m) { return v / m * m; }
std::size_t round_up(std::size_t v, std::size_t m) { return (v + m - 1) / m * m; }

void check_bbox(const ReferenceMask& mask, const PromptBBox& b) {
  if (mask.height() % kTokenStride != 0 || mask.width() % kTokenStride != 0) {
    throw InputError("dpe_embed: image extents must be multiples of 16");
  }
  const bool aligned = b.x1 % kTokenStride == 0 && b.x2 % kTokenStride == 0 &&
                       b.y1 % kTokenStride == 0 && b.y2 % kTokenStride == 0;
  if (!aligned || b.x1 >= b.x2 || b.y1 >= b.y2 || b.x2 > mask.width() ||
      b.y2 > mask.height()) {
    throw InputError("dpe_embed: bbox [" + std::to_string(b.x1) + "," + std::to_string(b.y1) +
                     "," + std::to_string(b.x2) + "," + std::to_string(b.y2) +
                     ") is not a 16-aligned box inside the image");
  }
}

}  // namespace

ReferenceMask::ReferenceMask(std::size_t height, std::size_t width)
    : height_(height), width_(width), values_(height * width, kPossibleBackground) {}

ReferenceMask ReferenceMask::from_values(std::size_t height, std::size_t width,
                                         std::vector<std::uint8_t> values) {
  if (values.size() != height * width) {
    throw DimensionError("reference mask: value count does not match extents");
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] > kDefiniteForeground) {
      throw InputError("reference mask value " + std::to_string(values[i]) + " at index " +
                       std::to_string(i) + " is outside 0..4");
    }
  }
  ReferenceMask m(height, width);
  m.values_ = std::move(values);
  return m;
}

ReferenceMask update_reference_mask(const ReferenceMask& prev, std::span<const Click> new_clicks,
                                    const Tensor& prev_pred) {
  const std::size_t h = prev.height(), w = prev.width();
  if (prev_pred.rank() != 2 || prev_pred.dim(0) != h || prev_pred.dim(1) != w) {
    throw DimensionError("update_reference_mask: prediction " +
                         shape_string(prev_pred.shape()) + " does not match mask");
  }
  for (const Click& c : new_clicks) {
    if (c.y >= h || c.x >= w) {
      throw InputError("click (" + std::to_string(c.y) + "," + std::to_string(c.x) +
                       ") outside " + std::to_string(h) + "x" + std::to_string(w) + " image");
    }
  }

  ReferenceMask next = prev;
  for (std::size_t i = 0; i < h * w; ++i) {
    const float p = prev_pred[i];
    if (p != 0.0f && p != 1.0f) throw InputError("update_reference_mask: prediction not binary");
    std::uint8_t& v = next.values_[i];
    if (v == kDefiniteBackground || v == kDefiniteForeground || v == kUncertain) continue;
    const bool fg = p != 0.0f;
    if ((v == kPossibleForeground && !fg) || (v == kPossibleBackground && fg)) {
      v = kUncertain;
    } else {
      v = fg ? kPossibleForeground : kPossibleBackground;
    }
  }

  constexpr int r = kClickRadius;
  for (const Click& c : new_clicks) {
    const std::uint8_t mark = c.positive() ? kDefiniteForeground : kDefiniteBackground;
    const auto cy = static_cast<long>(c.y), cx = static_cast<long>(c.x);
    for (long y = std::max(0L, cy - r); y <= std::min<long>(static_cast<long>(h) - 1, cy + r);
         ++y) {
      for (long x = std::max(0L, cx - r);
           x <= std::min<long>(static_cast<long>(w) - 1, cx + r); ++x) {
        if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r) {
          next.values_[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)] = mark;
        }
      }
    }
  }
  return next;
}

PromptBBox full_bbox(const ReferenceMask& mask) { return {0, 0, mask.width(), mask.height()}; }

PromptBBox detect_prompt_bbox(const ReferenceMask& mask, std::size_t pad_px) {
  const std::size_t h = mask.height(), w = mask.width();
  std::size_t x1 = w, y1 = h, x2 = 0, y2 = 0;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      if (mask.at(y, x) == kPossibleBackground) continue;
      x1 = std::min(x1, x);
      y1 = std::min(y1, y);
      x2 = std::max(x2, x + 1);
      y2 = std::max(y2, y + 1);
    }
  }
  if (x2 == 0) return full_bbox(mask);

  x1 = x1 > pad_px ? x1 - pad_px : 0;
  y1 = y1 > pad_px ? y1 - pad_px : 0;
  x2 = std::min(w, x2 + pad_px);
  y2 = std::min(h, y2 + pad_px);
  return {round_down(x1, kTokenStride), round_down(y1, kTokenStride),
          std::min(w, round_up(x2, kTokenStride)), std::min(h, round_up(y2, kTokenStride))};
}

Tensor dpe_embed(const ReferenceMask& mask, const PromptBBox& bbox, const DpeWeights& w) {
  check_bbox(mask, bbox);
  if (w.value_embed.rank() != 2 || w.value_embed.dim(0) != kMaskValues) {
    throw DimensionError("dpe_embed: value_embed must be [5 x channels]");
  }
  const std::size_t ech = w.value_embed.dim(1);
  const std::size_t hb = bbox.height(), wb = bbox.width();

  Tensor x({ech, hb, wb});
  for (std::size_t y = 0; y < hb; ++y) {
    for (std::size_t xx = 0; xx < wb; ++xx) {
      const std::uint8_t v = mask.at(bbox.y1 + y, bbox.x1 + xx);
      for (std::size_t c = 0; c < ech; ++c) x.at(c, y, xx) = w.value_embed.at(v, c);
    }
  }
  for (std::size_t i = 0; i < w.convs.size(); ++i) {
    x = kernels::conv2d(x, w.convs[i].weight, w.convs[i].bias.values(), 2, 1);
    if (i + 1 < w.convs.size()) kernels::gelu_inplace(x.values());
  }

  const std::size_t d = w.dim();
  if (x.dim(0) != d) throw DimensionError("dpe_embed: conv stack does not end at bg_embed dim");
  const std::size_t th = mask.height() / kTokenStride, tw = mask.width() / kTokenStride;
  const std::size_t ty = bbox.y1 / kTokenStride, tx = bbox.x1 / kTokenStride;
  const std::size_t bh = x.dim(1), bw = x.dim(2);

  Tensor p({d, th, tw});
  for (std::size_t c = 0; c < d; ++c) {
    float* dst = p.data() + c * th * tw;
    std::fill(dst, dst + th * tw, w.bg_embed[c]);
    for (std::size_t y = 0; y < bh; ++y) {
      for (std::size_t xx = 0; xx < bw; ++xx) dst[(ty + y) * tw + tx + xx] = x.at(c, y, xx);
    }
  }
  return p;
}

Tensor dpe_embed_full(const ReferenceMask& mask, const DpeWeights& w) {
  return dpe_embed(mask, full_bbox(mask), w);
}

void save_reference_mask(const std::filesystem::path& path, const ReferenceMask& mask) {
  io::GrayImage img{mask.height(), mask.width(), kDefiniteForeground,
                    {mask.values().begin(), mask.values().end()}};
  io::write_pgm(path, img);
}

ReferenceMask load_reference_mask(const std::filesystem::path& path) {
  io::GrayImage img = io::read_pgm(path);
  if (img.maxval != kDefiniteForeground) {
    throw FormatError("reference mask PGM must have maxval 4", 0);
  }
  return ReferenceMask::from_values(img.height, img.width, std::move(img.pixels));
}

}  // namespace hseg::prompt
