#include "hseg/routing.hpp"

#include <algorithm>
#include <cstring>
#include <string>

#include "hseg/error.hpp"

namespace hseg::routing {

EdgeMap EdgeMap::from_flags(std::size_t h, std::size_t w, std::vector<std::uint8_t> flags) {
  if (flags.size() != h * w) throw DimensionError("EdgeMap: flag count does not match grid");
  EdgeMap em;
  em.h = h;
  em.w = w;
  for (std::size_t i = 0; i < flags.size(); ++i) {
    flags[i] = flags[i] ? 1 : 0;
    (flags[i] ? em.edge_idx : em.nonedge_idx).push_back(i);
  }
  em.flags = std::move(flags);
  return em;
}

EdgeMap EdgeMap::all_edge(std::size_t h, std::size_t w) {
  return from_flags(h, w, std::vector<std::uint8_t>(h * w, 1));
}

EdgeMap EdgeMap::all_nonedge(std::size_t h, std::size_t w) {
  return from_flags(h, w, std::vector<std::uint8_t>(h * w, 0));
}

std::vector<std::uint8_t> pixel_edge_flags(const Tensor& mask) {
  if (mask.rank() != 2) throw DimensionError("pixel_edge_flags expects an H x W mask");
  const std::size_t hh = mask.dim(0), ww = mask.dim(1);

  // Integral image with a zero row/column in front.
  std::vector<std::uint32_t> integral((hh + 1) * (ww + 1), 0);
  for (std::size_t y = 0; y < hh; ++y) {
    std::uint32_t run = 0;
    for (std::size_t x = 0; x < ww; ++x) {
      const float v = mask[y * ww + x];
      if (v != 0.0f && v != 1.0f) {
        throw InputError("edge map: mask value at (" + std::to_string(y) + "," +
                         std::to_string(x) + ") is not binary");
      }
      run += v != 0.0f ? 1u : 0u;
      integral[(y + 1) * (ww + 1) + x + 1] = integral[y * (ww + 1) + x + 1] + run;
    }
  }

  constexpr std::size_t r = kVarianceWindow / 2;
  constexpr std::uint32_t full = kVarianceWindow * kVarianceWindow;
  std::vector<std::uint8_t> flags(hh * ww, 0);
  for (std::size_t y = 0; y < hh; ++y) {
    const std::size_t y0 = y > r ? y - r : 0, y1 = std::min(hh, y + r + 1);
    for (std::size_t x = 0; x < ww; ++x) {
      const std::size_t x0 = x > r ? x - r : 0, x1 = std::min(ww, x + r + 1);
      const std::uint32_t s = integral[y1 * (ww + 1) + x1] - integral[y0 * (ww + 1) + x1] -
                              integral[y1 * (ww + 1) + x0] + integral[y0 * (ww + 1) + x0];
      flags[y * ww + x] = (s > 0 && s < full) ? 1 : 0;
    }
  }
  return flags;
}

EdgeMap compute_edge_map(const Tensor& prev_mask, std::size_t h, std::size_t w) {
  if (prev_mask.rank() != 2 || h == 0 || w == 0 || prev_mask.dim(0) % h != 0 ||
      prev_mask.dim(1) % w != 0) {
    throw DimensionError("compute_edge_map: mask " + shape_string(prev_mask.shape()) +
                         " is not divisible into a " + std::to_string(h) + "x" +
                         std::to_string(w) + " token grid");
  }
  const std::size_t ww = prev_mask.dim(1);
  const std::size_t fh = prev_mask.dim(0) / h, fw = ww / w;
  const auto pixel = pixel_edge_flags(prev_mask);
  std::vector<std::uint8_t> tokens(h * w, 0);
  for (std::size_t y = 0; y < prev_mask.dim(0); ++y) {
    for (std::size_t x = 0; x < ww; ++x) {
      if (pixel[y * ww + x]) tokens[(y / fh) * w + x / fw] = 1;
    }
  }
  return EdgeMap::from_flags(h, w, std::move(tokens));
}

EdgeMap route_tokens(const Tensor& prev_mask, std::size_t h, std::size_t w) {
  const bool any = std::any_of(prev_mask.values().begin(), prev_mask.values().end(),
                               [](float v) { return v != 0.0f; });
  if (!any) {
    if (prev_mask.rank() != 2 || prev_mask.dim(0) % h != 0 || prev_mask.dim(1) % w != 0) {
      throw DimensionError("route_tokens: mask not divisible into token grid");
    }
    return EdgeMap::all_edge(h, w);
  }
  return compute_edge_map(prev_mask, h, w);
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  if (x.rank() != 2) throw DimensionError("gather_rows expects a rank-2 tensor");
  const std::size_t d = x.dim(1);
  Tensor out({rows.size(), d});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= x.dim(0)) throw DimensionError("gather_rows: row index out of range");
    std::memcpy(out.data() + i * d, x.data() + rows[i] * d, d * sizeof(float));
  }
  return out;
}

Partition partition(const Tensor& x, const EdgeMap& em) {
  if (x.rank() != 2 || x.dim(0) != em.tokens()) {
    throw DimensionError("partition: " + shape_string(x.shape()) + " vs " +
                         std::to_string(em.tokens()) + " tokens");
  }
  return {gather_rows(x, em.edge_idx), gather_rows(x, em.nonedge_idx)};
}

Tensor scatter(const Tensor& y_edge, const Tensor& y_nonedge, const EdgeMap& em) {
  if (y_edge.rank() != 2 || y_nonedge.rank() != 2 || y_edge.dim(0) != em.edge_idx.size() ||
      y_nonedge.dim(0) != em.nonedge_idx.size() || y_edge.dim(1) != y_nonedge.dim(1)) {
    throw DimensionError("scatter: part sizes " + shape_string(y_edge.shape()) + " + " +
                         shape_string(y_nonedge.shape()) + " do not match the edge map");
  }
  const std::size_t d = y_edge.dim(1);
  Tensor out({em.tokens(), d});
  for (std::size_t i = 0; i < em.edge_idx.size(); ++i)
    std::memcpy(out.data() + em.edge_idx[i] * d, y_edge.data() + i * d, d * sizeof(float));
  for (std::size_t i = 0; i < em.nonedge_idx.size(); ++i)
    std::memcpy(out.data() + em.nonedge_idx[i] * d, y_nonedge.data() + i * d,
                d * sizeof(float));
  return out;
}

}  // namespace hseg::routing
