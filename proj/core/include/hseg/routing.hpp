#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "hseg/tensor.hpp"

/// Boundary detection on the previous mask and the edge / non-edge token split.
namespace hseg::routing {

inline constexpr std::size_t kVarianceWindow = 7;

/// Token-grid routing flags plus both sorted index lists.
struct EdgeMap {
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<std::uint8_t> flags;
  std::vector<std::size_t> edge_idx;
  std::vector<std::size_t> nonedge_idx;

  static EdgeMap from_flags(std::size_t h, std::size_t w, std::vector<std::uint8_t> flags);
  static EdgeMap all_edge(std::size_t h, std::size_t w);
  static EdgeMap all_nonedge(std::size_t h, std::size_t w);

  std::size_t tokens() const noexcept { return h * w; }
};

/// Pixel-level boundary flags of a binary H x W mask: 1 where the zero-padded
/// 7x7 window has nonzero variance. Decided exactly from the integer window
/// sum s: variance > 0 iff 0 < s < 49.
std::vector<std::uint8_t> pixel_edge_flags(const Tensor& mask);

/// Pixel flags max-pooled onto an h x w token grid. An all-zero mask yields no
/// edge tokens. Throws InputError for non-binary masks.
EdgeMap compute_edge_map(const Tensor& prev_mask, std::size_t h, std::size_t w);

/// Routing used by the decoder: compute_edge_map, except that an all-zero
/// previous mask (no prior prediction) routes every token as an edge token.
EdgeMap route_tokens(const Tensor& prev_mask, std::size_t h, std::size_t w);

struct Partition {
  Tensor edge;     // [|E| x d]
  Tensor nonedge;  // [|N| x d]
};

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);

/// Splits rows of x [L x d] by the edge map, each part in ascending index order.
Partition partition(const Tensor& x, const EdgeMap& em);

/// Exact inverse of partition.
Tensor scatter(const Tensor& y_edge, const Tensor& y_nonedge, const EdgeMap& em);

}  // namespace hseg::routing
