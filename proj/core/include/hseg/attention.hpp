#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "hseg/routing.hpp"
#include "hseg/tensor.hpp"

/// Full attention, binary spherical quantization (BSQ), BSQ attention and the
/// edge-routed hybrid layer that combines them.
namespace hseg::attention {

/// Projections for one attention layer. Q/K/V use a reduced width C split
/// evenly across `heads`.
struct AttnWeights {
  Tensor wq;  // [d x C]
  Tensor wk;  // [d x C]
  Tensor wv;  // [d x C]
  Tensor wo;  // [C x d]
  std::size_t heads = 1;

  std::size_t model_dim() const { return wq.dim(0); }
  std::size_t attn_dim() const { return wq.dim(1); }
  std::size_t head_dim() const { return wq.dim(1) / heads; }
};

/// Implicit 2^S-entry codebook built from two banks of S base vectors.
///
/// Entry m is the sum over bits j of base1[j] when bit j of m is set and
/// base0[j] otherwise. The expanded table is materialized once at
/// construction; S is limited to 16 so it stays bounded.
class BsqCodebook {
 public:
  static constexpr std::size_t kMaxBits = 16;

  /// projection [C x S], base1 / base0 [S x C].
  BsqCodebook(Tensor projection, Tensor base1, Tensor base0);

  std::size_t bits() const noexcept { return bits_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t entries() const noexcept { return std::size_t{1} << bits_; }

  const Tensor& projection() const noexcept { return projection_; }
  const Tensor& base1() const noexcept { return base1_; }
  const Tensor& base0() const noexcept { return base0_; }
  const Tensor& expanded() const noexcept { return expanded_; }

 private:
  std::size_t bits_;
  std::size_t dim_;
  Tensor projection_;
  Tensor base1_;
  Tensor base0_;
  Tensor expanded_;  // [2^S x C]
};

/// Precomputed 2-D rotary position embedding for an h x w token grid.
///
/// Channels are rotated in adjacent pairs. The first half of the pairs is
/// driven by the token row, the second half by the column, each with
/// frequencies base^(-j / (pairs/2)).
class RopeTable {
 public:
  RopeTable(std::size_t grid_h, std::size_t grid_w, std::size_t head_dim, float base = 100.0f);

  std::size_t positions() const noexcept { return grid_h_ * grid_w_; }
  std::size_t head_dim() const noexcept { return head_dim_; }

  void rotate(std::span<float> vec, std::size_t position) const;

  /// Rotates row i of x [n x head_dim] by positions[i].
  Tensor apply(const Tensor& x, std::span<const std::size_t> positions) const;

 private:
  std::size_t grid_h_;
  std::size_t grid_w_;
  std::size_t head_dim_;
  std::vector<float> cos_;  // [positions x pairs]
  std::vector<float> sin_;
};

/// Softmax(q k^T / sqrt(C)) v. When `rope` is given, q and k are rotated by
/// their token positions first.
Tensor full_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                      const RopeTable* rope = nullptr, std::span<const std::size_t> q_pos = {},
                      std::span<const std::size_t> k_pos = {});

struct BsqQuantized {
  Tensor u_hat;                      // [N x S], entries +-1/sqrt(S)
  std::vector<std::uint32_t> codes;  // bit j set iff u_hat[., j] > 0
  std::size_t zero_norm_rows = 0;    // rows quantized with the all-positive tie rule
};

/// Project, normalize onto the unit sphere, and binarize each key. sign(0) is
/// taken as +1, so a zero projection quantizes to the all-ones code.
BsqQuantized bsq_quantize(const Tensor& k, const BsqCodebook& cb);

/// Codebook lookup: row n is expanded()[codes[n]].
Tensor quantized_keys(std::span<const std::uint32_t> codes, const BsqCodebook& cb);

/// The same keys through the bit-matrix product [I, 1 - I] * [base1; base0].
Tensor quantized_keys_matmul(std::span<const std::uint32_t> codes, const BsqCodebook& cb);

/// Full attention over the quantized keys. Reference for bsqa_linear.
Tensor bsqa_dense(const Tensor& q, const Tensor& k, const Tensor& v, const BsqCodebook& cb,
                  const RopeTable* rope = nullptr, std::span<const std::size_t> q_pos = {},
                  std::span<const std::size_t> k_pos = {});

/// Linear-time attention over quantized keys.
///
/// Values and counts are accumulated per code, then every query attends to
/// the occupied codebook entries only:
///   out = sum_m e_m * vsum_m / sum_m e_m * count_m,  e_m = exp(q.c_m / sqrt(C) - max)
/// Cost is O(N C S + Nq K C) with K <= 2^S occupied codes.
Tensor bsqa_linear(const Tensor& q, const Tensor& k, const Tensor& v, const BsqCodebook& cb);

/// Nearest-neighbour assignment against the expanded codebook (diagnostic).
std::vector<std::uint32_t> vq_assign(const Tensor& k, const BsqCodebook& cb);

/// Hybrid attention layer over tokens x [L x d]: edge queries use full
/// attention with RoPE, non-edge queries use bsqa_linear; both attend to all
/// L keys. One codebook per head.
Tensor dha_forward(const Tensor& x, const routing::EdgeMap& em, const AttnWeights& w,
                   std::span<const BsqCodebook> codebooks, const RopeTable& rope);

}  // namespace hseg::attention
