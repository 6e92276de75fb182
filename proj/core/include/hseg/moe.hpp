#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "hseg/kernels.hpp"
#include "hseg/routing.hpp"
#include "hseg/tensor.hpp"

/// Hybrid mixture of experts: every token runs the shared expert, edge tokens
/// also run one routed expert picked by centroid affinity.
namespace hseg::moe {

/// Two-layer FFN d -> 4d -> d with GELU in between.
struct ExpertFfn {
  kernels::Layer fc1;  // weight [d x 4d], bias [4d]
  kernels::Layer fc2;  // weight [4d x d], bias [d]

  std::size_t model_dim() const { return fc1.weight.dim(0); }
  std::size_t hidden_dim() const { return fc1.weight.dim(1); }
};

struct ExpertBank {
  std::vector<ExpertFfn> routed;
  ExpertFfn shared;
  Tensor centroids;  // [(M+1) x d], row M belongs to the shared expert

  std::size_t experts() const noexcept { return routed.size(); }
  std::size_t model_dim() const { return shared.model_dim(); }

  // Throws DimensionError unless all experts agree in shape with the centroids.
  void validate() const;
};

/// Stable grouping of edge tokens by expert id.
struct ExpertDispatch {
  std::vector<std::size_t> perm;           // sorted position -> token
  std::vector<std::size_t> group_offsets;  // M + 1 boundaries into perm
  std::vector<std::size_t> inverse_perm;   // token -> sorted position

  std::size_t experts() const noexcept {
    return group_offsets.empty() ? 0 : group_offsets.size() - 1;
  }
  std::size_t group_size(std::size_t i) const {
    return group_offsets[i + 1] - group_offsets[i];
  }
};

/// s[t, i] = sigmoid(x_t . e_i) over all M + 1 centroids.
Tensor affinity(const Tensor& x, const Tensor& centroids);

/// Argmax over the routed columns 0..M-1 (the last column is the shared
/// expert and never wins). Ties go to the lowest index.
std::vector<std::uint32_t> route_top1(const Tensor& scores);

/// Counting sort of assignments into `experts` groups; equal ids keep their
/// input order. Throws InputError for ids >= experts.
ExpertDispatch build_dispatch(std::span<const std::uint32_t> assignments, std::size_t experts);

/// Routed expert and its affinity for one edge token, plus the shared score.
struct TokenRoute {
  std::uint32_t expert;
  float score;
  float shared_score;
};

/// Single-token FFN (vector-matrix products).
std::vector<float> ffn_token(std::span<const float> x, const ExpertFfn& ffn);

/// Batched FFN over rows of x [n x d].
Tensor ffn_rows(const Tensor& x, const ExpertFfn& ffn);

/// Shared expert alone when `route` is empty, otherwise
///   (e^{s_M} FFN_M(x) + e^{s_a} FFN_a(x)) / (e^{s_M} + e^{s_a}).
std::vector<float> hmoe_token(std::span<const float> x, const ExpertBank& bank,
                              const std::optional<TokenRoute>& route);

/// Wall-clock breakdown of one hmoe_parallel call, in milliseconds.
struct MoeProfile {
  std::vector<std::size_t> group_sizes;
  std::size_t threads = 1;
  double route_ms = 0.0;
  double sort_ms = 0.0;
  double gather_ms = 0.0;
  double matmul_ms = 0.0;
  double scatter_ms = 0.0;
  double total_ms = 0.0;
};

/// Token-rearrangement implementation. The shared expert runs once over all
/// rows; edge rows are sorted by expert and each group runs as blocked
/// matrix products. Work is split into fixed 64-row tasks, so the result does
/// not depend on `threads`.
Tensor hmoe_parallel(const Tensor& x, const routing::EdgeMap& em, const ExpertBank& bank,
                     std::size_t threads = 1, MoeProfile* profile = nullptr);

/// Per-token loop over hmoe_token. Reference and baseline.
Tensor hmoe_sequential(const Tensor& x, const routing::EdgeMap& em, const ExpertBank& bank);

}  // namespace hseg::moe
