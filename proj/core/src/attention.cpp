#include "hseg/attention.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <string>

#include "hseg/error.hpp"
#include "hseg/instrument.hpp"
#include "hseg/kernels.hpp"

namespace hseg::attention {

namespace {

constexpr std::size_t kQueryBlock = 32;

void check_qkv(const Tensor& q, const Tensor& k, const Tensor& v, const char* op) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2) {
    throw DimensionError(std::string(op) + ": q, k, v must be rank 2");
  }
  if (q.dim(1) != k.dim(1) || k.dim(0) != v.dim(0)) {
    throw DimensionError(std::string(op) + ": q " + shape_string(q.shape()) + ", k " +
                         shape_string(k.shape()) + ", v " + shape_string(v.shape()));
  }
  if (k.dim(0) == 0) throw InputError(std::string(op) + ": empty key set");
}

Tensor column_slice(const Tensor& x, std::size_t begin, std::size_t width) {
  const std::size_t n = x.dim(0), c = x.dim(1);
  Tensor out({n, width});
  for (std::size_t i = 0; i < n; ++i)
    std::memcpy(out.data() + i * width, x.data() + i * c + begin, width * sizeof(float));
  return out;
}

void put_columns(Tensor& dst, const Tensor& src, std::size_t begin) {
  const std::size_t n = src.dim(0), width = src.dim(1), c = dst.dim(1);
  for (std::size_t i = 0; i < n; ++i)
    std::memcpy(dst.data() + i * c + begin, src.data() + i * width, width * sizeof(float));
}

}  // namespace

// ---------------------------------------------------------------------------
// BsqCodebook

BsqCodebook::BsqCodebook(Tensor projection, Tensor base1, Tensor base0)
    : projection_(std::move(projection)), base1_(std::move(base1)), base0_(std::move(base0)) {
  if (projection_.rank() != 2 || base1_.rank() != 2 || base0_.rank() != 2) {
    throw DimensionError("BsqCodebook: tensors must be rank 2");
  }
  dim_ = projection_.dim(0);
  bits_ = projection_.dim(1);
  if (bits_ == 0 || bits_ > kMaxBits) {
    throw DimensionError("BsqCodebook: code bits must be in 1..16, got " +
                         std::to_string(bits_));
  }
  if (base1_.shape() != Shape{bits_, dim_} || base0_.shape() != Shape{bits_, dim_}) {
    throw DimensionError("BsqCodebook: base banks must be [S x C] = [" +
                         std::to_string(bits_) + " x " + std::to_string(dim_) + "]");
  }
  expanded_ = Tensor({entries(), dim_});
  for (std::size_t m = 0; m < entries(); ++m) {
    float* row = expanded_.data() + m * dim_;
    for (std::size_t j = 0; j < bits_; ++j) {
      const float* base = ((m >> j) & 1u) ? base1_.data() + j * dim_ : base0_.data() + j * dim_;
      for (std::size_t c = 0; c < dim_; ++c) row[c] += base[c];
    }
  }
}

// ---------------------------------------------------------------------------
// RopeTable

RopeTable::RopeTable(std::size_t grid_h, std::size_t grid_w, std::size_t head_dim, float base)
    : grid_h_(grid_h), grid_w_(grid_w), head_dim_(head_dim) {
  if (head_dim == 0 || head_dim % 4 != 0) {
    throw DimensionError("RopeTable: head dim must be a positive multiple of 4, got " +
                         std::to_string(head_dim));
  }
  const std::size_t pairs = head_dim / 2, half = pairs / 2;
  cos_.resize(positions() * pairs);
  sin_.resize(positions() * pairs);
  for (std::size_t p = 0; p < positions(); ++p) {
    const double row = static_cast<double>(p / grid_w), col = static_cast<double>(p % grid_w);
    for (std::size_t j = 0; j < pairs; ++j) {
      const std::size_t f = j % half;
      const double freq = std::pow(static_cast<double>(base),
                                   -static_cast<double>(f) / static_cast<double>(half));
      const double angle = (j < half ? row : col) * freq;
      cos_[p * pairs + j] = static_cast<float>(std::cos(angle));
      sin_[p * pairs + j] = static_cast<float>(std::sin(angle));
    }
  }
}

void RopeTable::rotate(std::span<float> vec, std::size_t position) const {
  if (vec.size() != head_dim_ || position >= positions()) {
    throw DimensionError("RopeTable::rotate: vector or position out of range");
  }
  const std::size_t pairs = head_dim_ / 2;
  const float* cs = cos_.data() + position * pairs;
  const float* sn = sin_.data() + position * pairs;
  for (std::size_t j = 0; j < pairs; ++j) {
    const float a = vec[2 * j], b = vec[2 * j + 1];
    vec[2 * j] = a * cs[j] - b * sn[j];
    vec[2 * j + 1] = a * sn[j] + b * cs[j];
  }
}

Tensor RopeTable::apply(const Tensor& x, std::span<const std::size_t> positions) const {
  if (x.rank() != 2 || x.dim(1) != head_dim_ || positions.size() != x.dim(0)) {
    throw DimensionError("RopeTable::apply: expected [" + std::to_string(positions.size()) +
                         " x " + std::to_string(head_dim_) + "], got " +
                         shape_string(x.shape()));
  }
  Tensor out = x;
  for (std::size_t i = 0; i < x.dim(0); ++i) rotate(out.row(i), positions[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Full attention

Tensor full_attention(const Tensor& q, const Tensor& k, const Tensor& v, const RopeTable* rope,
                      std::span<const std::size_t> q_pos, std::span<const std::size_t> k_pos) {
  check_qkv(q, k, v, "full_attention");
  const std::size_t nq = q.dim(0), n = k.dim(0), c = q.dim(1), cv = v.dim(1);

  Tensor qr, kt;
  if (rope != nullptr) {
    qr = rope->apply(q, q_pos);
    kt = transpose(rope->apply(k, k_pos));
  } else {
    qr = q;
    kt = transpose(k);
  }

  const float scale = 1.0f / std::sqrt(static_cast<float>(c));
  Tensor out({nq, cv});
  std::vector<float> logits(kQueryBlock * n);
  for (std::size_t q0 = 0; q0 < nq; q0 += kQueryBlock) {
    const std::size_t qb = std::min(kQueryBlock, nq - q0);
    kernels::gemm(qr.data() + q0 * c, kt.data(), logits.data(), qb, c, n);
    for (std::size_t i = 0; i < qb; ++i) {
      std::span<float> row(logits.data() + i * n, n);
      for (float& l : row) l *= scale;
      kernels::softmax_inplace(row);
    }
    kernels::gemm(logits.data(), v.data(), out.data() + q0 * cv, qb, n, cv);
  }
  instrument::record("full_attention", 2ull * nq * n * (c + cv) + 4ull * nq * n,
                     4ull * (q.size() + k.size() + v.size() + out.size()));
  return out;
}

// ---------------------------------------------------------------------------
// BSQ

BsqQuantized bsq_quantize(const Tensor& k, const BsqCodebook& cb) {
  if (k.rank() != 2 || k.dim(1) != cb.dim()) {
    throw DimensionError("bsq_quantize: keys " + shape_string(k.shape()) + " vs codebook dim " +
                         std::to_string(cb.dim()));
  }
  const std::size_t n = k.dim(0), s = cb.bits();
  Tensor proj = kernels::matmul(k, cb.projection());
  const float mag = 1.0f / std::sqrt(static_cast<float>(s));

  BsqQuantized out{Tensor({n, s}), std::vector<std::uint32_t>(n, 0), 0};
  for (std::size_t i = 0; i < n; ++i) {
    const float* b = proj.data() + i * s;
    float norm2 = 0.0f;
    for (std::size_t j = 0; j < s; ++j) norm2 += b[j] * b[j];
    if (norm2 == 0.0f) ++out.zero_norm_rows;
    const float inv = norm2 > 0.0f ? 1.0f / std::sqrt(norm2) : 0.0f;
    std::uint32_t code = 0;
    for (std::size_t j = 0; j < s; ++j) {
      const float u = b[j] * inv;
      const bool positive = !(u < 0.0f);
      out.u_hat[i * s + j] = positive ? mag : -mag;
      if (positive) code |= 1u << j;
    }
    out.codes[i] = code;
  }
  return out;
}

Tensor quantized_keys(std::span<const std::uint32_t> codes, const BsqCodebook& cb) {
  const std::size_t c = cb.dim();
  Tensor out({codes.size(), c});
  for (std::size_t i = 0; i < codes.size(); ++i) {
    if (codes[i] >= cb.entries()) {
      throw InputError("quantized_keys: code " + std::to_string(codes[i]) + " out of range");
    }
    std::memcpy(out.data() + i * c, cb.expanded().data() + codes[i] * c, c * sizeof(float));
  }
  return out;
}

Tensor quantized_keys_matmul(std::span<const std::uint32_t> codes, const BsqCodebook& cb) {
  const std::size_t s = cb.bits(), c = cb.dim(), n = codes.size();
  Tensor bits({n, 2 * s});
  for (std::size_t i = 0; i < n; ++i) {
    if (codes[i] >= cb.entries()) {
      throw InputError("quantized_keys_matmul: code " + std::to_string(codes[i]) +
                       " out of range");
    }
    for (std::size_t j = 0; j < s; ++j) {
      const float bit = ((codes[i] >> j) & 1u) ? 1.0f : 0.0f;
      bits[i * 2 * s + j] = bit;
      bits[i * 2 * s + s + j] = 1.0f - bit;
    }
  }
  Tensor stacked({2 * s, c});
  std::memcpy(stacked.data(), cb.base1().data(), s * c * sizeof(float));
  std::memcpy(stacked.data() + s * c, cb.base0().data(), s * c * sizeof(float));
  return kernels::matmul(bits, stacked);
}

Tensor bsqa_dense(const Tensor& q, const Tensor& k, const Tensor& v, const BsqCodebook& cb,
                  const RopeTable* rope, std::span<const std::size_t> q_pos,
                  std::span<const std::size_t> k_pos) {
  check_qkv(q, k, v, "bsqa_dense");
  const BsqQuantized quant = bsq_quantize(k, cb);
  return full_attention(q, quantized_keys(quant.codes, cb), v, rope, q_pos, k_pos);
}

Tensor bsqa_linear(const Tensor& q, const Tensor& k, const Tensor& v, const BsqCodebook& cb) {
  check_qkv(q, k, v, "bsqa_linear");
  if (q.dim(1) != cb.dim()) throw DimensionError("bsqa_linear: codebook dim mismatch");
  const std::size_t nq = q.dim(0), n = k.dim(0), c = q.dim(1), cv = v.dim(1);
  const BsqQuantized quant = bsq_quantize(k, cb);

  // Per-code value sums with the key count appended as an extra column, so a
  // single product yields numerator and denominator.
  const std::size_t aug = cv + 1;
  std::vector<float> table(cb.entries() * aug, 0.0f);
  for (std::size_t j = 0; j < n; ++j) {
    float* dst = table.data() + quant.codes[j] * aug;
    const float* src = v.data() + j * cv;
    for (std::size_t t = 0; t < cv; ++t) dst[t] += src[t];
    dst[cv] += 1.0f;
  }
  std::vector<std::uint32_t> occupied;
  for (std::size_t m = 0; m < cb.entries(); ++m)
    if (table[m * aug + cv] > 0.0f) occupied.push_back(static_cast<std::uint32_t>(m));
  const std::size_t kocc = occupied.size();

  Tensor codes_t({c, kocc});
  std::vector<float> values(kocc * aug);
  for (std::size_t i = 0; i < kocc; ++i) {
    const float* entry = cb.expanded().data() + occupied[i] * c;
    for (std::size_t t = 0; t < c; ++t) codes_t[t * kocc + i] = entry[t];
    std::memcpy(values.data() + i * aug, table.data() + occupied[i] * aug, aug * sizeof(float));
  }

  const float scale = 1.0f / std::sqrt(static_cast<float>(c));
  Tensor out({nq, cv});
  std::vector<float> weights(kQueryBlock * kocc);
  std::vector<float> acc(kQueryBlock * aug);
  for (std::size_t q0 = 0; q0 < nq; q0 += kQueryBlock) {
    const std::size_t qb = std::min(kQueryBlock, nq - q0);
    kernels::gemm(q.data() + q0 * c, codes_t.data(), weights.data(), qb, c, kocc);
    for (std::size_t i = 0; i < qb; ++i) {
      float* row = weights.data() + i * kocc;
      float mx = -std::numeric_limits<float>::infinity();
      for (std::size_t m = 0; m < kocc; ++m) {
        row[m] *= scale;
        mx = std::max(mx, row[m]);
      }
      for (std::size_t m = 0; m < kocc; ++m) row[m] = std::exp(row[m] - mx);
    }
    kernels::gemm(weights.data(), values.data(), acc.data(), qb, kocc, aug);
    for (std::size_t i = 0; i < qb; ++i) {
      const float inv = 1.0f / acc[i * aug + cv];
      float* dst = out.data() + (q0 + i) * cv;
      for (std::size_t t = 0; t < cv; ++t) dst[t] = acc[i * aug + t] * inv;
    }
  }
  const std::size_t s = cb.bits();
  instrument::record("bsqa_linear",
                     2ull * n * c * s + 4ull * n * s + 1ull * n * (cv + 1) +
                         2ull * nq * kocc * (c + aug) + 3ull * nq * kocc + 1ull * nq * cv,
                     4ull * (q.size() + k.size() + v.size() + out.size() + kocc * (c + aug)));
  return out;
}

std::vector<std::uint32_t> vq_assign(const Tensor& k, const BsqCodebook& cb) {
  if (k.rank() != 2 || k.dim(1) != cb.dim()) throw DimensionError("vq_assign: dim mismatch");
  const std::size_t c = cb.dim();
  std::vector<std::uint32_t> out(k.dim(0));
  for (std::size_t i = 0; i < k.dim(0); ++i) {
    const float* key = k.data() + i * c;
    float best = std::numeric_limits<float>::infinity();
    for (std::size_t m = 0; m < cb.entries(); ++m) {
      const float* e = cb.expanded().data() + m * c;
      float d2 = 0.0f;
      for (std::size_t t = 0; t < c; ++t) d2 += (key[t] - e[t]) * (key[t] - e[t]);
      if (d2 < best) {
        best = d2;
        out[i] = static_cast<std::uint32_t>(m);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Hybrid layer

Tensor dha_forward(const Tensor& x, const routing::EdgeMap& em, const AttnWeights& w,
                   std::span<const BsqCodebook> codebooks, const RopeTable& rope) {
  if (x.rank() != 2 || x.dim(0) != em.tokens() || x.dim(1) != w.model_dim()) {
    throw DimensionError("dha_forward: tokens " + shape_string(x.shape()) + " vs grid " +
                         std::to_string(em.tokens()) + " x " + std::to_string(w.model_dim()));
  }
  if (w.heads == 0 || w.attn_dim() % w.heads != 0 || codebooks.size() != w.heads) {
    throw DimensionError("dha_forward: need one codebook per head and C divisible by heads");
  }
  const std::size_t l = x.dim(0), hd = w.head_dim();
  if (rope.head_dim() != hd || rope.positions() != l) {
    throw DimensionError("dha_forward: RoPE table does not match the token grid");
  }

  const Tensor q = kernels::matmul(x, w.wq);
  const Tensor k = kernels::matmul(x, w.wk);
  const Tensor v = kernels::matmul(x, w.wv);

  std::vector<std::size_t> all(l);
  for (std::size_t i = 0; i < l; ++i) all[i] = i;

  Tensor merged({l, w.attn_dim()});
  for (std::size_t h = 0; h < w.heads; ++h) {
    const Tensor qh = column_slice(q, h * hd, hd);
    const Tensor kh = column_slice(k, h * hd, hd);
    const Tensor vh = column_slice(v, h * hd, hd);
    const routing::Partition parts = routing::partition(qh, em);

    Tensor y_edge = parts.edge.dim(0) > 0
                        ? full_attention(parts.edge, kh, vh, &rope, em.edge_idx, all)
                        : Tensor({0, hd});
    Tensor y_nonedge = bsqa_linear(parts.nonedge, kh, vh, codebooks[h]);
    put_columns(merged, routing::scatter(y_edge, y_nonedge, em), h * hd);
  }
  return kernels::matmul(merged, w.wo);
}

}  // namespace hseg::attention
