#include "hseg/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <string>
#include <vector>

#include "hseg/error.hpp"
#include "hseg/instrument.hpp"

namespace hseg::kernels {

namespace {

constexpr std::size_t kPanel = 16;     // output columns held in registers
constexpr std::size_t kMicroRows = 4;  // rows per register tile
constexpr std::size_t kRowBlock = 64;  // rows sharing one pass over a b panel

// 8 floats; unaligned loads and stores go through memcpy.
typedef float v8 __attribute__((vector_size(32)));

inline v8 load8(const float* p) {
  v8 v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

inline void store8(float* p, v8 v) { std::memcpy(p, &v, sizeof v); }

// Each c element is the sum over t in increasing order, like the scalar tail.
inline void micro_tile4(const float* a, std::size_t lda, const float* b, std::size_t ldb,
                        float* c, std::size_t ldc, std::size_t k) {
  v8 c00 = {}, c01 = {}, c10 = {}, c11 = {}, c20 = {}, c21 = {}, c30 = {}, c31 = {};
  for (std::size_t t = 0; t < k; ++t) {
    const v8 b0 = load8(b + t * ldb), b1 = load8(b + t * ldb + 8);
    const float a0 = a[t], a1 = a[lda + t], a2 = a[2 * lda + t], a3 = a[3 * lda + t];
    c00 += a0 * b0;
    c01 += a0 * b1;
    c10 += a1 * b0;
    c11 += a1 * b1;
    c20 += a2 * b0;
    c21 += a2 * b1;
    c30 += a3 * b0;
    c31 += a3 * b1;
  }
  store8(c, c00);
  store8(c + 8, c01);
  store8(c + ldc, c10);
  store8(c + ldc + 8, c11);
  store8(c + 2 * ldc, c20);
  store8(c + 2 * ldc + 8, c21);
  store8(c + 3 * ldc, c30);
  store8(c + 3 * ldc + 8, c31);
}

inline void micro_tile1(const float* a, const float* b, std::size_t ldb, float* c,
                        std::size_t k) {
  v8 c0 = {}, c1 = {};
  for (std::size_t t = 0; t < k; ++t) {
    c0 += a[t] * load8(b + t * ldb);
    c1 += a[t] * load8(b + t * ldb + 8);
  }
  store8(c, c0);
  store8(c + 8, c1);
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(what) + ": expected rank " + std::to_string(rank) +
                         ", got " + shape_string(t.shape()));
  }
}

void gemm_raw(const float* a, const float* b, float* c, std::size_t m, std::size_t k,
              std::size_t n) {
  const std::size_t full = n - n % kPanel, rem = n - full;
  // Panels are copied to contiguous storage when several row tiles reuse them;
  // large power-of-two n otherwise maps every panel row to the same cache sets.
  // The ragged last panel is always copied, zero padded to kPanel columns.
  std::vector<float> packed;
  std::vector<float> tail;
  if (rem != 0) {
    tail.assign(k * kPanel, 0.0f);
    for (std::size_t t = 0; t < k; ++t)
      std::memcpy(tail.data() + t * kPanel, b + t * n + full, rem * sizeof(float));
  }
  float tile[kMicroRows * kPanel];
  for (std::size_t i0 = 0; i0 < m; i0 += kRowBlock) {
    const std::size_t iend = std::min(m, i0 + kRowBlock);
    const bool pack = iend - i0 >= 2 * kMicroRows;
    if (pack) packed.resize(k * kPanel);
    for (std::size_t j0 = 0; j0 < full; j0 += kPanel) {
      const float* bp = b + j0;
      std::size_t ldb = n;
      if (pack) {
        for (std::size_t t = 0; t < k; ++t)
          std::memcpy(packed.data() + t * kPanel, b + t * n + j0, kPanel * sizeof(float));
        bp = packed.data();
        ldb = kPanel;
      }
      std::size_t i = i0;
      for (; i + kMicroRows <= iend; i += kMicroRows)
        micro_tile4(a + i * k, k, bp, ldb, c + i * n + j0, n, k);
      for (; i < iend; ++i) micro_tile1(a + i * k, bp, ldb, c + i * n + j0, k);
    }
    if (rem == 0) continue;
    std::size_t i = i0;
    for (; i + kMicroRows <= iend; i += kMicroRows) {
      micro_tile4(a + i * k, k, tail.data(), kPanel, tile, kPanel, k);
      for (std::size_t r = 0; r < kMicroRows; ++r)
        std::memcpy(c + (i + r) * n + full, tile + r * kPanel, rem * sizeof(float));
    }
    for (; i < iend; ++i) {
      micro_tile1(a + i * k, tail.data(), kPanel, tile, k);
      std::memcpy(c + i * n + full, tile, rem * sizeof(float));
    }
  }
}

}  // namespace

void gemm(const float* a, const float* b, float* c, std::size_t m, std::size_t k,
          std::size_t n) {
  gemm_raw(a, b, c, m, k, n);
  instrument::record("gemm", 2ull * m * k * n, 4ull * (m * k + k * n + m * n));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  if (a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: inner extents differ: " + shape_string(a.shape()) + " * " +
                         shape_string(b.shape()));
  }
  Tensor c({a.dim(0), b.dim(1)});
  gemm(a.data(), b.data(), c.data(), a.dim(0), a.dim(1), b.dim(1));
  return c;
}

Tensor linear(const Tensor& x, const Tensor& w, std::span<const float> bias) {
  Tensor y = matmul(x, w);
  if (!bias.empty()) {
    if (bias.size() != y.dim(1)) throw DimensionError("linear: bias length mismatch");
    const std::size_t n = y.dim(1);
    for (std::size_t i = 0; i < y.dim(0); ++i) {
      float* r = y.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) r[j] += bias[j];
    }
  }
  return y;
}

void softmax_inplace(std::span<float> row) {
  if (row.empty()) return;
  const float mx = *std::max_element(row.begin(), row.end());
  float sum = 0.0f;
  for (float& v : row) {
    v = std::exp(v - mx);
    sum += v;
  }
  const float inv = 1.0f / sum;
  for (float& v : row) v *= inv;
}

Tensor softmax_rows(const Tensor& x) {
  require_rank(x, 2, "softmax_rows");
  for (float v : x.values()) {
    if (!std::isfinite(v)) throw NumericError("softmax_rows: non-finite input");
  }
  Tensor y = x;
  for (std::size_t i = 0; i < y.dim(0); ++i) softmax_inplace(y.row(i));
  return y;
}

Tensor conv2d(const Tensor& x, const Tensor& w, std::span<const float> bias,
              std::size_t stride, std::size_t pad) {
  require_rank(x, 3, "conv2d input");
  require_rank(w, 4, "conv2d weight");
  const std::size_t cin = x.dim(0), ih = x.dim(1), iw = x.dim(2);
  const std::size_t cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (w.dim(1) != cin) {
    throw DimensionError("conv2d: weight " + shape_string(w.shape()) + " vs input " +
                         shape_string(x.shape()));
  }
  if (stride == 0) throw DimensionError("conv2d: stride must be positive");
  if (ih + 2 * pad < kh || iw + 2 * pad < kw) {
    throw DimensionError("conv2d: output extent < 1 for input " + shape_string(x.shape()));
  }
  if (!bias.empty() && bias.size() != cout) throw DimensionError("conv2d: bias length");
  const std::size_t oh = (ih + 2 * pad - kh) / stride + 1;
  const std::size_t ow = (iw + 2 * pad - kw) / stride + 1;

  // Columns [cin*kh*kw x oh*ow], zero where the window leaves the input.
  const std::size_t kk = cin * kh * kw, np = oh * ow;
  std::vector<float> cols(kk * np, 0.0f);
  const auto sp = static_cast<std::ptrdiff_t>(pad);
  for (std::size_t ci = 0; ci < cin; ++ci) {
    const float* ip = x.data() + ci * ih * iw;
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx) {
        float* row = cols.data() + ((ci * kh + ky) * kw + kx) * np;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - sp;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(ih)) continue;
          const float* irow = ip + iy * static_cast<std::ptrdiff_t>(iw);
          float* orow = row + oy * ow;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - sp;
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(iw)) orow[ox] = irow[ix];
          }
        }
      }
    }
  }
  Tensor out({cout, oh, ow});
  gemm_raw(w.data(), cols.data(), out.data(), cout, kk, np);
  if (!bias.empty()) {
    for (std::size_t co = 0; co < cout; ++co) {
      float* op = out.data() + co * np;
      for (std::size_t i = 0; i < np; ++i) op[i] += bias[co];
    }
  }
  instrument::record("conv2d", 2ull * cout * oh * ow * cin * kh * kw,
                     4ull * (x.size() + w.size() + out.size()));
  return out;
}

Tensor deconv2d(const Tensor& x, const Tensor& w, std::span<const float> bias,
                std::size_t stride) {
  require_rank(x, 3, "deconv2d input");
  require_rank(w, 4, "deconv2d weight");
  const std::size_t cin = x.dim(0), ih = x.dim(1), iw = x.dim(2);
  const std::size_t cout = w.dim(1), k = w.dim(2);
  if (w.dim(0) != cin || w.dim(3) != k) {
    throw DimensionError("deconv2d: weight " + shape_string(w.shape()) + " vs input " +
                         shape_string(x.shape()));
  }
  if (k != stride || stride == 0) {
    throw DimensionError("deconv2d: kernel extent must equal stride (got k=" +
                         std::to_string(k) + ", stride=" + std::to_string(stride) + ")");
  }
  if (!bias.empty() && bias.size() != cout) throw DimensionError("deconv2d: bias length");
  const std::size_t oh = ih * stride, ow = iw * stride;

  Tensor out({cout, oh, ow});
  for (std::size_t co = 0; co < cout; ++co) {
    float* op = out.data() + co * oh * ow;
    std::fill(op, op + oh * ow, bias.empty() ? 0.0f : bias[co]);
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const float* ip = x.data() + ci * ih * iw;
      const float* wp = w.data() + (ci * cout + co) * k * k;
      for (std::size_t ky = 0; ky < k; ++ky) {
        for (std::size_t kx = 0; kx < k; ++kx) {
          const float wv = wp[ky * k + kx];
          for (std::size_t iy = 0; iy < ih; ++iy) {
            float* orow = op + (iy * stride + ky) * ow + kx;
            const float* irow = ip + iy * iw;
            for (std::size_t ix = 0; ix < iw; ++ix) orow[ix * stride] += wv * irow[ix];
          }
        }
      }
    }
  }
  instrument::record("deconv2d", 2ull * cout * oh * ow * cin,
                     4ull * (x.size() + w.size() + out.size()));
  return out;
}

Tensor maxpool_to(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  require_rank(x, 3, "maxpool_to");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (out_h == 0 || out_w == 0 || h % out_h != 0 || w % out_w != 0) {
    throw DimensionError("maxpool_to: " + shape_string(x.shape()) + " not divisible into " +
                         std::to_string(out_h) + "x" + std::to_string(out_w));
  }
  const std::size_t fh = h / out_h, fw = w / out_w;
  Tensor out({c, out_h, out_w}, -std::numeric_limits<float>::infinity());
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < h; ++y) {
      const float* row = x.data() + (ch * h + y) * w;
      float* orow = out.data() + (ch * out_h + y / fh) * out_w;
      for (std::size_t xx = 0; xx < w; ++xx) orow[xx / fw] = std::max(orow[xx / fw], row[xx]);
    }
  }
  return out;
}

Tensor uniform_avg_conv(const Tensor& x, std::size_t k) {
  require_rank(x, 3, "uniform_avg_conv");
  if (k % 2 == 0) throw DimensionError("uniform_avg_conv: window must be odd");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const auto r = static_cast<std::ptrdiff_t>(k / 2);
  const auto sh = static_cast<std::ptrdiff_t>(h), sw = static_cast<std::ptrdiff_t>(w);
  const float denom = static_cast<float>(k * k);
  Tensor out({c, h, w});
  for (std::size_t ch = 0; ch < c; ++ch) {
    const float* p = x.data() + ch * h * w;
    for (std::ptrdiff_t y = 0; y < sh; ++y) {
      for (std::ptrdiff_t xx = 0; xx < sw; ++xx) {
        float s = 0.0f;
        for (std::ptrdiff_t dy = -r; dy <= r; ++dy) {
          const std::ptrdiff_t yy = y + dy;
          if (yy < 0 || yy >= sh) continue;
          for (std::ptrdiff_t dx = -r; dx <= r; ++dx) {
            const std::ptrdiff_t xs = xx + dx;
            if (xs < 0 || xs >= sw) continue;
            s += p[yy * sw + xs];
          }
        }
        out[(ch * h + static_cast<std::size_t>(y)) * w + static_cast<std::size_t>(xx)] =
            s / denom;
      }
    }
  }
  return out;
}

float gelu(float x) {
  return 0.5f * x * (1.0f + std::erf(x * 0.70710678118654752f));
}

void gelu_inplace(std::span<float> x) {
  for (float& v : x) v = gelu(v);
}

float sigmoid(float x) { return 1.0f / (1.0f + std::exp(-x)); }

Tensor layer_norm_rows(const Tensor& x, std::span<const float> gamma,
                       std::span<const float> beta, float eps) {
  require_rank(x, 2, "layer_norm_rows");
  const std::size_t n = x.dim(1);
  if (gamma.size() != n || beta.size() != n) {
    throw DimensionError("layer_norm_rows: parameter length mismatch");
  }
  Tensor y({x.dim(0), n});
  for (std::size_t i = 0; i < x.dim(0); ++i) {
    const float* r = x.data() + i * n;
    float mean = 0.0f;
    for (std::size_t j = 0; j < n; ++j) mean += r[j];
    mean /= static_cast<float>(n);
    float var = 0.0f;
    for (std::size_t j = 0; j < n; ++j) var += (r[j] - mean) * (r[j] - mean);
    var /= static_cast<float>(n);
    const float inv = 1.0f / std::sqrt(var + eps);
    float* o = y.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) o[j] = (r[j] - mean) * inv * gamma[j] + beta[j];
  }
  return y;
}

void add_inplace(Tensor& dst, const Tensor& src) {
  if (dst.shape() != src.shape()) {
    throw DimensionError("add_inplace: " + shape_string(dst.shape()) + " vs " +
                         shape_string(src.shape()));
  }
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace hseg::kernels
