#include "hseg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "hseg/error.hpp"

namespace hseg {

namespace {

void check_rank(const Shape& shape) {
  if (shape.empty() || shape.size() > 4) {
    throw DimensionError("tensor rank must be 1-4, got " + std::to_string(shape.size()));
  }
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)) {
  check_rank(shape_);
  data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<float> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  check_rank(shape_);
  if (shape_numel(shape_) != data_.size()) {
    throw DimensionError("tensor shape " + shape_string(shape_) + " does not match " +
                         std::to_string(data_.size()) + " values");
  }
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<float>> rows) {
  const std::size_t m = rows.size();
  const std::size_t n = m ? rows.begin()->size() : 0;
  std::vector<float> v;
  v.reserve(m * n);
  for (const auto& r : rows) {
    if (r.size() != n) throw DimensionError("ragged rows in Tensor::from_rows");
    v.insert(v.end(), r.begin(), r.end());
  }
  return Tensor({m, n}, std::move(v));
}

std::size_t Tensor::dim(std::size_t i) const {
  if (i >= shape_.size()) {
    throw DimensionError("axis " + std::to_string(i) + " out of range for " +
                         shape_string(shape_));
  }
  return shape_[i];
}

Tensor Tensor::reshaped(Shape shape) const& {
  Tensor t = *this;
  return std::move(t).reshaped(std::move(shape));
}

Tensor Tensor::reshaped(Shape shape) && {
  check_rank(shape);
  if (shape_numel(shape) != data_.size()) {
    throw DimensionError("cannot reshape " + shape_string(shape_) + " to " +
                         shape_string(shape));
  }
  shape_ = std::move(shape);
  return std::move(*this);
}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

Tensor channels_to_tokens(const Tensor& chw) {
  if (chw.rank() != 3) throw DimensionError("channels_to_tokens expects [c x h x w]");
  const std::size_t c = chw.dim(0);
  const std::size_t n = chw.dim(1) * chw.dim(2);
  Tensor out({n, c});
  for (std::size_t ch = 0; ch < c; ++ch) {
    const float* src = chw.data() + ch * n;
    for (std::size_t t = 0; t < n; ++t) out[t * c + ch] = src[t];
  }
  return out;
}

Tensor tokens_to_channels(const Tensor& tokens, std::size_t h, std::size_t w) {
  if (tokens.rank() != 2 || tokens.dim(0) != h * w) {
    throw DimensionError("tokens_to_channels: expected [" + std::to_string(h * w) +
                         " x c], got " + shape_string(tokens.shape()));
  }
  const std::size_t c = tokens.dim(1);
  const std::size_t n = h * w;
  Tensor out({c, h, w});
  for (std::size_t t = 0; t < n; ++t) {
    const float* src = tokens.data() + t * c;
    for (std::size_t ch = 0; ch < c; ++ch) out[ch * n + t] = src[ch];
  }
  return out;
}

Tensor transpose(const Tensor& m) {
  if (m.rank() != 2) throw DimensionError("transpose expects a rank-2 tensor");
  const std::size_t r = m.dim(0), c = m.dim(1);
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = m[i * c + j];
  return out;
}

float max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("max_abs_diff: " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
  float m = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

}  // namespace hseg
