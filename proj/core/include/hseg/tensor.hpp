#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace hseg {

using Shape = std::vector<std::size_t>;

/// Dense row-major float32 array of rank 1-4.
///
/// Extents may be zero so that empty partitions (no edge tokens, no queries)
/// are representable; every other invariant holds: size() equals the product
/// of the extents.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> values);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor filled(Shape shape, float v) { return Tensor(std::move(shape), v); }
  static Tensor from_rows(std::initializer_list<std::initializer_list<float>> rows);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const;
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  float* data() noexcept { return data_.data(); }
  const float* data() const noexcept { return data_.data(); }
  std::span<float> values() noexcept { return data_; }
  std::span<const float> values() const noexcept { return data_; }

  float& operator[](std::size_t i) noexcept { return data_[i]; }
  float operator[](std::size_t i) const noexcept { return data_[i]; }

  float& at(std::size_t i, std::size_t j) noexcept { return data_[i * shape_[1] + j]; }
  float at(std::size_t i, std::size_t j) const noexcept { return data_[i * shape_[1] + j]; }
  float& at(std::size_t c, std::size_t i, std::size_t j) noexcept {
    return data_[(c * shape_[1] + i) * shape_[2] + j];
  }
  float at(std::size_t c, std::size_t i, std::size_t j) const noexcept {
    return data_[(c * shape_[1] + i) * shape_[2] + j];
  }

  // Row view over the last axis of a rank-2 tensor.
  std::span<float> row(std::size_t i) { return {data_.data() + i * shape_[1], shape_[1]}; }
  std::span<const float> row(std::size_t i) const {
    return {data_.data() + i * shape_[1], shape_[1]};
  }

  // Channel plane of a rank-3 tensor.
  std::span<float> plane(std::size_t c) {
    const std::size_t n = shape_[1] * shape_[2];
    return {data_.data() + c * n, n};
  }
  std::span<const float> plane(std::size_t c) const {
    const std::size_t n = shape_[1] * shape_[2];
    return {data_.data() + c * n, n};
  }

  Tensor reshaped(Shape shape) const&;
  Tensor reshaped(Shape shape) &&;

  void fill(float v);

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<float> data_;
};

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

// [c x h x w] <-> [(h*w) x c] token layouts.
Tensor channels_to_tokens(const Tensor& chw);
Tensor tokens_to_channels(const Tensor& tokens, std::size_t h, std::size_t w);

// Rank-2 transpose.
Tensor transpose(const Tensor& m);

// Largest |a - b| over all elements; throws DimensionError on shape mismatch.
float max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace hseg
