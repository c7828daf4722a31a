#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "dsvt/errors.hpp"

namespace dsvt {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_str(const Shape& shape);

// Dense row-major float32 array. Rows are the slices along the last axis.
class FeatureTensor {
 public:
  FeatureTensor() = default;
  explicit FeatureTensor(Shape shape, float fill = 0.0f)
      : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}
  FeatureTensor(Shape shape, std::vector<float> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    require(data_.size() == shape_numel(shape_),
            "tensor data size does not match shape " + shape_str(shape_));
  }

  const Shape& shape() const { return shape_; }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // Extent of the last axis.
  std::size_t row_width() const { return shape_.empty() ? 1 : shape_.back(); }
  std::size_t num_rows() const {
    const std::size_t w = row_width();
    return w == 0 ? 0 : data_.size() / w;
  }

  std::span<float> row(std::size_t i) {
    const std::size_t w = row_width();
    return {data_.data() + i * w, w};
  }
  std::span<const float> row(std::size_t i) const {
    const std::size_t w = row_width();
    return {data_.data() + i * w, w};
  }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::span<float> values() { return data_; }
  std::span<const float> values() const { return data_; }
  const std::vector<float>& storage() const { return data_; }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  // Same buffer, new shape with equal element count.
  FeatureTensor reshaped(Shape shape) const& {
    require(shape_numel(shape) == data_.size(), "reshape element count mismatch");
    return FeatureTensor(std::move(shape), data_);
  }

  bool all_finite() const;

  friend bool operator==(const FeatureTensor&, const FeatureTensor&) = default;

 private:
  Shape shape_;
  std::vector<float> data_;
};

}  // namespace dsvt
