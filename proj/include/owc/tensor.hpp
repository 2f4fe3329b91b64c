#pragma once

#include <Eigen/Dense>

#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "owc/errors.hpp"

namespace owc {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

inline Index shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>{});
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

/// Dense n-dimensional array stored row-major. For network inputs and
/// outputs the leading extent is the batch, so every sample occupies a
/// contiguous block and `samples()` views the data as a (sample_size x batch)
/// column-major matrix with one column per sample.
template <typename Scalar_>
class Tensor {
 public:
  using Scalar = Scalar_;

  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    validate_shape();
    data_ = VectorX<Scalar>::Zero(shape_size(shape_));
  }

  Tensor(Shape shape, VectorX<Scalar> data) : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape();
    if (data_.size() != shape_size(shape_)) {
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_string(shape_));
    }
  }

  /// Batch tensor from a (sample_size x batch) matrix; `sample_shape` gives
  /// the per-sample extents.
  template <typename Derived>
  static Tensor from_samples(const Eigen::MatrixBase<Derived>& samples, Shape sample_shape = {}) {
    if (sample_shape.empty()) sample_shape = {samples.rows()};
    if (shape_size(sample_shape) != samples.rows()) {
      throw DimensionError("sample shape " + shape_string(sample_shape) + " does not match " +
                           std::to_string(samples.rows()) + " rows");
    }
    Shape shape{samples.cols()};
    shape.insert(shape.end(), sample_shape.begin(), sample_shape.end());
    Tensor t(std::move(shape));
    Eigen::Map<MatrixX<Scalar>>(t.data_.data(), samples.rows(), samples.cols()) = samples;
    return t;
  }

  const Shape& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index size() const { return data_.size(); }
  Index batch() const { return shape_.empty() ? 0 : shape_.front(); }
  Index sample_size() const { return batch() == 0 ? 0 : size() / batch(); }
  Shape sample_shape() const { return shape_.empty() ? Shape{} : Shape(shape_.begin() + 1, shape_.end()); }

  VectorX<Scalar>& data() { return data_; }
  const VectorX<Scalar>& data() const { return data_; }

  Eigen::Map<MatrixX<Scalar>> samples() { return {data_.data(), sample_size(), batch()}; }
  Eigen::Map<const MatrixX<Scalar>> samples() const { return {data_.data(), sample_size(), batch()}; }

  Scalar& operator[](Index i) { return data_[i]; }
  Scalar operator[](Index i) const { return data_[i]; }

  bool all_finite() const { return data_.allFinite(); }

  template <typename To>
  Tensor<To> cast() const {
    return Tensor<To>(shape_, data_.template cast<To>());
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void validate_shape() const {
    for (Index e : shape_) {
      if (e <= 0) throw DimensionError("tensor extents must be positive, got " + shape_string(shape_));
    }
  }

  Shape shape_;
  VectorX<Scalar> data_;
};

using TensorD = Tensor<double>;
using TensorF = Tensor<float>;

}  // namespace owc
