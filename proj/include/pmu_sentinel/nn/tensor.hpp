// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "pmu_sentinel/error.hpp"

namespace pmu::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::string out = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(shape[i]);
  }
  return out + ")";
}

/// Dense row-major array of doubles with an explicit shape. Storage is
/// aligned to Eigen's packet size so vectorised reductions split the data
/// the same way on every run, whatever address the allocator returns.
class Tensor {
 public:
  using Buffer = std::vector<double, Eigen::aligned_allocator<double>>;

  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

  Tensor(Shape shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(data.begin(), data.end()) {
    if (element_count(shape_) != data_.size()) {
      throw ShapeError("tensor shape " + to_string(shape_) + " needs " +
                       std::to_string(element_count(shape_)) +
                       " values, got " + std::to_string(data_.size()));
    }
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  std::vector<double> storage() const { return {data_.begin(), data_.end()}; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  double at(std::size_t i, std::size_t j) const {
    return data_[i * shape_[1] + j];
  }
  double& at(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double at(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  /// Same data, new shape; element count must match.
  Tensor reshaped(Shape shape) const {
    if (element_count(shape) != data_.size()) {
      throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
    }
    Tensor out;
    out.shape_ = std::move(shape);
    out.data_ = data_;
    return out;
  }

  void fill(double value) { std::fill(data_.begin(), data_.end(), value); }

  bool all_finite() const {
    for (double v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  Buffer data_;
};

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixView = Eigen::Map<RowMatrix>;
using ConstMatrixView = Eigen::Map<const RowMatrix>;
using VectorView = Eigen::Map<Eigen::RowVectorXd>;
using ConstVectorView = Eigen::Map<const Eigen::RowVectorXd>;

inline MatrixView as_matrix(Tensor& t, std::size_t rows, std::size_t cols) {
  return MatrixView(t.data(), static_cast<Eigen::Index>(rows),
                    static_cast<Eigen::Index>(cols));
}
inline ConstMatrixView as_matrix(const Tensor& t, std::size_t rows,
                                 std::size_t cols) {
  return ConstMatrixView(t.data(), static_cast<Eigen::Index>(rows),
                         static_cast<Eigen::Index>(cols));
}
/// Rank-2 tensor viewed as its natural matrix.
inline MatrixView as_matrix(Tensor& t) {
  return as_matrix(t, t.dim(0), t.size() / t.dim(0));
}
inline ConstMatrixView as_matrix(const Tensor& t) {
  return as_matrix(t, t.dim(0), t.size() / t.dim(0));
}
inline VectorView as_row(Tensor& t) {
  return VectorView(t.data(), static_cast<Eigen::Index>(t.size()));
}
inline ConstVectorView as_row(const Tensor& t) {
  return ConstVectorView(t.data(), static_cast<Eigen::Index>(t.size()));
}

inline void require_shape(const Tensor& t, const Shape& expected,
                          const char* what) {
  if (t.shape() != expected) {
    throw ShapeError(std::string(what) + ": expected shape " +
                     to_string(expected) + ", got " + to_string(t.shape()));
  }
}

inline void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(what) + ": expected rank " +
                     std::to_string(rank) + " tensor, got shape " +
                     to_string(t.shape()));
  }
}

}  // namespace pmu::nn
