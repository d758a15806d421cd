#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace rgcoref {

/// Raised when operand shapes do not conform.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using Shape = std::vector<std::size_t>;

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

/**
 * Dense row-major tensor. Most of the library works with rank-2 tensors
 * (rows x cols) and rank-1 vectors; higher ranks are only carried around.
 */
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0))
      : shape_(std::move(shape)), data_(element_count(shape_), fill) {}
  Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)), data_(std::move(values)) {
    if (data_.size() != element_count(shape_))
      throw ShapeError("tensor of shape " + shape_string(shape_) + " given " +
                       std::to_string(data_.size()) + " values");
  }

  static Tensor matrix(std::size_t rows, std::size_t cols, T fill = T(0)) {
    return Tensor({rows, cols}, fill);
  }
  static Tensor matrix(std::initializer_list<std::initializer_list<T>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<T> values;
    values.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw ShapeError("ragged matrix literal");
      values.insert(values.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(values));
  }
  static Tensor vector(std::size_t n, T fill = T(0)) { return Tensor({n}, fill); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::size_t rows() const {
    require_matrix();
    return shape_[0];
  }
  std::size_t cols() const {
    require_matrix();
    return shape_[1];
  }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }
  T& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols(), cols()}; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  /// Same values, new shape of equal element count.
  Tensor reshaped(Shape shape) const& {
    Tensor out = *this;
    out.reshape(std::move(shape));
    return out;
  }
  void reshape(Shape shape) {
    if (element_count(shape) != data_.size())
      throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    shape_ = std::move(shape);
  }

  Tensor& operator+=(const Tensor& other) {
    require_same_shape(other, "+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

  void require_same_shape(const Tensor& other, const char* what) const {
    if (shape_ != other.shape_)
      throw ShapeError(std::string(what) + ": shape " + shape_string(shape_) + " vs " +
                       shape_string(other.shape_));
  }

 private:
  static std::size_t element_count(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
  }
  void require_matrix() const {
    if (shape_.size() != 2) throw ShapeError("expected a matrix, got " + shape_string(shape_));
  }

  Shape shape_;
  std::vector<T> data_;
};

template <typename T>
using RowMajor = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
Eigen::Map<RowMajor<T>> as_eigen(Tensor<T>& t) {
  return {t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}
template <typename T>
Eigen::Map<const RowMajor<T>> as_eigen(const Tensor<T>& t) {
  return {t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}
template <typename T>
Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> as_eigen_vector(Tensor<T>& t) {
  return {t.data(), static_cast<Eigen::Index>(t.size())};
}
template <typename T>
Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> as_eigen_vector(const Tensor<T>& t) {
  return {t.data(), static_cast<Eigen::Index>(t.size())};
}

/// a * b
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul " + shape_string(a.shape()) + " * " + shape_string(b.shape()));
  Tensor<T> out = Tensor<T>::matrix(a.rows(), b.cols());
  if (!out.empty() && a.cols() > 0) as_eigen(out).noalias() = as_eigen(a) * as_eigen(b);
  return out;
}

/// aᵀ * b
template <typename T>
Tensor<T> matmul_tn(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rows() != b.rows())
    throw ShapeError("matmul_tn " + shape_string(a.shape()) + " * " + shape_string(b.shape()));
  Tensor<T> out = Tensor<T>::matrix(a.cols(), b.cols());
  if (!out.empty() && a.rows() > 0) as_eigen(out).noalias() = as_eigen(a).transpose() * as_eigen(b);
  return out;
}

/// a * bᵀ
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.cols() != b.cols())
    throw ShapeError("matmul_nt " + shape_string(a.shape()) + " * " + shape_string(b.shape()));
  Tensor<T> out = Tensor<T>::matrix(a.rows(), b.rows());
  if (!out.empty() && a.cols() > 0) as_eigen(out).noalias() = as_eigen(a) * as_eigen(b).transpose();
  return out;
}

/// Column-wise concatenation of matrices with equal row counts.
template <typename T>
Tensor<T> concat_cols(const std::vector<const Tensor<T>*>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols of nothing");
  const std::size_t rows = parts.front()->rows();
  std::size_t cols = 0;
  for (const auto* p : parts) {
    if (p->rows() != rows) throw ShapeError("concat_cols row mismatch");
    cols += p->cols();
  }
  Tensor<T> out = Tensor<T>::matrix(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    T* dst = out.data() + r * cols;
    for (const auto* p : parts) dst = std::copy_n(p->data() + r * p->cols(), p->cols(), dst);
  }
  return out;
}

/// Inverse of concat_cols: the column block [begin, begin + width).
template <typename T>
Tensor<T> slice_cols(const Tensor<T>& t, std::size_t begin, std::size_t width) {
  if (begin + width > t.cols()) throw ShapeError("slice_cols out of range");
  Tensor<T> out = Tensor<T>::matrix(t.rows(), width);
  for (std::size_t r = 0; r < t.rows(); ++r)
    std::copy_n(t.data() + r * t.cols() + begin, width, out.data() + r * width);
  return out;
}

}  // namespace rgcoref
