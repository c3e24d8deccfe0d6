#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/StdVector>

namespace dare {

#if defined(DARE_REAL_FLOAT32)
using Real = float;
#else
using Real = double;
#endif

using Shape = std::vector<std::int64_t>;

// Storage is aligned to Eigen's widest packet. Eigen peels unaligned heads off
// vectorized reductions, so without a fixed alignment the summation order (and
// the last bits of a sum) would depend on where the allocator placed the data.
using Storage = std::vector<Real, Eigen::aligned_allocator<Real>>;

using MatrixR = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<MatrixR>;
using ConstMatMap = Eigen::Map<const MatrixR>;
using VecMap = Eigen::Map<Eigen::Matrix<Real, Eigen::Dynamic, 1>>;
using ConstVecMap = Eigen::Map<const Eigen::Matrix<Real, Eigen::Dynamic, 1>>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::int64_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major array. Copies are deep; a Tensor owns its storage.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, Real fill = Real{0});
  Tensor(Shape shape, std::vector<Real> data);

  static Tensor from(std::initializer_list<std::initializer_list<Real>> rows);
  static Tensor vector(std::vector<Real> values);
  static Tensor scalar(Real value);

  const Shape& shape() const { return shape_; }
  std::int64_t rank() const { return static_cast<std::int64_t>(shape_.size()); }
  std::int64_t dim(std::int64_t axis) const;
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  Real* data() { return data_.data(); }
  const Real* data() const { return data_.data(); }
  std::span<Real> values() { return data_; }
  std::span<const Real> values() const { return data_; }
  const Storage& storage() const { return data_; }

  Real& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  Real operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }
  Real& at(std::int64_t r, std::int64_t c);
  Real at(std::int64_t r, std::int64_t c) const;
  Real item() const;

  // Same storage interpreted with a new shape of equal element count.
  Tensor reshaped(Shape shape) const;

  // 2-D views; rank-1 tensors are treated as a single row.
  MatMap matrix();
  ConstMatMap matrix() const;
  // View as rows x (numel / rows).
  MatMap matrix(std::int64_t rows);
  ConstMatMap matrix(std::int64_t rows) const;

  bool all_finite() const;
  // Throws NonFiniteError naming `what` when any entry is NaN or infinite.
  void require_finite(const char* what) const;

  void fill(Real value);
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  Storage data_;
};

// Standard matrix product of 2-D tensors.
Tensor matmul(const Tensor& a, const Tensor& b);

// Numerically stable softmax along `axis` (max-subtracted).
Tensor softmax(const Tensor& x, std::int64_t axis);

double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace dare
