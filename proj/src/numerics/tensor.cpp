#include "dare/numerics/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dare {

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) {
    if (d <= 0) throw ShapeError("tensor dimensions must be positive, got " + shape_string(shape));
    n *= d;
  }
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, Real fill)
    : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_numel(shape_)), fill) {}

Tensor::Tensor(Shape shape, std::vector<Real> data) : shape_(std::move(shape)), data_(data.begin(), data.end()) {
  if (shape_numel(shape_) != static_cast<std::int64_t>(data_.size())) {
    throw ShapeError("shape " + shape_string(shape_) + " does not match " + std::to_string(data_.size()) +
                     " values");
  }
}

Tensor Tensor::from(std::initializer_list<std::initializer_list<Real>> rows) {
  const auto r = static_cast<std::int64_t>(rows.size());
  if (r == 0) throw ShapeError("empty initializer");
  const auto c = static_cast<std::int64_t>(rows.begin()->size());
  std::vector<Real> data;
  data.reserve(static_cast<std::size_t>(r * c));
  for (const auto& row : rows) {
    if (static_cast<std::int64_t>(row.size()) != c) throw ShapeError("ragged initializer");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

Tensor Tensor::vector(std::vector<Real> values) {
  const auto n = static_cast<std::int64_t>(values.size());
  return Tensor({n}, std::move(values));
}

Tensor Tensor::scalar(Real value) { return Tensor({1}, std::vector<Real>{value}); }

std::int64_t Tensor::dim(std::int64_t axis) const {
  if (axis < 0) axis += rank();
  if (axis < 0 || axis >= rank()) throw ShapeError("axis out of range for " + shape_string(shape_));
  return shape_[static_cast<std::size_t>(axis)];
}

Real& Tensor::at(std::int64_t r, std::int64_t c) { return data_[static_cast<std::size_t>(r * shape_.back() + c)]; }

Real Tensor::at(std::int64_t r, std::int64_t c) const {
  return data_[static_cast<std::size_t>(r * shape_.back() + c)];
}

Real Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("item() requires exactly one element, shape " + shape_string(shape_));
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != size()) {
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  Tensor out;
  out.shape_ = std::move(shape);
  out.data_ = data_;
  return out;
}

MatMap Tensor::matrix() {
  const std::int64_t cols = shape_.empty() ? 1 : shape_.back();
  return MatMap(data_.data(), size() / cols, cols);
}

ConstMatMap Tensor::matrix() const {
  const std::int64_t cols = shape_.empty() ? 1 : shape_.back();
  return ConstMatMap(data_.data(), size() / cols, cols);
}

MatMap Tensor::matrix(std::int64_t rows) { return MatMap(data_.data(), rows, size() / rows); }

ConstMatMap Tensor::matrix(std::int64_t rows) const { return ConstMatMap(data_.data(), rows, size() / rows); }

bool Tensor::all_finite() const {
  return ConstVecMap(data_.data(), static_cast<Eigen::Index>(data_.size())).allFinite();
}

void Tensor::require_finite(const char* what) const {
  if (!all_finite()) throw NonFiniteError(std::string("non-finite value produced by ") + what);
}

void Tensor::fill(Real value) { std::fill(data_.begin(), data_.end(), value); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) throw ShapeError("matmul expects 2-D operands");
  if (a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul inner dimensions disagree: " + shape_string(a.shape()) + " x " +
                     shape_string(b.shape()));
  }
  Tensor out({a.dim(0), b.dim(1)});
  out.matrix().noalias() = a.matrix() * b.matrix();
  out.require_finite("matmul");
  return out;
}

Tensor softmax(const Tensor& x, std::int64_t axis) {
  if (axis < 0) axis += x.rank();
  if (axis < 0 || axis >= x.rank()) throw ShapeError("softmax axis out of range");
  std::int64_t outer = 1, inner = 1;
  for (std::int64_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::int64_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const std::int64_t n = x.dim(axis);
  Tensor out(x.shape());
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t in = 0; in < inner; ++in) {
      const std::int64_t base = o * n * inner + in;
      Real mx = x[base];
      for (std::int64_t k = 1; k < n; ++k) mx = std::max(mx, x[base + k * inner]);
      Real sum = 0;
      for (std::int64_t k = 0; k < n; ++k) {
        const Real e = std::exp(x[base + k * inner] - mx);
        out[base + k * inner] = e;
        sum += e;
      }
      for (std::int64_t k = 0; k < n; ++k) out[base + k * inner] /= sum;
    }
  }
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw ShapeError("max_abs_diff shape mismatch");
  double m = 0;
  for (std::int64_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  }
  return m;
}

}  // namespace dare
