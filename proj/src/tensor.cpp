#include "ouroboros/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <sstream>

#include "ouroboros/kernels.hpp"

namespace ouro {

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "x" : "") << shape[i];
  out << ']';
  return out.str();
}

std::size_t element_count(const Shape& shape) {
  if (shape.empty()) return 0;
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

namespace {

void check_rank(const Shape& shape) {
  if (shape.empty() || shape.size() > 3) {
    throw DimensionError("tensor rank must be 1..3, got shape " + shape_string(shape));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

}  // namespace

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
  check_rank(shape_);
  data_.assign(element_count(shape_), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  check_rank(shape_);
  if (data_.size() != element_count(shape_)) {
    throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_string(shape_));
  }
}

Tensor Tensor::filled(Shape shape, double value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t cols = rows.size() ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(rows.size() * cols);
  for (const auto& row : rows) {
    if (row.size() != cols) throw DimensionError("from_rows: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({rows.size(), cols}, std::move(data));
}

Tensor Tensor::reshaped(Shape shape) const& {
  Tensor copy = *this;
  return std::move(copy).reshaped(std::move(shape));
}

Tensor Tensor::reshaped(Shape shape) && {
  check_rank(shape);
  if (element_count(shape) != data_.size()) {
    throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  Tensor out;
  out.shape_ = std::move(shape);
  out.data_ = std::move(data_);
  shape_.clear();
  return out;
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

void Tensor::require_finite(const char* what) const {
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      throw NonFiniteError(std::string(what) + ": non-finite value at element " +
                           std::to_string(i) + " of " + shape_string(shape_));
    }
  }
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  return a.size() == 0 || std::memcmp(a.raw(), b.raw(), a.size() * sizeof(double)) == 0;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double squared_norm(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  return s;
}

bool all_zero(const Tensor& a) {
  return std::all_of(a.data().begin(), a.data().end(), [](double v) { return v == 0.0; });
}

std::uint64_t checksum(const Tensor& a) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](std::uint64_t word) {
    h ^= word;
    h *= 1099511628211ULL;
  };
  for (auto d : a.shape()) mix(static_cast<std::uint64_t>(d));
  for (double v : a.data()) mix(std::bit_cast<std::uint64_t>(v));
  return h;
}

Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b) {
  if (op == ElementwiseOp::scale) {
    if (b.size() != 1) throw DimensionError("scale: expects a scalar operand");
    return elementwise(op, a, b[0]);
  }
  if (b.rank() == 1 && b.size() == 1 && a.size() != 1) return elementwise(op, a, b[0]);
  require_same_shape(a, b, "elementwise");
  Tensor out(a.shape());
  const std::size_t n = a.size();
  switch (op) {
    case ElementwiseOp::add: kernels::parallel::add(a.raw(), b.raw(), out.raw(), n); break;
    case ElementwiseOp::sub: kernels::parallel::sub(a.raw(), b.raw(), out.raw(), n); break;
    case ElementwiseOp::mul: kernels::parallel::mul(a.raw(), b.raw(), out.raw(), n); break;
    case ElementwiseOp::scale: break;
  }
  out.require_finite("elementwise");
  return out;
}

Tensor elementwise(ElementwiseOp op, const Tensor& a, double scalar) {
  Tensor out(a.shape());
  const std::size_t n = a.size();
  const double* src = a.raw();
  double* dst = out.raw();
  switch (op) {
    case ElementwiseOp::add:
      for (std::size_t i = 0; i < n; ++i) dst[i] = src[i] + scalar;
      break;
    case ElementwiseOp::sub:
      for (std::size_t i = 0; i < n; ++i) dst[i] = src[i] - scalar;
      break;
    case ElementwiseOp::mul:
    case ElementwiseOp::scale:
      kernels::parallel::scale(src, scalar, dst, n);
      break;
  }
  out.require_finite("elementwise");
  return out;
}

void accumulate(Tensor& acc, const Tensor& x) {
  require_same_shape(acc, x, "accumulate");
  double* dst = acc.raw();
  const double* src = x.raw();
  for (std::size_t i = 0; i < acc.size(); ++i) dst[i] += src[i];
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw DimensionError("matmul: expects rank-2 operands, got " + shape_string(a.shape()) +
                         " and " + shape_string(b.shape()));
  }
  if (a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: inner dimensions disagree " + shape_string(a.shape()) +
                         " * " + shape_string(b.shape()));
  }
  Tensor c({a.dim(0), b.dim(1)});
  kernels::parallel::matmul(a.raw(), b.raw(), c.raw(), a.dim(0), a.dim(1), b.dim(1));
  c.require_finite("matmul");
  return c;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw DimensionError("transpose: expects rank 2, got " + shape_string(a.shape()));
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor t({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) t[j * m + i] = a[i * n + j];
  return t;
}

}  // namespace ouro
