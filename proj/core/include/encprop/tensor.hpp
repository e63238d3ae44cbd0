#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace encprop {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);

// Dense row-major array of doubles. A value type: every operation below
// returns a fresh tensor and never mutates its arguments.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);  // zero-filled
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor vector(std::initializer_list<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // Row count of a rank-2 tensor; 1 for a rank-1 tensor.
  std::size_t rows() const;
  // Extent of the last axis ("width" of a feature vector).
  std::size_t cols() const;

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }
  std::span<const double> row(std::size_t r) const;
  std::span<double> row(std::size_t r);

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }

  bool all_finite() const;

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor hadamard(const Tensor& a, const Tensor& b);

// [m x k] * [k x n]. For every output element the k products are summed
// left to right starting from 0.0, so results are reproducible bit for bit.
Tensor matmul(const Tensor& a, const Tensor& b);
// a^T * b for a [r x m], b [r x n]; sums over r in row order.
Tensor matmul_tn(const Tensor& a, const Tensor& b);
// a * b^T for a [m x k], b [n x k].
Tensor matmul_nt(const Tensor& a, const Tensor& b);

// Adds a single row (shape [n] or [1 x n]) to every row of `a`, or an
// exactly-shaped tensor elementwise.
Tensor add_rows(const Tensor& a, const Tensor& row_or_same);
// Column sums of a rank-2 tensor, accumulated in row order. Shape [n].
Tensor column_sums(const Tensor& a);

Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis);
// Inverse of concat: splits `a` along `axis` at `index`.
std::pair<Tensor, Tensor> split(const Tensor& a, std::size_t axis, std::size_t index);

Tensor silu(const Tensor& a);
// d silu(x)/dx evaluated elementwise.
Tensor silu_grad(const Tensor& a);

double frobenius_norm(const Tensor& a);
// Per-element mean squared difference, (1/N)·||a - b||².
double mse(const Tensor& a, const Tensor& b);

}  // namespace encprop
