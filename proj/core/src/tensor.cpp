#include "encprop/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace encprop {

namespace {

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) +
                                " vs " + shape_to_string(b.shape()));
  }
}

void require_rank2(const Tensor& a, const char* op) {
  if (a.rank() != 2) {
    throw std::invalid_argument(std::string(op) + ": expected a rank-2 tensor, got " +
                                shape_to_string(a.shape()));
  }
}

template <typename F>
Tensor map(const Tensor& a, F f) {
  Tensor out(a.shape());
  auto src = a.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
  return out;
}

template <typename F>
Tensor zip(const Tensor& a, const Tensor& b, const char* op, F f) {
  require_same_shape(a, b, op);
  Tensor out(a.shape());
  auto x = a.data();
  auto y = b.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) dst[i] = f(x[i], y[i]);
  return out;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(element_count(shape_), 0.0) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (element_count(shape_) != data_.size()) {
    throw std::invalid_argument("Tensor: shape " + shape_to_string(shape_) + " does not hold " +
                                std::to_string(data_.size()) + " values");
  }
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values) {
  return Tensor({rows, cols}, std::vector<double>(values));
}

std::size_t Tensor::rows() const {
  if (shape_.empty()) return 1;
  if (shape_.size() == 1) return 1;
  return size() / shape_.back();
}

std::size_t Tensor::cols() const { return shape_.empty() ? 1 : shape_.back(); }

std::span<const double> Tensor::row(std::size_t r) const {
  return std::span<const double>(data_).subspan(r * cols(), cols());
}

std::span<double> Tensor::row(std::size_t r) { return std::span<double>(data_).subspan(r * cols(), cols()); }

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

Tensor add(const Tensor& a, const Tensor& b) {
  return zip(a, b, "add", [](double x, double y) { return x + y; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return zip(a, b, "sub", [](double x, double y) { return x - y; });
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  return zip(a, b, "hadamard", [](double x, double y) { return x * y; });
}

Tensor scale(const Tensor& a, double c) {
  if (!std::isfinite(c)) throw std::invalid_argument("scale: factor must be finite");
  return map(a, [c](double x) { return x * c; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw std::invalid_argument("matmul: inner dimensions disagree " + shape_to_string(a.shape()) + " * " +
                                shape_to_string(b.shape()));
  }
  Tensor c({m, n});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* pc = c.data().data();
  // i-k-j order: each c[i][j] still receives its k products in ascending k.
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = pc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul_tn");
  require_rank2(b, "matmul_tn");
  const std::size_t r = a.shape()[0], m = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != r) {
    throw std::invalid_argument("matmul_tn: row counts disagree " + shape_to_string(a.shape()) + " vs " +
                                shape_to_string(b.shape()));
  }
  Tensor c({m, n});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* pc = c.data().data();
  for (std::size_t row = 0; row < r; ++row) {
    const double* brow = pb + row * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = pa[row * m + i];
      double* crow = pc + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul_nt");
  require_rank2(b, "matmul_nt");
  const std::size_t k = a.shape()[1], n = b.shape()[0];
  if (b.shape()[1] != k) {
    throw std::invalid_argument("matmul_nt: inner dimensions disagree " + shape_to_string(a.shape()) + " vs " +
                                shape_to_string(b.shape()));
  }
  // Transposing b up front keeps the inner loop contiguous.
  Tensor bt({k, n});
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t p = 0; p < k; ++p) bt.at(p, j) = b.at(j, p);
  return matmul(a, bt);
}

Tensor add_rows(const Tensor& a, const Tensor& r) {
  if (r.shape() == a.shape()) return add(a, r);
  if (r.rows() != 1 || r.cols() != a.cols()) {
    throw std::invalid_argument("add_rows: cannot add " + shape_to_string(r.shape()) + " to rows of " +
                                shape_to_string(a.shape()));
  }
  Tensor out = a;
  const std::size_t n = a.cols();
  auto dst = out.data();
  auto src = r.data();
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < n; ++j) dst[i * n + j] += src[j];
  return out;
}

Tensor column_sums(const Tensor& a) {
  const std::size_t n = a.cols();
  Tensor out({n});
  auto src = a.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < n; ++j) dst[j] += src[i * n + j];
  return out;
}

Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis) {
  if (a.rank() != b.rank() || axis >= a.rank()) {
    throw std::invalid_argument("concat: incompatible shapes " + shape_to_string(a.shape()) + " and " +
                                shape_to_string(b.shape()) + " on axis " + std::to_string(axis));
  }
  for (std::size_t d = 0; d < a.rank(); ++d) {
    if (d != axis && a.shape()[d] != b.shape()[d]) {
      throw std::invalid_argument("concat: incompatible shapes " + shape_to_string(a.shape()) + " and " +
                                  shape_to_string(b.shape()) + " on axis " + std::to_string(axis));
    }
  }
  Shape shape = a.shape();
  shape[axis] += b.shape()[axis];

  std::size_t outer = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= a.shape()[d];
  std::size_t inner = 1;
  for (std::size_t d = axis + 1; d < a.rank(); ++d) inner *= a.shape()[d];
  const std::size_t chunk_a = a.shape()[axis] * inner;
  const std::size_t chunk_b = b.shape()[axis] * inner;

  std::vector<double> data;
  data.reserve(a.size() + b.size());
  auto pa = a.data();
  auto pb = b.data();
  for (std::size_t o = 0; o < outer; ++o) {
    data.insert(data.end(), pa.begin() + o * chunk_a, pa.begin() + (o + 1) * chunk_a);
    data.insert(data.end(), pb.begin() + o * chunk_b, pb.begin() + (o + 1) * chunk_b);
  }
  return Tensor(std::move(shape), std::move(data));
}

std::pair<Tensor, Tensor> split(const Tensor& a, std::size_t axis, std::size_t index) {
  if (axis >= a.rank() || index > a.shape()[axis]) {
    throw std::invalid_argument("split: index " + std::to_string(index) + " out of range for " +
                                shape_to_string(a.shape()) + " on axis " + std::to_string(axis));
  }
  Shape sa = a.shape(), sb = a.shape();
  sa[axis] = index;
  sb[axis] = a.shape()[axis] - index;

  std::size_t outer = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= a.shape()[d];
  std::size_t inner = 1;
  for (std::size_t d = axis + 1; d < a.rank(); ++d) inner *= a.shape()[d];
  const std::size_t chunk_a = sa[axis] * inner;
  const std::size_t chunk_b = sb[axis] * inner;

  std::vector<double> da, db;
  da.reserve(outer * chunk_a);
  db.reserve(outer * chunk_b);
  auto src = a.data();
  for (std::size_t o = 0; o < outer; ++o) {
    auto base = src.begin() + o * (chunk_a + chunk_b);
    da.insert(da.end(), base, base + chunk_a);
    db.insert(db.end(), base + chunk_a, base + chunk_a + chunk_b);
  }
  return {Tensor(std::move(sa), std::move(da)), Tensor(std::move(sb), std::move(db))};
}

Tensor silu(const Tensor& a) {
  return map(a, [](double x) { return x * sigmoid(x); });
}

Tensor silu_grad(const Tensor& a) {
  return map(a, [](double x) {
    const double s = sigmoid(x);
    return s * (1.0 + x * (1.0 - s));
  });
}

double frobenius_norm(const Tensor& a) {
  if (a.empty()) throw std::invalid_argument("frobenius_norm: empty tensor");
  double sum = 0.0;
  for (double v : a.data()) sum += v * v;
  return std::sqrt(sum);
}

double mse(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mse");
  if (a.empty()) throw std::invalid_argument("mse: empty tensors");
  double sum = 0.0;
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    sum += d * d;
  }
  return sum / static_cast<double>(x.size());
}

}  // namespace encprop
