#include <gtest/gtest.h>

#include <cmath>
#include <stdexcept>

#include "encprop/tensor.hpp"
#include "test_util.hpp"

using namespace encprop;
using encprop::testing::random_tensor;
using encprop::testing::rel_err;

TEST(Tensor, ShapeMustMatchData) {
  EXPECT_THROW(Tensor({2, 2}, {1.0, 2.0, 3.0}), std::invalid_argument);
  const Tensor t({2, 3});
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
}

TEST(Tensor, AddExamples) {
  EXPECT_EQ(add(Tensor::vector({1, 2}), Tensor::vector({3, 4})), Tensor::vector({4, 6}));
  const Tensor x = random_tensor({3, 4}, 1);
  EXPECT_EQ(add(x, Tensor::zeros({3, 4})), x);
  const Tensor y = random_tensor({3, 4}, 2);
  EXPECT_EQ(add(x, y), add(y, x));
}

TEST(Tensor, AddShapeMismatchNamesBothShapes) {
  try {
    add(Tensor({2, 3}), Tensor({3, 2}));
    FAIL() << "expected a throw";
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[3x2]"), std::string::npos) << msg;
  }
}

TEST(Tensor, ScaleExamples) {
  EXPECT_EQ(scale(Tensor::vector({1, 2}), 0), Tensor::vector({0, 0}));
  EXPECT_EQ(scale(Tensor::vector({1, 2}), 1), Tensor::vector({1, 2}));
  // Powers of two keep the product exact.
  const Tensor x = random_tensor({5}, 3);
  EXPECT_EQ(scale(scale(x, 0.5), 4.0), scale(x, 2.0));
  for (int i = 0; i < 5; ++i) {
    const double a = 0.1 * (i + 1), b = -1.7 + i;
    const Tensor lhs = scale(scale(x, a), b), rhs = scale(x, a * b);
    for (std::size_t j = 0; j < x.size(); ++j) EXPECT_LT(rel_err(lhs[j], rhs[j]), 1e-15);
  }
  EXPECT_THROW(scale(x, std::nan("")), std::invalid_argument);
}

TEST(Tensor, MatmulExamples) {
  const Tensor id = Tensor::matrix(2, 2, {1, 0, 0, 1});
  const Tensor m = Tensor::matrix(2, 2, {1, 2, 3, 4});
  EXPECT_EQ(matmul(id, m), m);
  EXPECT_EQ(matmul(Tensor::matrix(1, 2, {1, 2}), Tensor::matrix(2, 1, {3, 4})), Tensor::matrix(1, 1, {11}));
  EXPECT_THROW(matmul(Tensor({2, 3}), Tensor({2, 3})), std::invalid_argument);
}

TEST(Tensor, MatmulMatchesTripleLoopExactly) {
  const Tensor a = random_tensor({5, 7}, 11), b = random_tensor({7, 3}, 12);
  const Tensor c = matmul(a, b);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < 7; ++k) acc += a.at(i, k) * b.at(k, j);
      EXPECT_EQ(c.at(i, j), acc);
    }
  }
}

TEST(Tensor, TransposedProductsMatchExplicitTranspose) {
  const Tensor a = random_tensor({6, 4}, 21), b = random_tensor({6, 3}, 22), c = random_tensor({5, 4}, 23);
  Tensor at({4, 6}), ct({4, 5});
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 4; ++j) at.at(j, i) = a.at(i, j);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 4; ++j) ct.at(j, i) = c.at(i, j);
  EXPECT_EQ(matmul_tn(a, b), matmul(at, b));
  EXPECT_EQ(matmul_nt(a, c), matmul(a, ct));
}

TEST(Tensor, MatmulIsReproducible) {
  const Tensor a = random_tensor({64, 48}, 5), b = random_tensor({48, 32}, 6);
  EXPECT_EQ(matmul(a, b), matmul(a, b));
}

TEST(Tensor, ConcatExamples) {
  EXPECT_EQ(concat(Tensor::vector({1, 2}), Tensor::vector({3}), 0), Tensor::vector({1, 2, 3}));
  const Tensor x = Tensor::vector({4, 5});
  EXPECT_EQ(concat(x, Tensor({0}), 0), x);
  EXPECT_THROW(concat(Tensor({2, 3}), Tensor({3, 2}), 1), std::invalid_argument);

  const Tensor m = concat(Tensor::matrix(2, 1, {1, 2}), Tensor::matrix(2, 2, {3, 4, 5, 6}), 1);
  EXPECT_EQ(m, Tensor::matrix(2, 3, {1, 3, 4, 2, 5, 6}));
}

TEST(Tensor, SplitConcatRoundTrip) {
  const Tensor x = random_tensor({4, 6}, 31);
  for (std::size_t axis : {0u, 1u}) {
    for (std::size_t idx = 0; idx <= x.shape()[axis]; ++idx) {
      const auto [l, r] = split(x, axis, idx);
      EXPECT_EQ(concat(l, r, axis), x) << "axis " << axis << " index " << idx;
    }
  }
}

TEST(Tensor, SiluExamples) {
  EXPECT_EQ(silu(Tensor::vector({0}))[0], 0.0);
  EXPECT_LT(std::abs(silu(Tensor::vector({20}))[0] - 20), 1e-6);
  EXPECT_LT(std::abs(silu(Tensor::vector({-20}))[0]), 1e-6);
}

TEST(Tensor, SiluGradMatchesFiniteDifference) {
  const Tensor x = random_tensor({20}, 41, -6, 6);
  const Tensor g = silu_grad(x);
  const double h = 1e-6;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double fd = (silu(Tensor::vector({x[i] + h}))[0] - silu(Tensor::vector({x[i] - h}))[0]) / (2 * h);
    EXPECT_NEAR(g[i], fd, 1e-8);
  }
}

TEST(Tensor, FrobeniusNorm) {
  EXPECT_EQ(frobenius_norm(Tensor::matrix(1, 2, {3, 4})), 5.0);
  EXPECT_EQ(frobenius_norm(Tensor::zeros({3, 3})), 0.0);
  const Tensor x = random_tensor({7, 9}, 51);
  double acc = 0.0;
  for (double v : x.data()) acc += v * v;
  EXPECT_LT(rel_err(frobenius_norm(x), std::sqrt(acc)), 1e-12);
  for (double c : {-3.5, 0.25, 17.0}) EXPECT_LT(rel_err(frobenius_norm(scale(x, c)), std::abs(c) * frobenius_norm(x)), 1e-12);
  EXPECT_THROW(frobenius_norm(Tensor()), std::invalid_argument);
}

TEST(Tensor, Mse) {
  const Tensor x = random_tensor({3, 5}, 61);
  EXPECT_EQ(mse(x, x), 0.0);
  EXPECT_EQ(mse(Tensor::vector({0, 0}), Tensor::vector({2, 0})), 2.0);
  const Tensor y = random_tensor({3, 5}, 62);
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += (x[i] - y[i]) * (x[i] - y[i]);
  EXPECT_LT(rel_err(mse(x, y), acc / 15.0), 1e-12);
  EXPECT_THROW(mse(x, Tensor({5, 3})), std::invalid_argument);
}

TEST(Tensor, AddRowsAndColumnSums) {
  const Tensor m = Tensor::matrix(2, 2, {1, 2, 3, 4});
  EXPECT_EQ(add_rows(m, Tensor::vector({10, 20})), Tensor::matrix(2, 2, {11, 22, 13, 24}));
  EXPECT_EQ(add_rows(m, Tensor::matrix(1, 2, {10, 20})), Tensor::matrix(2, 2, {11, 22, 13, 24}));
  EXPECT_EQ(column_sums(m), Tensor::vector({4, 6}));
  EXPECT_THROW(add_rows(m, Tensor::vector({1, 2, 3})), std::invalid_argument);
}

TEST(Tensor, OperationsArePure) {
  const Tensor a = random_tensor({4, 4}, 71), b = random_tensor({4, 4}, 72);
  const Tensor a0 = a, b0 = b;
  EXPECT_EQ(hadamard(a, b), hadamard(a, b));
  EXPECT_EQ(sub(a, b), sub(a, b));
  (void)matmul(a, b);
  (void)silu(a);
  EXPECT_EQ(a, a0);
  EXPECT_EQ(b, b0);
}
