#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <vector>

#include "tdntc/random.hpp"
#include "tdntc/tensor.hpp"

namespace tdntc {
namespace {

Tensor random_tensor(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(-1.0, 1.0);
  return t;
}

TEST(TensorNew, FillsEveryElement) {
  auto z = tensor_new({2, 2}, 0.0);
  EXPECT_EQ(z.shape(), (Shape{2, 2}));
  EXPECT_EQ(z.values(), std::vector<double>(4, 0.0));

  auto s = tensor_new({1}, 7.5);
  EXPECT_EQ(s.values(), std::vector<double>{7.5});

  auto ones = tensor_new({2, 3}, 1.0);
  EXPECT_EQ(ones.size(), 6u);
  for (auto v : ones.data()) EXPECT_EQ(v, 1.0);
}

TEST(TensorNew, RejectsNonPositiveExtents) {
  EXPECT_THROW(tensor_new({2, 0}, 0.0), ShapeError);
  EXPECT_THROW(tensor_new({-1, 3}, 0.0), ShapeError);
  EXPECT_THROW(Tensor(Shape{0}), ShapeError);
  EXPECT_THROW(Tensor(Shape{2}, std::vector<double>{1.0}), ShapeError);
}

TEST(Matmul, IdentityAndDotProduct) {
  auto a = Tensor::matrix({{1, 2}, {3, 4}});
  auto eye = Tensor::matrix({{1, 0}, {0, 1}});
  EXPECT_EQ(matmul(a, eye), a);

  auto row = Tensor::matrix({{1, 2}});
  auto col = Tensor::matrix({{3}, {4}});
  auto dot = matmul(row, col);
  EXPECT_EQ(dot.shape(), (Shape{1, 1}));
  EXPECT_EQ(dot[0], 11.0);

  auto zero = Tensor(Shape{2, 2});
  auto any = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
  auto prod = matmul(zero, any);
  EXPECT_EQ(prod.shape(), (Shape{2, 3}));
  for (auto v : prod.data()) EXPECT_EQ(v, 0.0);
}

TEST(Matmul, RejectsMismatchedExtents) {
  EXPECT_THROW(matmul(Tensor(Shape{2, 3}), Tensor(Shape{2, 3})), ShapeError);
  EXPECT_THROW(matmul(Tensor(Shape{2}), Tensor(Shape{2, 3})), ShapeError);
}

TEST(Matmul, AssociativeOnRandomChains) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    std::size_t m = 1 + rng.below(6), n = 1 + rng.below(6), p = 1 + rng.below(6), q = 1 + rng.below(6);
    auto a = random_tensor({m, n}, rng);
    auto b = random_tensor({n, p}, rng);
    auto c = random_tensor({p, q}, rng);
    auto left = matmul(matmul(a, b), c);
    auto right = matmul(a, matmul(b, c));
    for (std::size_t i = 0; i < left.size(); ++i) {
      const double scale = std::max({1.0, std::abs(left[i]), std::abs(right[i])});
      EXPECT_LE(std::abs(left[i] - right[i]) / scale, 1e-10);
    }
  }
}

TEST(Reshape, RowMajorLaw) {
  Tensor t({6}, std::vector<double>{1, 2, 3, 4, 5, 6});
  auto m = reshape(t, {2, 3});
  EXPECT_EQ(m.at(0, 0), 1);
  EXPECT_EQ(m.at(0, 2), 3);
  EXPECT_EQ(m.at(1, 0), 4);
  EXPECT_EQ(m.at(1, 2), 6);

  std::vector<double> v(48);
  for (std::size_t i = 0; i < 48; ++i) v[i] = static_cast<double>(i + 1);
  auto frame = reshape(Tensor({48}, v), {8, 6});
  for (std::size_t j = 0; j < 8; ++j) {
    for (std::size_t c = 0; c < 6; ++c) EXPECT_EQ(frame.at(j, c), static_cast<double>(6 * j + c + 1));
  }

  Tensor cube({3, 2, 1}, std::vector<double>{1, 2, 3, 4, 5, 6});
  EXPECT_EQ(reshape(cube, {6}).values(), cube.values());
}

TEST(Reshape, RejectsCountMismatch) {
  EXPECT_THROW(reshape(Tensor(Shape{2, 3}), {4}), ShapeError);
}

TEST(Reshape, RoundTripIsBitwise) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    auto t = random_tensor({4, 6}, rng);
    auto back = reshape(reshape(t, {3, 2, 4}), {4, 6});
    EXPECT_EQ(back, t);
  }
}

TEST(FiniteDiff, LinearQuadraticConstant) {
  Rng rng(5);
  auto x = random_tensor({3, 2}, rng);
  auto sum = [](const Tensor& t) {
    double s = 0;
    for (auto v : t.data()) s += v;
    return s;
  };
  auto g = finite_diff_grad(sum, x, 1e-5);
  for (auto v : g.data()) EXPECT_NEAR(v, 1.0, 1e-9);

  auto sq = [](const Tensor& t) { return t[0] * t[0]; };
  auto g2 = finite_diff_grad(sq, Tensor::vector({3.0}), 1e-5);
  EXPECT_NEAR(g2[0], 6.0, 1e-6);

  auto k = [](const Tensor&) { return 4.2; };
  auto g3 = finite_diff_grad(k, x, 1e-5);
  for (auto v : g3.data()) EXPECT_NEAR(v, 0.0, 1e-9);
}

TEST(FiniteDiff, MatchesAnalyticQuadratic) {
  // f(x) = x^T A x with A = [[2,1],[1,3]] -> grad = (A + A^T) x
  auto f = [](const Tensor& x) {
    const double a = x[0], b = x[1];
    return 2 * a * a + 2 * a * b + 3 * b * b;
  };
  Tensor x = Tensor::vector({0.7, -1.3});
  auto g = finite_diff_grad(f, x, 1e-5);
  const double ga = 4 * 0.7 + 2 * -1.3;
  const double gb = 2 * 0.7 + 6 * -1.3;
  EXPECT_LE(std::abs(g[0] - ga) / std::abs(ga), 1e-5);
  EXPECT_LE(std::abs(g[1] - gb) / std::abs(gb), 1e-5);
}

TEST(FiniteDiff, RejectsBadStepAndNonFinite) {
  auto f = [](const Tensor& t) { return t[0]; };
  EXPECT_THROW(finite_diff_grad(f, Tensor::vector({1.0}), 0.0), NumericError);
  auto bad = [](const Tensor& t) { return std::log(t[0]); };
  EXPECT_THROW(finite_diff_grad(bad, Tensor::vector({0.0}), 1e-5), NumericError);
}

}  // namespace
}  // namespace tdntc
