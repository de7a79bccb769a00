#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "oracles.hpp"
#include "support.hpp"
#include "xattn/errors.hpp"
#include "xattn/numerics.hpp"

using namespace xattn;

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  const Matrix m = Matrix::from_rows({{1.5, -2.0}, {0.25, 4.0}});
  EXPECT_EQ(matmul(Matrix::identity(2), m), m);
}

TEST(Matmul, HandCheckedProduct) {
  const Matrix c = matmul(Matrix::from_rows({{1, 2}, {3, 4}}), Matrix::from_rows({{5}, {6}}));
  EXPECT_EQ(c, Matrix::from_rows({{17}, {39}}));
}

TEST(Matmul, MatchesTripleLoop) {
  std::mt19937_64 rng(1);
  const auto a = oracle::random_grid(rng, 7, 5);
  const auto b = oracle::random_grid(rng, 5, 3);
  const Matrix c = matmul(support::to_matrix(a), support::to_matrix(b));
  const auto expect = oracle::matmul(a, b);
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(c(i, j), expect[i][j], 1e-12);
}

TEST(Matmul, MismatchNamesBothShapes) {
  try {
    matmul(Matrix(2, 3), Matrix(4, 5));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("2x3"), std::string::npos);
    EXPECT_NE(msg.find("4x5"), std::string::npos);
  }
}

TEST(Softmax, UniformRow) {
  const Matrix s = softmax_rows(Matrix::from_rows({{0, 0, 0}}), 1.0);
  for (double v : s.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Softmax, LargeLogitsDoNotOverflow) {
  const Matrix s = softmax_rows(Matrix::from_rows({{1000, 0}}), 1.0);
  EXPECT_NEAR(s(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(s(0, 1), 0.0, 1e-12);
  EXPECT_TRUE(s.all_finite());
}

TEST(Softmax, MatchesDirectFormula) {
  const Matrix s = softmax_rows(Matrix::from_rows({{1, 2, 3}}), 1.0);
  const auto expect = oracle::softmax({1, 2, 3}, 1.0);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(s(0, k), expect[k], 1e-12);
}

TEST(Softmax, RejectsNonFiniteAndBadScale) {
  EXPECT_THROW(softmax_rows(Matrix::from_rows({{NAN, 0}}), 1.0), NonFiniteError);
  EXPECT_THROW(softmax_rows(Matrix::from_rows({{INFINITY, 0}}), 1.0), NonFiniteError);
  EXPECT_THROW(softmax_rows(Matrix::from_rows({{0, 0}}), 0.0), std::invalid_argument);
}

TEST(Softmax, RowsSumToOneAndMonotone) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const Matrix m = support::to_matrix(oracle::random_grid(rng, 3, 9, -20, 20));
    const Matrix s = softmax_rows(m, 1.7);
    for (std::size_t r = 0; r < 3; ++r) {
      double sum = 0;
      for (std::size_t c = 0; c < 9; ++c) {
        sum += s(r, c);
        EXPECT_GT(s(r, c), 0.0);
        EXPECT_LT(s(r, c), 1.0);
        for (std::size_t d = 0; d < 9; ++d) {
          if (m(r, c) < m(r, d)) EXPECT_LE(s(r, c), s(r, d));
        }
      }
      EXPECT_NEAR(sum, 1.0, 1e-9);
    }
  }
}

TEST(Kl, IdenticalIsZero) { EXPECT_NEAR(kl_divergence(std::vector{0.5, 0.5}, std::vector{0.5, 0.5}), 0.0, 1e-15); }

TEST(Kl, ClosedForm) {
  EXPECT_NEAR(kl_divergence(std::vector{1.0, 0.0}, std::vector{0.5, 0.5}), std::log(2.0), 1e-7);
}

TEST(Kl, MatchesSummationOracle) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> p(11);
  std::vector<double> q(11);
  for (auto* v : {&p, &q}) {
    double s = 0;
    for (double& x : *v) s += (x = u(rng));
    for (double& x : *v) x /= s;
  }
  EXPECT_NEAR(kl_divergence(p, q), oracle::kl(p, q, kKlSmoothing), 1e-12);
}

TEST(Kl, LengthMismatchThrows) {
  EXPECT_THROW(kl_divergence(std::vector{1.0}, std::vector{0.5, 0.5}), ShapeError);
}

TEST(Kl, NonNegativeAndZeroOnlyForEqualInputs) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> p(6);
    std::vector<double> q(6);
    for (std::size_t k = 0; k < 6; ++k) {
      p[k] = u(rng);
      q[k] = u(rng);
    }
    EXPECT_GT(kl_divergence(p, q), 1e-12);
    EXPECT_LE(kl_divergence(p, p), 1e-12);
  }
}

TEST(MeanVar, ClosedForm) {
  const auto z = mean_var_normalize(std::vector{1.0, 2.0, 3.0});
  EXPECT_NEAR(z[0], -std::sqrt(1.5), 1e-12);
  EXPECT_NEAR(z[1], 0.0, 1e-12);
  EXPECT_NEAR(z[2], std::sqrt(1.5), 1e-12);
}

TEST(MeanVar, ConstantMapsToZeros) {
  EXPECT_EQ(mean_var_normalize(std::vector{5.0, 5.0, 5.0, 5.0}), std::vector<double>(4, 0.0));
}

TEST(MeanVar, MomentsAndIdempotence) {
  std::mt19937_64 rng(5);
  const auto v = oracle::random_grid(rng, 1, 20, -3, 7)[0];
  const auto z = mean_var_normalize(v);
  double m = 0;
  double s = 0;
  for (double x : z) m += x / 20.0;
  for (double x : z) s += (x - m) * (x - m) / 20.0;
  EXPECT_LT(std::abs(m), 1e-12);
  EXPECT_LT(std::abs(std::sqrt(s) - 1.0), 1e-9);
  const auto zz = mean_var_normalize(z);
  for (std::size_t k = 0; k < z.size(); ++k) EXPECT_NEAR(zz[k], z[k], 1e-9);
}

TEST(MeanVar, ShortInputThrows) { EXPECT_THROW(mean_var_normalize(std::vector{1.0}), std::invalid_argument); }

TEST(Pool, HandChecked) {
  EXPECT_EQ(pool2d(Matrix::from_rows({{3}}), PoolMode::kMax), 3.0);
  EXPECT_EQ(pool2d(Matrix::from_rows({{1, 2}, {3, 4}}), PoolMode::kAvg), 2.5);
  EXPECT_EQ(pool2d(Matrix::from_rows({{1, 2}, {3, 4}}), PoolMode::kMax), 4.0);
  EXPECT_EQ(pool_2step(Matrix::from_rows({{1, 5}, {2, 3}})), 4.0);
  EXPECT_EQ(pool_2step(Matrix::from_rows({{1, 9, 2}})), 9.0);
}

TEST(Pool, TwoStepMatchesTwoPassOracle) {
  std::mt19937_64 rng(6);
  const auto g = oracle::random_grid(rng, 8, 4);
  EXPECT_NEAR(pool_2step(support::to_matrix(g)), oracle::two_step(g), 1e-12);
}

TEST(Pool, EmptyBlockThrows) {
  EXPECT_THROW(pool2d(Matrix(), PoolMode::kMax), std::invalid_argument);
  EXPECT_THROW(pool_2step(Matrix()), std::invalid_argument);
}

TEST(Pool, MaxDominatesTwoStepDominatesAvg) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 500; ++trial) {
    const Matrix b = support::to_matrix(oracle::random_grid(rng, 1 + trial % 6, 1 + trial % 5));
    EXPECT_GE(pool2d(b, PoolMode::kMax), pool_2step(b));
    EXPECT_GE(pool_2step(b), pool2d(b, PoolMode::kAvg) - 1e-15);
  }
}

TEST(Upsample, Examples) {
  EXPECT_EQ(nn_upsample(std::vector{7.0}, 4), std::vector<double>(4, 7.0));
  EXPECT_EQ(nn_upsample(std::vector{1.0, 2.0}, 4), (std::vector{1.0, 1.0, 2.0, 2.0}));
  EXPECT_EQ(nn_upsample(std::vector{1.0, 2.0, 3.0}, 3), (std::vector{1.0, 2.0, 3.0}));
}

TEST(Upsample, MatchesIndexOracleAndCreatesNoValues) {
  const std::vector<double> v{0.5, -1.0, 2.0, 8.0, 3.25};
  const auto out = nn_upsample(v, 13);
  EXPECT_EQ(out, oracle::upsample(v, 13));
  const std::set<double> src(v.begin(), v.end());
  for (double x : out) EXPECT_TRUE(src.contains(x));
}

TEST(Upsample, Errors) {
  EXPECT_THROW(nn_upsample(std::vector<double>{}, 4), std::invalid_argument);
  EXPECT_THROW(nn_upsample(std::vector{1.0, 2.0}, 1), std::invalid_argument);
}

TEST(MatrixType, BlockTransposeAndShape) {
  const Matrix m = Matrix::from_rows({{1, 2, 3}, {4, 5, 6}});
  EXPECT_EQ(m.transposed(), Matrix::from_rows({{1, 4}, {2, 5}, {3, 6}}));
  EXPECT_EQ(m.block(1, 2, 1, 3), Matrix::from_rows({{5, 6}}));
  EXPECT_EQ(m.shape_string(), "(2x3)");
  EXPECT_THROW(Matrix::from_rows({{1, 2}, {3}}), ShapeError);
}
