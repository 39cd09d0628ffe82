#include <cmath>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "promptctl/matrix.hpp"
#include "promptctl/rng.hpp"

using namespace promptctl;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  return Matrix::random_normal(r, c, rng, scale);
}

}  // namespace

TEST(Matrix, IdentityTimesAnything) {
  Rng rng(11);
  const Matrix a = random_matrix(4, 3, rng);
  const Matrix out = matmul(Matrix::identity(4), a);
  EXPECT_EQ(max_abs_diff(out, a), 0.0);
}

TEST(Matrix, MatmulMatchesTripleLoopReference) {
  Rng rng(12);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t m = 1 + rng.uniform_int(6);
    const std::size_t k = 1 + rng.uniform_int(6);
    const std::size_t n = 1 + rng.uniform_int(6);
    const Matrix a = random_matrix(m, k, rng);
    const Matrix b = random_matrix(k, n, rng);
    EXPECT_LT(max_abs_diff(matmul(a, b), oracle::matmul_ref(a, b)), 1e-13);
  }
}

TEST(Matrix, MatmulVariantsAgree) {
  Rng rng(13);
  const Matrix a = random_matrix(5, 4, rng);
  const Matrix b = random_matrix(6, 4, rng);
  EXPECT_LT(max_abs_diff(matmul_nt(a, b), matmul(a, transpose(b))), 1e-13);
  const Matrix c = random_matrix(5, 7, rng);
  EXPECT_LT(max_abs_diff(matmul_tn(a, c), matmul(transpose(a), c)), 1e-13);
}

TEST(Matrix, MatmulAssociativity) {
  Rng rng(14);
  for (int rep = 0; rep < 20; ++rep) {
    const Matrix a = random_matrix(4, 5, rng);
    const Matrix b = random_matrix(5, 3, rng);
    const Matrix c = random_matrix(3, 6, rng);
    const Matrix left = matmul(matmul(a, b), c);
    const Matrix right = matmul(a, matmul(b, c));
    const double scale_ref = std::max(1.0, max_abs(left));
    EXPECT_LT(max_abs_diff(left, right) / scale_ref, 1e-9);
  }
}

TEST(Matrix, ShapeMismatchThrows) {
  const Matrix a(2, 3), b(2, 3);
  EXPECT_THROW(matmul(a, b), ShapeError);
  EXPECT_THROW(add(a, Matrix(3, 2)), ShapeError);
  EXPECT_THROW(max_abs_diff(a, Matrix(3, 3)), ShapeError);
  EXPECT_THROW(Matrix(2, 2, {1.0, 2.0, 3.0}), ShapeError);
}

TEST(SingularValue, IdentityIsOne) {
  EXPECT_NEAR(max_singular_value(Matrix::identity(4)), 1.0, 1e-12);
}

TEST(SingularValue, DiagonalPicksLargest) {
  Matrix d(2, 2);
  d(0, 0) = 3.0;
  d(1, 1) = 1.0;
  EXPECT_NEAR(max_singular_value(d), 3.0, 1e-9);
}

TEST(SingularValue, ZeroMatrixIsZero) {
  EXPECT_EQ(max_singular_value(Matrix(3, 5)), 0.0);
}

TEST(SingularValue, MatchesJacobiOracle) {
  Rng rng(15);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t r = 1 + rng.uniform_int(6);
    const std::size_t c = 1 + rng.uniform_int(6);
    const Matrix m = random_matrix(r, c, rng, 1.0 + rng.uniform());
    const double got = max_singular_value(m);
    const double want = oracle::sigma_max_ref(m);
    EXPECT_NEAR(got, want, 1e-8 * std::max(1.0, want)) << "rep " << rep;
  }
}

TEST(SingularValue, ScaleHomogeneity) {
  Rng rng(16);
  for (int rep = 0; rep < 25; ++rep) {
    const Matrix m = random_matrix(4, 3, rng);
    const double c = -2.0 + 4.0 * rng.uniform();
    const double lhs = max_singular_value(scale(m, c));
    const double rhs = std::abs(c) * max_singular_value(m);
    EXPECT_NEAR(lhs, rhs, 1e-9 * std::max(1.0, rhs));
  }
}

TEST(SingularValue, EmptyThrows) {
  EXPECT_THROW(max_singular_value(Matrix(0, 3)), ArgumentError);
}

TEST(RowDecompose, SelfTargetIsAllParallel) {
  Rng rng(17);
  const Matrix y = random_matrix(3, 4, rng);
  const auto dec = row_decompose(y, y);
  EXPECT_LT(max_abs(dec.orthogonal), 1e-14);
  EXPECT_LT(max_abs_diff(dec.parallel, y), 1e-14);
}

TEST(RowDecompose, OrthogonalRowsStayOrthogonal) {
  // y rows already perpendicular to the target rows: parallel part vanishes
  Matrix y(1, 2, {0.0, 2.0});
  Matrix t(1, 2, {3.0, 0.0});
  const auto dec = row_decompose(y, t);
  EXPECT_EQ(max_abs(dec.parallel), 0.0);
  EXPECT_LT(max_abs_diff(dec.orthogonal, y), 1e-15);
}

TEST(RowDecompose, ZeroTargetRowGoesAllOrthogonal) {
  Matrix y(2, 2, {1.0, 2.0, 3.0, 4.0});
  Matrix t(2, 2, {0.0, 0.0, 5.0, 0.0});
  const auto dec = row_decompose(y, t);
  EXPECT_EQ(dec.parallel(0, 0), 0.0);
  EXPECT_EQ(dec.parallel(0, 1), 0.0);
  EXPECT_EQ(dec.orthogonal(0, 0), 1.0);
  EXPECT_EQ(dec.orthogonal(0, 1), 2.0);
  // second row decomposes normally
  EXPECT_NEAR(dec.parallel(1, 0), 3.0, 1e-15);
  EXPECT_NEAR(dec.orthogonal(1, 1), 4.0, 1e-15);
}

TEST(RowDecompose, ReconstructionAndPerpendicularity) {
  Rng rng(18);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t m = 1 + rng.uniform_int(6);
    const std::size_t d = 1 + rng.uniform_int(8);
    const Matrix y = random_matrix(m, d, rng, 1.0 + rng.uniform());
    Matrix t = random_matrix(m, d, rng);
    if (rep % 5 == 0)
      for (std::size_t j = 0; j < d; ++j) t(0, j) = 0.0;  // exercise the zero-row path
    const auto dec = row_decompose(y, t);
    EXPECT_LT(max_abs_diff(add(dec.parallel, dec.orthogonal), y), 1e-12);
    for (std::size_t i = 0; i < m; ++i) {
      const double ip = dot(dec.parallel.row(i), dec.orthogonal.row(i));
      const double scale_ref = std::max(1.0, row_norm(y, i) * row_norm(y, i));
      EXPECT_LT(std::abs(ip) / scale_ref, 1e-10);
    }
  }
}

TEST(RowDecompose, ShapeMismatchThrows) {
  EXPECT_THROW(row_decompose(Matrix(2, 2), Matrix(2, 3)), ShapeError);
}

TEST(Rng, DeterministicAndPortableDistributions) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) {
    EXPECT_EQ(a.next_u64(), b.next_u64());
  }
  Rng c(7);
  double mean = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) mean += c.normal();
  mean /= n;
  EXPECT_LT(std::abs(mean), 0.05);
  Rng d(9);
  for (int i = 0; i < 1000; ++i) EXPECT_LT(d.uniform_int(17), 17u);
}

TEST(Matrix, StackRows) {
  Matrix a(1, 2, {1.0, 2.0});
  Matrix b(2, 2, {3.0, 4.0, 5.0, 6.0});
  const Matrix s = stack_rows(a, b);
  EXPECT_EQ(s.rows, 3u);
  EXPECT_EQ(s(0, 1), 2.0);
  EXPECT_EQ(s(2, 0), 5.0);
  EXPECT_EQ(stack_rows(Matrix(0, 0), b).rows, 2u);
}

TEST(Matrix, NormsAndDistances) {
  Matrix a(2, 2, {3.0, 4.0, 0.0, 0.0});
  EXPECT_NEAR(row_norm(a, 0), 5.0, 1e-15);
  EXPECT_NEAR(frobenius_norm(a), 5.0, 1e-15);
  EXPECT_EQ(max_row_norm(a), 5.0);
  Matrix b(2, 2, {0.0, 0.0, 0.0, 1.0});
  EXPECT_NEAR(max_row_distance(a, b), 5.0, 1e-15);
  EXPECT_EQ(max_abs_diff(a, b), 4.0);
}
