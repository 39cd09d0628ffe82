#include <cmath>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "promptctl/attention.hpp"

using namespace promptctl;

namespace {

AttentionParams random_params(Rng& rng, std::size_t d_in, std::size_t d_key, std::size_t d_out,
                              double scale = 0.7) {
  AttentionParams p;
  p.w_q = Matrix::random_normal(d_in, d_key, rng, scale);
  p.w_key = Matrix::random_normal(d_in, d_key, rng, scale);
  p.w_v = Matrix::random_normal(d_in, d_out, rng, scale);
  return p;
}

}  // namespace

TEST(SelfAttention, MatchesUnshiftedReference) {
  Rng rng(101);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = 1 + rng.uniform_int(6);
    const std::size_t d_in = 1 + rng.uniform_int(6);
    const std::size_t d_key = 1 + rng.uniform_int(5);
    const std::size_t d_out = 1 + rng.uniform_int(6);
    const AttentionParams p = random_params(rng, d_in, d_key, d_out);
    const Matrix x = Matrix::random_normal(n, d_in, rng, 1.0);
    const Matrix got = self_attention(x, p);
    const Matrix want = oracle::attention_ref(x, p.w_q, p.w_key, p.w_v);
    EXPECT_LT(max_abs_diff(got, want), 1e-12) << "rep " << rep;
    EXPECT_TRUE(got.all_finite());
  }
}

TEST(SelfAttention, SingleRowReturnsItsValueVector) {
  Rng rng(102);
  const AttentionParams p = random_params(rng, 4, 3, 5);
  const Matrix x = Matrix::random_normal(1, 4, rng);
  // softmax over one column is 1 regardless of the score
  EXPECT_LT(max_abs_diff(self_attention(x, p), matmul(x, p.w_v)), 1e-14);
}

TEST(SelfAttention, ShiftKeepsHugeScoresFinite) {
  Rng rng(103);
  const AttentionParams p = random_params(rng, 3, 2, 3, 20.0);
  const Matrix x = Matrix::random_normal(4, 3, rng, 20.0);
  // raw exponentials overflow here; the shifted softmax must not
  const Matrix out = self_attention(x, p);
  EXPECT_TRUE(out.all_finite());
}

TEST(SelfAttention, PermutationEquivariance) {
  Rng rng(104);
  const AttentionParams p = random_params(rng, 4, 3, 4);
  const Matrix x = Matrix::random_normal(5, 4, rng);
  const std::size_t perm[5] = {3, 0, 4, 1, 2};
  Matrix xp(5, 4);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 4; ++j) xp(i, j) = x(perm[i], j);
  const Matrix y = self_attention(x, p);
  const Matrix yp = self_attention(xp, p);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < y.cols; ++j)
      EXPECT_NEAR(yp(i, j), y(perm[i], j), 1e-12);
}

TEST(SelfAttention, ShapeErrors) {
  Rng rng(105);
  const AttentionParams p = random_params(rng, 4, 3, 4);
  EXPECT_THROW(self_attention(Matrix::random_normal(3, 5, rng), p), ShapeError);
  EXPECT_THROW(self_attention(Matrix(0, 4), p), ShapeError);
  AttentionParams bad = p;
  bad.w_key = Matrix::random_normal(4, 2, rng);
  EXPECT_THROW(self_attention(Matrix::random_normal(3, 4, rng), bad), ShapeError);
}

TEST(DecomposeOutput, TwoTermScalarOracle) {
  // d_in = d_key = d_out = 1, one control row p, one imposed row q, all
  // projections identity: weights are exp(pq) and exp(q^2) directly.
  AttentionParams params;
  params.w_q = Matrix(1, 1, {1.0});
  params.w_key = Matrix(1, 1, {1.0});
  params.w_v = Matrix(1, 1, {1.0});
  const double pval = 2.0, qval = 1.0;
  const Matrix u(1, 1, {pval});
  const Matrix x0(1, 1, {qval});
  const double e_u = std::exp(pval * qval);
  const double e_x = std::exp(qval * qval);
  const auto dec = decompose_output(u, x0, params);
  EXPECT_NEAR(dec.y_u(0, 0), e_u * pval / (e_u + e_x), 1e-14);
  EXPECT_NEAR(dec.y_x(0, 0), e_x * qval / (e_u + e_x), 1e-14);
}

TEST(DecomposeOutput, SumEqualsFullForward) {
  Rng rng(106);
  for (int rep = 0; rep < 300; ++rep) {
    const std::size_t m = 1 + rng.uniform_int(8);
    const std::size_t k = rng.uniform_int(9);
    const std::size_t d_in = 1 + rng.uniform_int(16);
    const std::size_t d_key = 1 + rng.uniform_int(8);
    const std::size_t d_out = 1 + rng.uniform_int(16);
    const AttentionParams p = random_params(rng, d_in, d_key, d_out);
    const Matrix u = Matrix::random_normal(k, d_in, rng);
    const Matrix x0 = Matrix::random_normal(m, d_in, rng);
    const auto dec = decompose_output(u, x0, p);
    const Matrix full = self_attention(stack_rows(u, x0), p);
    Matrix last(m, d_out);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < d_out; ++j) last(i, j) = full(k + i, j);
    EXPECT_LT(max_abs_diff(add(dec.y_u, dec.y_x), last), 1e-10) << "rep " << rep;
  }
}

TEST(DecomposeOutput, EmptyControlMeansPureSelfAttention) {
  Rng rng(107);
  const AttentionParams p = random_params(rng, 5, 3, 4);
  const Matrix x0 = Matrix::random_normal(3, 5, rng);
  const auto dec = decompose_output(Matrix(0, 5), x0, p);
  EXPECT_EQ(max_abs(dec.y_u), 0.0);
  EXPECT_LT(max_abs_diff(dec.y_x, self_attention(x0, p)), 1e-14);
}

TEST(BoundQuantities, MatchesDirectEvaluationAtModerateScale) {
  Rng rng(108);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t m = 1 + rng.uniform_int(5);
    const std::size_t d_in = 1 + rng.uniform_int(6);
    const std::size_t d_key = 1 + rng.uniform_int(4);
    const std::size_t d_out = 1 + rng.uniform_int(6);
    const std::size_t k = rng.uniform_int(5);
    const double m_u = 0.2 + 2.0 * rng.uniform();
    const AttentionParams p = random_params(rng, d_in, d_key, d_out, 0.6);
    const Matrix x0 = Matrix::random_normal(m, d_in, rng, 0.8);
    const BoundQuantities bq = compute_bound_quantities(x0, p, k, m_u);

    const double sq = oracle::sigma_max_ref(p.w_q);
    const double sk = oracle::sigma_max_ref(p.w_key);
    const double sv = oracle::sigma_max_ref(p.w_v);
    EXPECT_NEAR(bq.sigma_q, sq, 1e-8 * std::max(1.0, sq));
    EXPECT_NEAR(bq.sigma_key, sk, 1e-8 * std::max(1.0, sk));
    EXPECT_NEAR(bq.sigma_v, sv, 1e-8 * std::max(1.0, sv));
    EXPECT_EQ(bq.m_x, max_row_norm(x0));

    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(d_key));
    const double alpha = sq * sk * m_u * bq.m_x * inv_sqrt;
    EXPECT_NEAR(bq.alpha, alpha, 1e-8 * std::max(1.0, alpha));

    // raw-exponential evaluation, safe at this scale
    const Matrix scores = matmul_nt(matmul(x0, p.w_q), matmul(x0, p.w_key));
    for (std::size_t i = 0; i < m; ++i) {
      double g = 0.0;
      for (std::size_t j = 0; j < m; ++j) g += std::exp(scores(i, j) * inv_sqrt);
      EXPECT_NEAR(bq.g[i], g, 1e-10 * g);
      EXPECT_NEAR(std::exp(bq.log_g[i]), g, 1e-10 * g);
      EXPECT_GT(bq.g[i], 0.0);

      const double gamma = std::exp(bq.alpha) / g * bq.sigma_v * m_u;
      EXPECT_NEAR(bq.gamma[i], gamma, 1e-9 * std::max(1e-300, gamma));
      const double ke_a = static_cast<double>(k) * std::exp(bq.alpha);
      const double beta = k == 0 ? 0.0 : ke_a / (g + ke_a) * bq.sigma_v * m_u;
      EXPECT_NEAR(bq.beta[i], beta, 1e-9 * std::max(1e-300, beta));
      EXPECT_GE(bq.beta[i], 0.0);
      EXPECT_LE(bq.beta[i], bq.sigma_v * m_u);
    }
    EXPECT_FALSE(bq.linear_overflow);
  }
}

TEST(BoundQuantities, BetaMonotoneInControlCountWithSaturatingLimit) {
  Rng rng(109);
  const AttentionParams p = random_params(rng, 4, 3, 4, 0.5);
  const Matrix x0 = Matrix::random_normal(3, 4, rng, 0.7);
  const double m_u = 1.3;
  double prev = -1.0;
  for (std::size_t k : {1, 2, 3, 5, 8, 13, 100, 10000}) {
    const BoundQuantities bq = compute_bound_quantities(x0, p, k, m_u);
    for (std::size_t i = 0; i < 3; ++i) {
      EXPECT_GT(bq.beta[i], 0.0);
      EXPECT_LT(bq.beta[i], bq.sigma_v * m_u);
    }
    EXPECT_GT(bq.beta[0], prev);
    prev = bq.beta[0];
  }
  const BoundQuantities big = compute_bound_quantities(x0, p, 1000000000ull, m_u);
  for (std::size_t i = 0; i < 3; ++i)
    EXPECT_NEAR(big.beta[i], big.sigma_v * m_u, 1e-6);
}

TEST(BoundQuantities, HugeAlphaOverflowsLinearGammaButKeepsLogs) {
  Rng rng(110);
  const AttentionParams p = random_params(rng, 4, 3, 4);
  const Matrix x0 = Matrix::random_normal(2, 4, rng);
  const BoundQuantities bq = compute_bound_quantities(x0, p, 2, 1e6, 1e6);
  EXPECT_TRUE(bq.linear_overflow);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_TRUE(std::isinf(bq.gamma[i]));
    EXPECT_TRUE(std::isfinite(bq.log_gamma[i]));
    EXPECT_TRUE(std::isfinite(bq.log_g[i]));
  }
}

TEST(BoundQuantities, ZeroControlNormMeansZeroBounds) {
  Rng rng(111);
  const AttentionParams p = random_params(rng, 4, 3, 4);
  const Matrix x0 = Matrix::random_normal(2, 4, rng);
  const BoundQuantities bq = compute_bound_quantities(x0, p, 3, 0.0);
  EXPECT_EQ(bq.alpha, 0.0);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(bq.beta[i], 0.0);
    EXPECT_EQ(bq.gamma[i], 0.0);
  }
}

TEST(YxExtremes, ShrinkMatchesBetaIdentity) {
  Rng rng(112);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t m = 1 + rng.uniform_int(4);
    const AttentionParams p = random_params(rng, 5, 3, 4, 0.6);
    const Matrix x0 = Matrix::random_normal(m, 5, rng, 0.8);
    const std::size_t k = 1 + rng.uniform_int(6);
    const double m_u = 0.3 + 1.5 * rng.uniform();
    const BoundQuantities bq = compute_bound_quantities(x0, p, k, m_u);
    const YxExtremes ext = y_x_extremes(x0, p, k, m_u);
    EXPECT_LT(max_abs_diff(ext.y_x_max, self_attention(x0, p)), 1e-14);
    for (std::size_t i = 0; i < m; ++i) {
      EXPECT_GT(ext.shrink[i], 0.0);
      EXPECT_LE(ext.shrink[i], 1.0);
      // g/(g + k e^a) == 1 - beta/(sigma_v M_u)
      EXPECT_NEAR(ext.shrink[i], 1.0 - bq.beta[i] / (bq.sigma_v * m_u), 1e-12);
      for (std::size_t c = 0; c < ext.y_x_max.cols; ++c)
        EXPECT_NEAR(ext.y_x_min(i, c), ext.shrink[i] * ext.y_x_max(i, c), 1e-13);
    }
  }
}

TEST(YxExtremes, NoControlMeansNoShrink) {
  Rng rng(113);
  const AttentionParams p = random_params(rng, 4, 2, 3);
  const Matrix x0 = Matrix::random_normal(2, 4, rng);
  const YxExtremes ext = y_x_extremes(x0, p, 0, 1.0);
  EXPECT_LT(max_abs_diff(ext.y_x_max, ext.y_x_min), 1e-15);
  EXPECT_EQ(ext.shrink[0], 1.0);
}

// Row-wise envelope soundness: for random admissible controls, the
// control-sourced component never exceeds beta and the imposed-block component
// sits inside [shrink, 1] times its maximum.
TEST(Envelope, RandomControlsRespectBounds) {
  Rng rng(114);
  int checked = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    const std::size_t m = 1 + rng.uniform_int(3);
    const std::size_t k = 1 + rng.uniform_int(3);
    const std::size_t d_in = 2 + rng.uniform_int(4);
    const std::size_t d_key = 1 + rng.uniform_int(3);
    const std::size_t d_out = 1 + rng.uniform_int(4);
    const double m_u = 0.2 + 1.8 * rng.uniform();
    const AttentionParams p = random_params(rng, d_in, d_key, d_out, 0.6);
    const Matrix x0 = Matrix::random_normal(m, d_in, rng, 0.8);
    const BoundQuantities bq = compute_bound_quantities(x0, p, k, m_u);
    const YxExtremes ext = y_x_extremes(x0, p, k, m_u);

    for (int uc = 0; uc < 100; ++uc) {
      Matrix u = Matrix::random_normal(k, d_in, rng);
      for (std::size_t r = 0; r < k; ++r) {
        const double n = row_norm(u, r);
        const double target = m_u * rng.uniform();
        if (n > 0.0)
          for (std::size_t c = 0; c < d_in; ++c) u(r, c) *= target / n;
      }
      const auto dec = decompose_output(u, x0, p);
      for (std::size_t i = 0; i < m; ++i) {
        EXPECT_LE(row_norm(dec.y_u, i), bq.beta[i] + 1e-9) << "rep " << rep;
        // y_x is a scalar multiple of its maximum; the scalar lives in [shrink, 1]
        const double ymax2 = dot(ext.y_x_max.row(i), ext.y_x_max.row(i));
        if (ymax2 > 1e-12) {
          const double factor = dot(dec.y_x.row(i), ext.y_x_max.row(i)) / ymax2;
          EXPECT_GE(factor, ext.shrink[i] - 1e-9);
          EXPECT_LE(factor, 1.0 + 1e-9);
          ++checked;
        }
      }
    }
  }
  EXPECT_GT(checked, 1000);
}

TEST(BoundQuantities, ArgumentErrors) {
  Rng rng(115);
  const AttentionParams p = random_params(rng, 4, 3, 4);
  const Matrix x0 = Matrix::random_normal(2, 4, rng);
  EXPECT_THROW(compute_bound_quantities(x0, p, 1, -1.0), ArgumentError);
  EXPECT_THROW(compute_bound_quantities(Matrix::random_normal(2, 3, rng), p, 1, 1.0), ShapeError);
}
