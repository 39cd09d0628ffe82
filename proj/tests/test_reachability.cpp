#include <cmath>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "promptctl/reachability.hpp"

using namespace promptctl;

namespace {

AttentionParams random_params(Rng& rng, std::size_t d_in, std::size_t d_key, std::size_t d_out,
                              double scale = 0.6) {
  AttentionParams p;
  p.w_q = Matrix::random_normal(d_in, d_key, rng, scale);
  p.w_key = Matrix::random_normal(d_in, d_key, rng, scale);
  p.w_v = Matrix::random_normal(d_in, d_out, rng, scale);
  return p;
}

Matrix admissible_control(Rng& rng, std::size_t k, std::size_t d_in, double m_u) {
  Matrix u = Matrix::random_normal(k, d_in, rng);
  for (std::size_t r = 0; r < k; ++r) {
    const double n = row_norm(u, r);
    const double target = m_u * (0.2 + 0.8 * rng.uniform());
    if (n > 0.0)
      for (std::size_t c = 0; c < d_in; ++c) u(r, c) *= target / n;
  }
  return u;
}

// target whose rows are perpendicular to the rows of y (needs d_out >= 2)
Matrix perpendicular_target(const Matrix& y) {
  Matrix t(y.rows, y.cols);
  for (std::size_t i = 0; i < y.rows; ++i) {
    t(i, 0) = -y(i, 1);
    t(i, 1) = y(i, 0);
  }
  return t;
}

}  // namespace

TEST(Certificate, ReachableTargetsAreNeverCertified) {
  Rng rng(201);
  for (int rep = 0; rep < 300; ++rep) {
    const std::size_t m = 1 + rng.uniform_int(4);
    const std::size_t k = 1 + rng.uniform_int(4);
    const std::size_t d_in = 2 + rng.uniform_int(5);
    const AttentionParams p = random_params(rng, d_in, 1 + rng.uniform_int(3), 1 + rng.uniform_int(5));
    ControlInstance inst;
    inst.x0 = Matrix::random_normal(m, d_in, rng, 0.8);
    inst.k = k;
    inst.m_u = 0.2 + 1.5 * rng.uniform();
    const Matrix u = admissible_control(rng, k, d_in, inst.m_u);
    const auto dec = decompose_output(u, inst.x0, p);
    inst.y_star = add(dec.y_u, dec.y_x);
    const Certificate cert = certify_unreachable(inst, p);
    EXPECT_EQ(cert.verdict, Verdict::kInconclusive) << "rep " << rep;
  }
}

TEST(Certificate, FarTargetWithWeakControlTriggers) {
  Rng rng(202);
  int triggered = 0;
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t m = 1 + rng.uniform_int(3);
    const AttentionParams p = random_params(rng, 4, 3, 3);
    ControlInstance inst;
    inst.x0 = Matrix::random_normal(m, 4, rng, 0.8);
    inst.k = 3;
    inst.m_u = 1e-6;
    inst.y_star = perpendicular_target(self_attention(inst.x0, p));
    const Certificate cert = certify_unreachable(inst, p);
    if (cert.verdict == Verdict::kUnreachable) ++triggered;
    EXPECT_TRUE(cert.restated_agrees) << "rep " << rep;
    for (const auto& row : cert.per_row) {
      if (row.triggered) {
        EXPECT_GT(row.lhs, row.rhs);
      }
    }
  }
  EXPECT_EQ(triggered, 50);
}

TEST(Certificate, CertifiedInstancesResistSearch) {
  Rng rng(203);
  int checked = 0;
  for (int rep = 0; rep < 20; ++rep) {
    const AttentionParams p = random_params(rng, 4, 2, 3);
    ControlInstance inst;
    inst.x0 = Matrix::random_normal(2, 4, rng, 0.8);
    inst.k = 2;
    inst.m_u = 1e-5;
    inst.y_star = perpendicular_target(self_attention(inst.x0, p));
    const Certificate cert = certify_unreachable(inst, p);
    if (cert.verdict != Verdict::kUnreachable) continue;
    const Matrix cands = make_candidate_set(Matrix::random_normal(6, 4, rng), inst.m_u);
    const OracleResult r = brute_force_reach(inst, p, cands, 2000, 777 + rep);
    EXPECT_FALSE(r.reached);
    EXPECT_GE(r.best_residual, kReachTolerance);
    ++checked;
  }
  EXPECT_GE(checked, 15);
}

TEST(Certificate, ZeroControlBudget) {
  Rng rng(204);
  const AttentionParams p = random_params(rng, 4, 3, 3);
  ControlInstance inst;
  inst.x0 = Matrix::random_normal(2, 4, rng);
  inst.k = 0;
  inst.m_u = 1.0;

  inst.y_star = self_attention(inst.x0, p);
  EXPECT_EQ(certify_unreachable(inst, p).verdict, Verdict::kInconclusive);

  Matrix off = inst.y_star;
  off(0, 0) += 0.5;
  inst.y_star = perpendicular_target(off);
  EXPECT_EQ(certify_unreachable(inst, p).verdict, Verdict::kUnreachable);
}

TEST(Certificate, ZeroControlOverflowedGammaStillTriggers) {
  // gamma overflows at huge m_u; with k = 0 the bound is still exactly zero
  Rng rng(205);
  const AttentionParams p = random_params(rng, 4, 3, 3);
  ControlInstance inst;
  inst.x0 = Matrix::random_normal(2, 4, rng);
  inst.k = 0;
  inst.m_u = 1e8;
  const Matrix y_max = self_attention(inst.x0, p);
  inst.y_star = perpendicular_target(y_max);
  const Certificate cert = certify_unreachable(inst, p);
  EXPECT_TRUE(cert.bounds.linear_overflow);
  EXPECT_EQ(cert.verdict, Verdict::kUnreachable);
}

TEST(Certificate, VerdictMonotoneInControlCount) {
  Rng rng(206);
  const AttentionParams p = random_params(rng, 4, 3, 3);
  ControlInstance inst;
  inst.x0 = Matrix::random_normal(3, 4, rng, 0.8);
  inst.m_u = 2e-4;
  inst.y_star = perpendicular_target(self_attention(inst.x0, p));

  inst.k = 5;
  ASSERT_EQ(certify_unreachable(inst, p).verdict, Verdict::kUnreachable);
  for (std::size_t k = 0; k < 5; ++k) {
    inst.k = k;
    EXPECT_EQ(certify_unreachable(inst, p).verdict, Verdict::kUnreachable) << "k " << k;
  }

  // once the budget is generous enough to stay inconclusive, more stays so
  inst.m_u = 10.0;
  inst.k = 1;
  ASSERT_EQ(certify_unreachable(inst, p).verdict, Verdict::kInconclusive);
  for (std::size_t k : {2, 4, 16, 256}) {
    inst.k = k;
    EXPECT_EQ(certify_unreachable(inst, p).verdict, Verdict::kInconclusive) << "k " << k;
  }
}

TEST(Certificate, RestatedFormAgreesOnRandomInstances) {
  Rng rng(207);
  for (int rep = 0; rep < 500; ++rep) {
    const std::size_t m = 1 + rng.uniform_int(4);
    const AttentionParams p = random_params(rng, 2 + rng.uniform_int(4), 1 + rng.uniform_int(3),
                                            2 + rng.uniform_int(4));
    ControlInstance inst;
    inst.x0 = Matrix::random_normal(m, p.d_in(), rng, 0.8);
    inst.k = rng.uniform_int(5);
    inst.m_u = std::pow(10.0, -4.0 + 5.0 * rng.uniform());
    inst.y_star = Matrix::random_normal(m, p.d_out(), rng, 0.5);
    const Certificate cert = certify_unreachable(inst, p);
    EXPECT_TRUE(cert.restated_agrees) << "rep " << rep;
    EXPECT_EQ(cert.per_row.size(), m);
  }
}

TEST(Diagnose, EqualIsClean) {
  Rng rng(208);
  const Matrix y = Matrix::random_normal(3, 4, rng);
  const GeneralDiagnostic d = diagnose_general(y, y);
  EXPECT_EQ(d.which, DiagnosticCase::kNone);
  EXPECT_LT(d.max_abs_orthogonal, 1e-12);
}

TEST(Diagnose, ScaledTargetSeparatesByNorm) {
  Rng rng(209);
  const Matrix y_star = Matrix::random_normal(3, 4, rng);
  const GeneralDiagnostic d = diagnose_general(scale(y_star, 2.0), y_star);
  EXPECT_EQ(d.which, DiagnosticCase::kNormsDiffer);
}

TEST(Diagnose, RotatedRowsSeparateByDirection) {
  Rng rng(210);
  const Matrix y_star = Matrix::random_normal(3, 4, rng);
  Matrix y(3, 4);
  for (std::size_t i = 0; i < 3; ++i) {
    y(i, 0) = -y_star(i, 1);
    y(i, 1) = y_star(i, 0);
    y(i, 2) = y_star(i, 3);
    y(i, 3) = -y_star(i, 2);
  }
  // same row norms, different directions
  const GeneralDiagnostic d = diagnose_general(y, y_star);
  EXPECT_EQ(d.which, DiagnosticCase::kOffTarget);
  EXPECT_GT(d.max_abs_orthogonal, 0.01);
}

TEST(Diagnose, AntiParallelStillFlagged) {
  Rng rng(211);
  const Matrix y_star = Matrix::random_normal(2, 3, rng);
  const GeneralDiagnostic d = diagnose_general(scale(y_star, -1.0), y_star);
  EXPECT_NE(d.which, DiagnosticCase::kNone);
}

TEST(Diagnose, RowRescaleWithMatchingTotalStillFlagged) {
  // rows parallel to the target, total Frobenius norm identical, rows traded
  // norm against each other
  Matrix y_star(2, 2, {1.0, 0.0, 0.0, 1.0});
  Matrix y(2, 2, {std::sqrt(2.0), 0.0, 0.0, 0.0});
  const GeneralDiagnostic d = diagnose_general(y, y_star);
  EXPECT_EQ(d.which, DiagnosticCase::kNormsDiffer);
}

TEST(Diagnose, NeverCleanWhenVisiblyDifferent) {
  Rng rng(212);
  for (int rep = 0; rep < 500; ++rep) {
    const std::size_t m = 1 + rng.uniform_int(3);
    const std::size_t d = 1 + rng.uniform_int(4);
    const Matrix y_star = Matrix::random_normal(m, d, rng);
    Matrix y = y_star;
    switch (rng.uniform_int(4)) {
      case 0: y = Matrix::random_normal(m, d, rng); break;
      case 1: y = scale(y_star, -1.0); break;
      case 2: y = scale(y_star, 1.0 + rng.uniform()); break;
      default: y(rng.uniform_int(m), rng.uniform_int(d)) += 1e-6; break;
    }
    if (max_abs_diff(y, y_star) <= 1e-9) continue;
    EXPECT_NE(diagnose_general(y, y_star).which, DiagnosticCase::kNone) << "rep " << rep;
  }
  EXPECT_THROW(diagnose_general(Matrix(2, 2), Matrix(2, 3)), ShapeError);
}

TEST(BruteForce, FindsPlantedCandidateTuple) {
  Rng rng(213);
  for (int rep = 0; rep < 30; ++rep) {
    const std::size_t d_in = 3 + rng.uniform_int(3);
    const AttentionParams p = random_params(rng, d_in, 2, 3);
    ControlInstance inst;
    inst.x0 = Matrix::random_normal(2, d_in, rng, 0.8);
    inst.k = 2;
    inst.m_u = 1.5;
    const Matrix cands = make_candidate_set(Matrix::random_normal(8, d_in, rng), inst.m_u);
    const std::size_t ia = rng.uniform_int(8), ib = rng.uniform_int(8);
    Matrix u(2, d_in);
    for (std::size_t c = 0; c < d_in; ++c) {
      u(0, c) = cands(ia, c);
      u(1, c) = cands(ib, c);
    }
    const auto dec = decompose_output(u, inst.x0, p);
    inst.y_star = add(dec.y_u, dec.y_x);

    const OracleResult r = brute_force_reach(inst, p, cands, 100, 1);
    EXPECT_EQ(r.searched, 64u);
    EXPECT_TRUE(r.reached);
    EXPECT_LT(r.best_residual, 1e-10);
    // control rows are order-free, so the winner is the planted pair in
    // either order
    Matrix swapped(2, d_in);
    for (std::size_t c = 0; c < d_in; ++c) {
      swapped(0, c) = u(1, c);
      swapped(1, c) = u(0, c);
    }
    const bool same = max_abs_diff(r.best_u, u) == 0.0 || max_abs_diff(r.best_u, swapped) == 0.0;
    EXPECT_TRUE(same) << "rep " << rep;
  }
}

TEST(BruteForce, FastPathMatchesFullForward) {
  Rng rng(214);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t m = 1 + rng.uniform_int(3);
    const std::size_t k = 1 + rng.uniform_int(3);
    const std::size_t d_in = 2 + rng.uniform_int(4);
    const AttentionParams p = random_params(rng, d_in, 1 + rng.uniform_int(3), 1 + rng.uniform_int(4));
    ControlInstance inst;
    inst.x0 = Matrix::random_normal(m, d_in, rng);
    inst.k = k;
    inst.m_u = 2.0;
    inst.y_star = Matrix::random_normal(m, p.d_out(), rng);
    const Matrix u = admissible_control(rng, k, d_in, inst.m_u);

    // a single candidate row repeated k times is the only tuple searched
    EXPECT_LT(max_row_norm(u), inst.m_u + 1e-12);
    Matrix one_cand(1, d_in);
    for (std::size_t c = 0; c < d_in; ++c) one_cand(0, c) = u(0, c);
    Matrix u_rep(k, d_in);
    for (std::size_t r = 0; r < k; ++r)
      for (std::size_t c = 0; c < d_in; ++c) u_rep(r, c) = u(0, c);

    const OracleResult r = brute_force_reach(inst, p, one_cand, 10, 1);
    EXPECT_EQ(r.searched, 1u);

    const Matrix full = self_attention(stack_rows(u_rep, inst.x0), p);
    double want = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      double d2 = 0.0;
      for (std::size_t c = 0; c < p.d_out(); ++c) {
        const double diff = full(k + i, c) - inst.y_star(i, c);
        d2 += diff * diff;
      }
      want = std::max(want, std::sqrt(d2));
    }
    EXPECT_NEAR(r.best_residual, want, 1e-12 * std::max(1.0, want)) << "rep " << rep;
  }
}

TEST(BruteForce, SamplingModeIsSeededAndExact) {
  Rng rng(215);
  const AttentionParams p = random_params(rng, 4, 2, 3);
  ControlInstance inst;
  inst.x0 = Matrix::random_normal(2, 4, rng);
  inst.k = 3;
  inst.m_u = 1.0;
  inst.y_star = Matrix::random_normal(2, 3, rng);
  const Matrix cands = make_candidate_set(Matrix::random_normal(10, 4, rng), inst.m_u);

  // 10^3 tuples > budget 100 forces sampling
  const OracleResult a = brute_force_reach(inst, p, cands, 100, 42);
  const OracleResult b = brute_force_reach(inst, p, cands, 100, 42);
  const OracleResult c = brute_force_reach(inst, p, cands, 100, 43);
  EXPECT_EQ(a.searched, 100u);
  EXPECT_EQ(a.best_residual, b.best_residual);
  EXPECT_EQ(max_abs_diff(a.best_u, b.best_u), 0.0);
  EXPECT_TRUE(std::isfinite(c.best_residual));
  EXPECT_GE(a.best_residual, 0.0);
}

TEST(BruteForce, ZeroControlEvaluatesEmptyPrefix) {
  Rng rng(216);
  const AttentionParams p = random_params(rng, 4, 2, 3);
  ControlInstance inst;
  inst.x0 = Matrix::random_normal(2, 4, rng);
  inst.k = 0;
  inst.m_u = 1.0;
  inst.y_star = self_attention(inst.x0, p);
  const OracleResult r = brute_force_reach(inst, p, Matrix(0, 4), 10, 1);
  EXPECT_TRUE(r.reached);
  EXPECT_EQ(r.searched, 1u);
  EXPECT_LT(r.best_residual, 1e-14);
}

TEST(BruteForce, RejectsBadInputs) {
  Rng rng(217);
  const AttentionParams p = random_params(rng, 4, 2, 3);
  ControlInstance inst;
  inst.x0 = Matrix::random_normal(2, 4, rng);
  inst.k = 1;
  inst.m_u = 0.5;
  inst.y_star = Matrix::random_normal(2, 3, rng);
  Matrix cands = Matrix::random_normal(3, 4, rng, 5.0);
  EXPECT_THROW(brute_force_reach(inst, p, cands, 10, 1), ArgumentError);  // rows too long
  EXPECT_THROW(brute_force_reach(inst, p, Matrix(0, 4), 10, 1), ArgumentError);
  EXPECT_THROW(brute_force_reach(inst, p, Matrix::random_normal(3, 5, rng), 10, 1), ShapeError);
  cands = make_candidate_set(cands, inst.m_u);
  EXPECT_THROW(brute_force_reach(inst, p, cands, 0, 1), ArgumentError);
}

TEST(CandidateSet, CapsLongRowsOnly) {
  Rng rng(218);
  Matrix t(3, 4);
  for (std::size_t c = 0; c < 4; ++c) {
    t(0, c) = 0.1;
    t(1, c) = 10.0;
    t(2, c) = 0.0;
  }
  const Matrix capped = make_candidate_set(t, 1.0);
  EXPECT_EQ(row_norm(capped, 0), row_norm(t, 0));
  EXPECT_NEAR(row_norm(capped, 1), 1.0, 1e-12);
  EXPECT_EQ(row_norm(capped, 2), 0.0);
  EXPECT_THROW(make_candidate_set(t, -1.0), ArgumentError);
}
