#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "promptctl/attention.hpp"
#include "promptctl/errors.hpp"
#include "promptctl/matrix.hpp"
#include "promptctl/rng.hpp"

namespace promptctl {

// One output-steering question: can k control rows of norm <= m_u, prepended
// to the imposed block x0, make the attention output over x0 equal y_star?
struct ControlInstance {
  Matrix x0;      // m x d_in
  Matrix y_star;  // m x d_out
  std::size_t k = 0;
  double m_u = 1.0;

  void validate(const AttentionParams& params) const {
    params.validate();
    require_shape(x0.cols == params.d_in(), "ControlInstance: x0 width != d_in");
    require_shape(x0.rows >= 1, "ControlInstance: x0 needs at least one row");
    require_shape(y_star.rows == x0.rows, "ControlInstance: y_star rows != x0 rows");
    require_shape(y_star.cols == params.d_out(), "ControlInstance: y_star width != d_out");
    if (!(m_u >= 0.0)) throw ArgumentError("ControlInstance: M_u must be >= 0");
  }
};

enum class Verdict { kUnreachable, kInconclusive };

// Per-row comparison behind the verdict. lhs is the norm of the component of
// the best-case imposed contribution that no control can cancel; rhs is the
// largest displacement k controls can buy. Log companions cover the regime
// where the linear rhs overflows.
struct CertificateRow {
  std::size_t row = 0;
  double lhs = 0.0;
  double rhs = 0.0;
  double log_lhs = 0.0;
  double log_rhs = 0.0;
  bool triggered = false;
};

struct Certificate {
  std::vector<CertificateRow> per_row;
  Verdict verdict = Verdict::kInconclusive;
  // The same test evaluated through the shrunk-contribution restatement
  // (minimum envelope vs beta). True when both forms give the same verdict.
  bool restated_agrees = true;
  BoundQuantities bounds;
};

// Strict inequality with a fixed margin: ties and near-ties stay inconclusive.
constexpr double kCertificateMargin = 1e-12;

namespace detail {
inline bool exceeds(double lhs, double rhs, double log_lhs, double log_rhs) {
  if (std::isfinite(rhs)) return lhs > rhs + kCertificateMargin;
  // rhs overflowed: decide in the log domain with the same slack
  return log_lhs > log_rhs + kCertificateMargin;
}
}  // namespace detail

// Analytic unreachability test. Sound, one-sided: kUnreachable is a proof that
// no admissible control reaches y_star; kInconclusive says nothing.
inline Certificate certify_unreachable(const ControlInstance& inst,
                                       const AttentionParams& params) {
  inst.validate(params);
  Certificate cert;
  cert.bounds = compute_bound_quantities(inst.x0, params, inst.k, inst.m_u);

  const Matrix y_max = self_attention(inst.x0, params);
  const RowDecomposition dec = row_decompose(y_max, inst.y_star);
  const std::size_t m = inst.x0.rows;
  const double log_k =
      inst.k > 0 ? std::log(static_cast<double>(inst.k)) : kNegInf;

  bool any_triggered = false;
  cert.per_row.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    CertificateRow& row = cert.per_row[i];
    row.row = i;
    row.lhs = row_norm(dec.orthogonal, i);
    row.log_lhs = row.lhs > 0.0 ? std::log(row.lhs) : kNegInf;
    // guard the k = 0 case: 0 * inf and -inf + inf are NaN, the bound is 0
    row.rhs = inst.k == 0 ? 0.0 : static_cast<double>(inst.k) * cert.bounds.gamma[i];
    row.log_rhs = inst.k == 0 ? kNegInf : log_k + cert.bounds.log_gamma[i];
    row.triggered = detail::exceeds(row.lhs, row.rhs, row.log_lhs, row.log_rhs);
    any_triggered = any_triggered || row.triggered;
  }
  cert.verdict = any_triggered ? Verdict::kUnreachable : Verdict::kInconclusive;

  // Restated form: shrink y_max to the minimum envelope and compare the
  // uncancellable component against beta. Evaluated literally, not by
  // rescaling the numbers above.
  const YxExtremes ext = y_x_extremes(inst.x0, params, inst.k, inst.m_u);
  const RowDecomposition dec_min = row_decompose(ext.y_x_min, inst.y_star);
  bool any_triggered_min = false;
  for (std::size_t i = 0; i < m; ++i) {
    const double lhs_min = row_norm(dec_min.orthogonal, i);
    const double log_lhs_min = lhs_min > 0.0 ? std::log(lhs_min) : kNegInf;
    const double beta = cert.bounds.beta[i];
    const double log_beta = beta > 0.0 ? std::log(beta) : kNegInf;
    if (detail::exceeds(lhs_min, beta, log_lhs_min, log_beta)) any_triggered_min = true;
  }
  const Verdict restated =
      any_triggered_min ? Verdict::kUnreachable : Verdict::kInconclusive;
  cert.restated_agrees = restated == cert.verdict;
  return cert;
}

enum class DiagnosticCase { kNormsDiffer, kOffTarget, kNone };

// Output-side comparison of an achieved map value against a target, for
// arbitrary maps (nothing attention-specific). kNormsDiffer: the Frobenius
// norms separate the two. kOffTarget: norms match but some component of y
// lies off the target's row directions. kNone: equal within tolerance.
struct GeneralDiagnostic {
  double y_fro = 0.0;
  double y_star_fro = 0.0;
  Matrix orthogonal;  // row-wise component of y off the target rows
  double max_abs_orthogonal = 0.0;
  double max_abs_difference = 0.0;
  DiagnosticCase which = DiagnosticCase::kNone;
};

inline GeneralDiagnostic diagnose_general(const Matrix& y, const Matrix& y_star) {
  require_shape(y.same_shape(y_star), "diagnose_general: shapes differ");
  GeneralDiagnostic d;
  d.y_fro = frobenius_norm(y);
  d.y_star_fro = frobenius_norm(y_star);
  d.orthogonal = row_decompose(y, y_star).orthogonal;
  d.max_abs_orthogonal = max_abs(d.orthogonal);
  d.max_abs_difference = max_abs_diff(y, y_star);

  const double norm_tol = 1e-12 * std::max(1.0, d.y_star_fro);
  const double entry_tol = 1e-12 * std::max(1.0, max_abs(y_star));
  if (std::abs(d.y_fro - d.y_star_fro) > norm_tol) {
    d.which = DiagnosticCase::kNormsDiffer;
  } else if (d.max_abs_orthogonal > entry_tol) {
    d.which = DiagnosticCase::kOffTarget;
  } else if (d.max_abs_difference > 1e-9) {
    // Rows are parallel to the target and the total norms match, yet entries
    // differ: rows are rescaled against each other or flipped. Classify by
    // row norms so the report still names the distinguishing evidence.
    bool row_norms_differ = false;
    for (std::size_t i = 0; i < y.rows; ++i) {
      const double a = row_norm(y, i), b = row_norm(y_star, i);
      if (std::abs(a - b) > 1e-12 * std::max(1.0, b)) {
        row_norms_differ = true;
        break;
      }
    }
    d.which = row_norms_differ ? DiagnosticCase::kNormsDiffer : DiagnosticCase::kOffTarget;
  } else {
    d.which = DiagnosticCase::kNone;
  }
  return d;
}

// Result of a sampling/enumeration search for a control that reaches y_star.
// residual is the max over rows of the euclidean distance to the target row.
struct OracleResult {
  double best_residual = 0.0;
  Matrix best_u;
  std::uint64_t searched = 0;
  bool reached = false;
};

constexpr double kReachTolerance = 1e-6;

// Vocabulary rows rescaled to satisfy the norm cap: rows longer than m_u are
// pulled back onto the sphere, shorter rows kept as-is.
inline Matrix make_candidate_set(const Matrix& table, double m_u) {
  if (!(m_u >= 0.0)) throw ArgumentError("make_candidate_set: M_u must be >= 0");
  Matrix out = table;
  for (std::size_t i = 0; i < out.rows; ++i) {
    const double n = row_norm(out, i);
    if (n > m_u) {
      const double s = m_u / n;
      for (std::size_t j = 0; j < out.cols; ++j) out(i, j) *= s;
    }
  }
  return out;
}

namespace detail {

// Fixed per-instance pieces of the oracle's residual evaluation, so the inner
// loop touches only the control-dependent blocks.
struct ReachWorkspace {
  std::size_t m, k, d_in, d_key, d_out;
  double inv_sqrt;
  Matrix q_x;    // m x d_key
  Matrix s_xx;   // m x m
  Matrix v_x;    // m x d_out
  Matrix k_u;    // k x d_key
  Matrix v_u;    // k x d_out
  Matrix s_xu;   // m x k
  std::vector<double> yrow;
  const Matrix* y_star;
  const AttentionParams* params;

  ReachWorkspace(const ControlInstance& inst, const AttentionParams& p)
      : m(inst.x0.rows),
        k(inst.k),
        d_in(p.d_in()),
        d_key(p.d_key()),
        d_out(p.d_out()),
        inv_sqrt(1.0 / std::sqrt(static_cast<double>(p.d_key()))),
        q_x(matmul(inst.x0, p.w_q)),
        s_xx(matmul_nt(q_x, matmul(inst.x0, p.w_key))),
        v_x(matmul(inst.x0, p.w_v)),
        k_u(std::max<std::size_t>(k, 1), p.d_key()),
        v_u(std::max<std::size_t>(k, 1), p.d_out()),
        s_xu(m, std::max<std::size_t>(k, 1)),
        yrow(p.d_out(), 0.0),
        y_star(&inst.y_star),
        params(&p) {
    for (double& s : s_xx.data) s *= inv_sqrt;
  }

  // residual of the control whose rows live in u (k x d_in)
  double eval(const Matrix& u) {
    for (std::size_t r = 0; r < k; ++r) {
      for (std::size_t c = 0; c < d_key; ++c) {
        double s = 0.0;
        for (std::size_t j = 0; j < d_in; ++j) s += u(r, j) * params->w_key(j, c);
        k_u(r, c) = s;
      }
      for (std::size_t c = 0; c < d_out; ++c) {
        double s = 0.0;
        for (std::size_t j = 0; j < d_in; ++j) s += u(r, j) * params->w_v(j, c);
        v_u(r, c) = s;
      }
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      double shift = kNegInf;
      for (std::size_t j = 0; j < k; ++j) {
        double s = dot(q_x.row(i), k_u.row(j)) * inv_sqrt;
        s_xu(i, j) = s;
        shift = std::max(shift, s);
      }
      for (std::size_t j = 0; j < m; ++j) shift = std::max(shift, s_xx(i, j));

      double denom = 0.0;
      double dist2 = 0.0;
      std::fill(yrow.begin(), yrow.end(), 0.0);
      for (std::size_t j = 0; j < k; ++j) {
        const double w = std::exp(s_xu(i, j) - shift);
        denom += w;
        for (std::size_t c = 0; c < d_out; ++c) yrow[c] += w * v_u(j, c);
      }
      for (std::size_t j = 0; j < m; ++j) {
        const double w = std::exp(s_xx(i, j) - shift);
        denom += w;
        for (std::size_t c = 0; c < d_out; ++c) yrow[c] += w * v_x(j, c);
      }
      for (std::size_t c = 0; c < d_out; ++c) {
        const double d = yrow[c] / denom - (*y_star)(i, c);
        dist2 += d * d;
      }
      worst = std::max(worst, std::sqrt(dist2));
    }
    return worst;
  }
};

}  // namespace detail

// Search for a control that reaches y_star. Exhaustive over candidate row
// tuples when |candidates|^k fits in the budget (ties resolved by the
// lexicographically smallest index tuple); otherwise seeded sampling that
// alternates candidate tuples with fresh random directions of norm exactly
// m_u. Deterministic for a fixed seed regardless of how far the search gets.
inline OracleResult brute_force_reach(const ControlInstance& inst, const AttentionParams& params,
                                      const Matrix& candidates, std::uint64_t budget,
                                      std::uint64_t seed) {
  inst.validate(params);
  if (budget == 0) throw ArgumentError("brute_force_reach: budget must be >= 1");

  detail::ReachWorkspace ws(inst, params);
  OracleResult res;

  if (inst.k == 0) {
    const Matrix u(0, params.d_in());
    res.best_residual = ws.eval(u);
    res.best_u = u;
    res.searched = 1;
    res.reached = res.best_residual < kReachTolerance;
    return res;
  }

  if (candidates.rows == 0) throw ArgumentError("brute_force_reach: no candidates for k > 0");
  require_shape(candidates.cols == params.d_in(), "brute_force_reach: candidate width != d_in");
  for (std::size_t i = 0; i < candidates.rows; ++i) {
    if (row_norm(candidates, i) > inst.m_u + 1e-12)
      throw ArgumentError("brute_force_reach: candidate row exceeds M_u");
  }

  const std::size_t n_cand = candidates.rows;
  // does n_cand^k fit in the budget?
  bool exhaustive = true;
  double total = 1.0;
  for (std::size_t i = 0; i < inst.k; ++i) {
    total *= static_cast<double>(n_cand);
    if (total > static_cast<double>(budget)) {
      exhaustive = false;
      break;
    }
  }

  Matrix u(inst.k, params.d_in());
  res.best_residual = std::numeric_limits<double>::infinity();

  auto fill_from_tuple = [&](const std::vector<std::size_t>& idx) {
    for (std::size_t r = 0; r < inst.k; ++r) {
      const auto src = candidates.row(idx[r]);
      std::copy(src.begin(), src.end(), u.row(r).begin());
    }
  };

  if (exhaustive) {
    std::vector<std::size_t> idx(inst.k, 0);
    for (;;) {
      fill_from_tuple(idx);
      const double r = ws.eval(u);
      ++res.searched;
      if (r < res.best_residual) {  // strict: first (lexicographically least) tuple wins ties
        res.best_residual = r;
        res.best_u = u;
      }
      // odometer, last index fastest
      std::size_t pos = inst.k;
      while (pos > 0) {
        --pos;
        if (++idx[pos] < n_cand) break;
        idx[pos] = 0;
        if (pos == 0) {
          pos = inst.k + 1;  // wrapped all the way around
          break;
        }
      }
      if (pos == inst.k + 1) break;
    }
  } else {
    Rng rng(seed);
    std::vector<std::size_t> idx(inst.k);
    for (std::uint64_t t = 0; t < budget; ++t) {
      if (t % 2 == 0) {
        for (std::size_t r = 0; r < inst.k; ++r) idx[r] = rng.uniform_int(n_cand);
        fill_from_tuple(idx);
      } else {
        for (std::size_t r = 0; r < inst.k; ++r) {
          double n2 = 0.0;
          for (std::size_t c = 0; c < params.d_in(); ++c) {
            u(r, c) = rng.normal();
            n2 += u(r, c) * u(r, c);
          }
          const double s = n2 > 0.0 ? inst.m_u / std::sqrt(n2) : 0.0;
          for (std::size_t c = 0; c < params.d_in(); ++c) u(r, c) *= s;
        }
      }
      const double r = ws.eval(u);
      ++res.searched;
      if (r < res.best_residual) {
        res.best_residual = r;
        res.best_u = u;
      }
    }
  }

  res.reached = res.best_residual < kReachTolerance;
  return res;
}

}  // namespace promptctl
