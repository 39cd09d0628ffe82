#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <vector>

#include "promptctl/errors.hpp"
#include "promptctl/matrix.hpp"

namespace promptctl {

// Parameter triple of a single self-attention map. No biases, no output
// projection: query/key project into the score space, value into the output
// space.
struct AttentionParams {
  Matrix w_q;    // d_in x d_key
  Matrix w_key;  // d_in x d_key
  Matrix w_v;    // d_in x d_out

  std::size_t d_in() const { return w_q.rows; }
  std::size_t d_key() const { return w_q.cols; }
  std::size_t d_out() const { return w_v.cols; }

  void validate() const {
    require_shape(w_q.rows == w_key.rows && w_q.rows == w_v.rows,
                  "AttentionParams: input dimensions differ");
    require_shape(w_q.cols == w_key.cols, "AttentionParams: query/key dimensions differ");
    require_shape(!w_q.empty() && !w_v.empty(), "AttentionParams: empty parameter matrix");
  }
};

// Full self-attention: softmax(x Wq (x Wk)^T / sqrt(d_key)) x Wv, softmax taken
// row-wise. Rows are shifted by their max score before exponentiation; the
// shift cancels in the normalization, so the output matches the unshifted
// formula wherever that one stays finite.
inline Matrix self_attention(const Matrix& x, const AttentionParams& params) {
  params.validate();
  require_shape(x.cols == params.d_in(), "self_attention: input width != d_in");
  require_shape(x.rows >= 1, "self_attention: need at least one row");

  const Matrix q = matmul(x, params.w_q);
  const Matrix k = matmul(x, params.w_key);
  const Matrix v = matmul(x, params.w_v);
  Matrix scores = matmul_nt(q, k);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(params.d_key()));
  for (double& s : scores.data) s *= inv_sqrt;

  Matrix out(x.rows, params.d_out());
  std::vector<double> weights(x.rows);
  for (std::size_t i = 0; i < x.rows; ++i) {
    const auto srow = scores.row(i);
    const double m = *std::max_element(srow.begin(), srow.end());
    double denom = 0.0;
    for (std::size_t j = 0; j < x.rows; ++j) {
      weights[j] = std::exp(srow[j] - m);
      denom += weights[j];
    }
    for (std::size_t j = 0; j < x.rows; ++j) {
      const double w = weights[j] / denom;
      const double* vrow = v.data.data() + j * v.cols;
      double* orow = out.data.data() + i * out.cols;
      for (std::size_t c = 0; c < out.cols; ++c) orow[c] += w * vrow[c];
    }
  }
  return out;
}

// The rows of the output that sit over the imposed block x0, split by where
// their attention mass comes from: y_u collects the contribution of the
// control block u, y_x the contribution of x0 itself. Both use the full
// denominator over u and x0 columns, so y_u + y_x equals the x0-rows of
// self_attention(stack(u, x0)).
struct DecomposedOutput {
  Matrix y_u;
  Matrix y_x;
};

inline DecomposedOutput decompose_output(const Matrix& u, const Matrix& x0,
                                         const AttentionParams& params) {
  params.validate();
  require_shape(x0.cols == params.d_in(), "decompose_output: x0 width != d_in");
  require_shape(x0.rows >= 1, "decompose_output: x0 needs at least one row");
  if (u.rows > 0) require_shape(u.cols == params.d_in(), "decompose_output: u width != d_in");

  const std::size_t m = x0.rows;
  const std::size_t k = u.rows;
  const std::size_t d_out = params.d_out();
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(params.d_key()));

  const Matrix q_x = matmul(x0, params.w_q);
  const Matrix k_x = matmul(x0, params.w_key);
  const Matrix v_x = matmul(x0, params.w_v);
  Matrix s_xx = matmul_nt(q_x, k_x);
  for (double& s : s_xx.data) s *= inv_sqrt;

  Matrix s_xu(m, std::max<std::size_t>(k, 1));
  Matrix v_u(std::max<std::size_t>(k, 1), d_out);
  if (k > 0) {
    const Matrix k_u = matmul(u, params.w_key);
    s_xu = matmul_nt(q_x, k_u);
    for (double& s : s_xu.data) s *= inv_sqrt;
    v_u = matmul(u, params.w_v);
  }

  DecomposedOutput out{Matrix(m, d_out), Matrix(m, d_out)};
  for (std::size_t i = 0; i < m; ++i) {
    double shift = *std::max_element(s_xx.row(i).begin(), s_xx.row(i).end());
    if (k > 0)
      shift = std::max(shift, *std::max_element(s_xu.row(i).begin(), s_xu.row(i).end()));

    double denom = 0.0;
    std::vector<double> wu(k), wx(m);
    for (std::size_t j = 0; j < k; ++j) {
      wu[j] = std::exp(s_xu(i, j) - shift);
      denom += wu[j];
    }
    for (std::size_t j = 0; j < m; ++j) {
      wx[j] = std::exp(s_xx(i, j) - shift);
      denom += wx[j];
    }
    for (std::size_t j = 0; j < k; ++j) {
      const double w = wu[j] / denom;
      for (std::size_t c = 0; c < d_out; ++c) out.y_u(i, c) += w * v_u(j, c);
    }
    for (std::size_t j = 0; j < m; ++j) {
      const double w = wx[j] / denom;
      for (std::size_t c = 0; c < d_out; ++c) out.y_x(i, c) += w * v_x(j, c);
    }
  }
  return out;
}

// Everything the reachability certificate needs about one (x0, params, k, M_u)
// configuration. Quantities that can overflow a double keep exact log-domain
// companions; linear_overflow reports when any linear field clipped to inf.
//
//   g_i    softmax mass the imposed block assigns to itself (row i)
//   alpha  cap on any control-involving score: sigma_q sigma_key M_u M_x / sqrt(d_key)
//   beta_i largest control-sourced row norm: k e^a / (g_i + k e^a) sigma_v M_u
//   gamma_i per-unit-control rate in the certificate: (e^a / g_i) sigma_v M_u
struct BoundQuantities {
  std::vector<double> g;
  std::vector<double> log_g;
  double alpha = 0.0;
  double sigma_q = 0.0;
  double sigma_key = 0.0;
  double sigma_v = 0.0;
  double m_u = 0.0;
  double m_x = 0.0;
  std::vector<double> beta;
  std::vector<double> gamma;
  std::vector<double> log_gamma;
  std::size_t k = 0;
  bool linear_overflow = false;
};

inline BoundQuantities compute_bound_quantities(const Matrix& x0, const AttentionParams& params,
                                                std::size_t k, double m_u,
                                                std::optional<double> m_x_override = {}) {
  params.validate();
  require_shape(x0.cols == params.d_in(), "compute_bound_quantities: x0 width != d_in");
  require_shape(x0.rows >= 1, "compute_bound_quantities: x0 needs at least one row");
  if (!(m_u >= 0.0)) throw ArgumentError("compute_bound_quantities: M_u must be >= 0");

  BoundQuantities bq;
  bq.k = k;
  bq.m_u = m_u;
  bq.m_x = m_x_override ? *m_x_override : max_row_norm(x0);
  if (!(bq.m_x >= 0.0)) throw ArgumentError("compute_bound_quantities: M_x must be >= 0");
  bq.sigma_q = max_singular_value(params.w_q);
  bq.sigma_key = max_singular_value(params.w_key);
  bq.sigma_v = max_singular_value(params.w_v);

  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(params.d_key()));
  bq.alpha = bq.sigma_q * bq.sigma_key * bq.m_u * bq.m_x * inv_sqrt;

  Matrix scores = matmul_nt(matmul(x0, params.w_q), matmul(x0, params.w_key));
  for (double& s : scores.data) s *= inv_sqrt;

  const std::size_t m = x0.rows;
  bq.g.resize(m);
  bq.log_g.resize(m);
  bq.beta.resize(m);
  bq.gamma.resize(m);
  bq.log_gamma.resize(m);

  const double sv_mu = bq.sigma_v * bq.m_u;
  const double log_sv_mu = sv_mu > 0.0 ? std::log(sv_mu) : kNegInf;
  const double log_k = k > 0 ? std::log(static_cast<double>(k)) : kNegInf;

  for (std::size_t i = 0; i < m; ++i) {
    bq.log_g[i] = log_sum_exp(scores.row(i));
    bq.g[i] = std::exp(bq.log_g[i]);
    if (!std::isfinite(bq.g[i])) bq.linear_overflow = true;

    bq.log_gamma[i] = bq.alpha - bq.log_g[i] + log_sv_mu;
    bq.gamma[i] = std::exp(bq.log_gamma[i]);
    if (log_sv_mu != kNegInf && !std::isfinite(bq.gamma[i])) bq.linear_overflow = true;

    if (k == 0 || sv_mu == 0.0) {
      bq.beta[i] = 0.0;
    } else {
      // k e^a / (g + k e^a) * sv_mu == sv_mu / (1 + exp(log g - log k - a))
      const double z = bq.log_g[i] - log_k - bq.alpha;
      bq.beta[i] = sv_mu / (1.0 + std::exp(z));
    }
  }
  return bq;
}

// The attainable envelope of the imposed-block contribution y_x over all
// admissible controls: with no control (or far-away keys) each row reaches its
// maximum, which is plain self-attention over x0; with k controls hogging the
// softmax it shrinks by the row factor g_i / (g_i + k e^a).
struct YxExtremes {
  Matrix y_x_max;
  Matrix y_x_min;
  std::vector<double> shrink;  // the per-row factor, in (0, 1]
};

inline YxExtremes y_x_extremes(const Matrix& x0, const AttentionParams& params, std::size_t k,
                               double m_u, std::optional<double> m_x_override = {}) {
  const BoundQuantities bq = compute_bound_quantities(x0, params, k, m_u, m_x_override);
  YxExtremes out;
  out.y_x_max = self_attention(x0, params);
  out.y_x_min = out.y_x_max;
  out.shrink.resize(x0.rows, 1.0);
  if (k > 0) {
    const double log_k = std::log(static_cast<double>(k));
    for (std::size_t i = 0; i < x0.rows; ++i) {
      // g / (g + k e^a) == 1 / (1 + exp(log k + a - log g))
      const double z = log_k + bq.alpha - bq.log_g[i];
      out.shrink[i] = 1.0 / (1.0 + std::exp(z));
      for (std::size_t c = 0; c < out.y_x_min.cols; ++c) out.y_x_min(i, c) *= out.shrink[i];
    }
  }
  return out;
}

}  // namespace promptctl
