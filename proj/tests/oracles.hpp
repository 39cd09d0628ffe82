#pragma once

// Independent reference implementations for checking the library. Everything
// here is deliberately written the slow, obvious way and shares no code with
// the headers under test beyond the Matrix container itself.

#include <cassert>
#include <cmath>
#include <cstddef>
#include <vector>

#include "promptctl/matrix.hpp"

namespace oracle {

using promptctl::Matrix;

// Plain triple loop in ijk order (the library uses ikj).
inline Matrix matmul_ref(const Matrix& a, const Matrix& b) {
  assert(a.cols == b.rows);
  Matrix out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < b.cols; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) s += a(i, k) * b(k, j);
      out(i, j) = s;
    }
  return out;
}

// Largest eigenvalue of a symmetric matrix by cyclic Jacobi rotations.
inline double jacobi_max_eigenvalue(Matrix s) {
  assert(s.rows == s.cols);
  const std::size_t n = s.rows;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += s(p, q) * s(p, q);
    if (off < 1e-26) break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        if (s(p, q) == 0.0) continue;
        const double theta = (s(q, q) - s(p, p)) / (2.0 * s(p, q));
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double snv = t * c;
        for (std::size_t i = 0; i < n; ++i) {
          const double sip = s(i, p), siq = s(i, q);
          s(i, p) = c * sip - snv * siq;
          s(i, q) = snv * sip + c * siq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double spi = s(p, i), sqi = s(q, i);
          s(p, i) = c * spi - snv * sqi;
          s(q, i) = snv * spi + c * sqi;
        }
      }
  }
  double best = s(0, 0);
  for (std::size_t i = 1; i < n; ++i) best = std::max(best, s(i, i));
  return best;
}

// sigma_max through an entirely different algorithm than the library's power
// iteration: Jacobi on m^T m.
inline double sigma_max_ref(const Matrix& m) {
  Matrix mtm(m.cols, m.cols);
  for (std::size_t i = 0; i < m.cols; ++i)
    for (std::size_t j = 0; j < m.cols; ++j) {
      double s = 0.0;
      for (std::size_t r = 0; r < m.rows; ++r) s += m(r, i) * m(r, j);
      mtm(i, j) = s;
    }
  const double lam = jacobi_max_eigenvalue(mtm);
  return std::sqrt(std::max(0.0, lam));
}

// Self-attention with raw exponentials and no shifting. Only valid while the
// scores stay well inside double range, which the tests arrange.
inline Matrix attention_ref(const Matrix& x, const Matrix& w_q, const Matrix& w_key,
                            const Matrix& w_v) {
  const Matrix q = matmul_ref(x, w_q);
  const Matrix k = matmul_ref(x, w_key);
  const Matrix v = matmul_ref(x, w_v);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(w_q.cols));
  Matrix out(x.rows, w_v.cols);
  for (std::size_t i = 0; i < x.rows; ++i) {
    std::vector<double> e(x.rows);
    double denom = 0.0;
    for (std::size_t j = 0; j < x.rows; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < q.cols; ++c) s += q(i, c) * k(j, c);
      e[j] = std::exp(s * inv_sqrt);
      denom += e[j];
    }
    for (std::size_t j = 0; j < x.rows; ++j)
      for (std::size_t c = 0; c < out.cols; ++c) out(i, c) += (e[j] / denom) * v(j, c);
  }
  return out;
}

}  // namespace oracle
