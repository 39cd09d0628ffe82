#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "promptctl/errors.hpp"
#include "promptctl/rng.hpp"

namespace promptctl {

// Dense row-major matrix of doubles. Deliberately minimal: the toolkit needs
// products, transposes, norms, a row-wise projection split and one singular
// value, nothing more.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // rows * cols, row-major

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  Matrix(std::size_t r, std::size_t c, std::vector<double> values)
      : rows(r), cols(c), data(std::move(values)) {
    if (data.size() != rows * cols) throw ShapeError("Matrix: data length != rows*cols");
  }

  static Matrix zeros(std::size_t r, std::size_t c) { return Matrix(r, c); }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static Matrix random_normal(std::size_t r, std::size_t c, Rng& rng, double stddev = 1.0) {
    Matrix m(r, c);
    for (double& v : m.data) v = stddev * rng.normal();
    return m;
  }

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }

  bool empty() const { return rows == 0 || cols == 0; }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

inline void require_shape(bool ok, const char* what) {
  if (!ok) throw ShapeError(what);
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  require_shape(a.cols == b.rows, "matmul: inner dimensions differ");
  Matrix out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    double* orow = out.data.data() + i * out.cols;
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = a(i, k);
      const double* brow = b.data.data() + k * b.cols;
      for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

// a * transpose(b)
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  require_shape(a.cols == b.cols, "matmul_nt: column counts differ");
  Matrix out(a.rows, b.rows);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < b.rows; ++j) out(i, j) = dot(a.row(i), b.row(j));
  return out;
}

// transpose(a) * b
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  require_shape(a.rows == b.rows, "matmul_tn: row counts differ");
  Matrix out(a.cols, b.cols);
  for (std::size_t k = 0; k < a.rows; ++k) {
    const double* arow = a.data.data() + k * a.cols;
    const double* brow = b.data.data() + k * b.cols;
    for (std::size_t i = 0; i < a.cols; ++i) {
      double* orow = out.data.data() + i * out.cols;
      const double aki = arow[i];
      for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aki * brow[j];
    }
  }
  return out;
}

inline Matrix transpose(const Matrix& m) {
  Matrix out(m.cols, m.rows);
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j) out(j, i) = m(i, j);
  return out;
}

inline Matrix add(const Matrix& a, const Matrix& b) {
  require_shape(a.same_shape(b), "add: shapes differ");
  Matrix out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
  return out;
}

inline Matrix subtract(const Matrix& a, const Matrix& b) {
  require_shape(a.same_shape(b), "subtract: shapes differ");
  Matrix out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.data[i];
  return out;
}

inline Matrix scale(const Matrix& m, double c) {
  Matrix out = m;
  for (double& v : out.data) v *= c;
  return out;
}

inline void add_in_place(Matrix& a, const Matrix& b) {
  require_shape(a.same_shape(b), "add_in_place: shapes differ");
  for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

// a += c * b
inline void axpy_in_place(Matrix& a, double c, const Matrix& b) {
  require_shape(a.same_shape(b), "axpy_in_place: shapes differ");
  for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += c * b.data[i];
}

inline Matrix stack_rows(const Matrix& top, const Matrix& bottom) {
  if (top.rows == 0) return bottom;
  if (bottom.rows == 0) return top;
  require_shape(top.cols == bottom.cols, "stack_rows: column counts differ");
  Matrix out(top.rows + bottom.rows, top.cols);
  std::copy(top.data.begin(), top.data.end(), out.data.begin());
  std::copy(bottom.data.begin(), bottom.data.end(), out.data.begin() + top.data.size());
  return out;
}

inline double row_norm(const Matrix& m, std::size_t i) { return norm(m.row(i)); }

inline double max_row_norm(const Matrix& m) {
  double best = 0.0;
  for (std::size_t i = 0; i < m.rows; ++i) best = std::max(best, row_norm(m, i));
  return best;
}

inline double frobenius_norm(const Matrix& m) {
  double s = 0.0;
  for (double v : m.data) s += v * v;
  return std::sqrt(s);
}

inline double max_abs(const Matrix& m) {
  double best = 0.0;
  for (double v : m.data) best = std::max(best, std::abs(v));
  return best;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_shape(a.same_shape(b), "max_abs_diff: shapes differ");
  double best = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    best = std::max(best, std::abs(a.data[i] - b.data[i]));
  return best;
}

// max over rows of the euclidean distance between matching rows
inline double max_row_distance(const Matrix& a, const Matrix& b) {
  require_shape(a.same_shape(b), "max_row_distance: shapes differ");
  double best = 0.0;
  for (std::size_t i = 0; i < a.rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.cols; ++j) {
      const double d = a(i, j) - b(i, j);
      s += d * d;
    }
    best = std::max(best, std::sqrt(s));
  }
  return best;
}

// Largest singular value via power iteration on m^T m (applied as two products,
// m^T m is never formed). The start vector comes from a fixed internal seed so
// repeated calls are identical. Converged when successive Rayleigh quotients
// agree to 1e-13 relative; a 10000-iteration cap throws NumericError with the
// last sigma estimate attached.
inline double max_singular_value(const Matrix& m) {
  if (m.empty()) throw ArgumentError("max_singular_value: empty matrix");
  constexpr int kMaxIters = 10000;
  constexpr double kRelTol = 1e-13;

  Rng rng(0x5eed0f5eed0f5eedull);
  std::vector<double> v(m.cols), mv(m.rows), w(m.cols);
  auto reseed = [&] {
    double n2 = 0.0;
    for (double& x : v) {
      x = rng.normal();
      n2 += x * x;
    }
    const double n = std::sqrt(n2);
    for (double& x : v) x /= n;
  };
  reseed();

  double rayleigh_prev = -1.0;
  double rayleigh = 0.0;
  int restarts = 0;
  for (int iter = 0; iter < kMaxIters; ++iter) {
    // mv = m v
    for (std::size_t i = 0; i < m.rows; ++i) mv[i] = dot(m.row(i), std::span<const double>(v));
    rayleigh = dot(mv, mv);  // v^T m^T m v with ||v|| = 1
    if (iter > 0) {
      const double scale_ref = std::max(rayleigh, rayleigh_prev);
      if (scale_ref == 0.0 || std::abs(rayleigh - rayleigh_prev) <= kRelTol * scale_ref)
        return std::sqrt(rayleigh);
    }
    rayleigh_prev = rayleigh;
    // w = m^T mv
    std::fill(w.begin(), w.end(), 0.0);
    for (std::size_t i = 0; i < m.rows; ++i) {
      const double* mrow = m.data.data() + i * m.cols;
      for (std::size_t j = 0; j < m.cols; ++j) w[j] += mrow[j] * mv[i];
    }
    const double wn = norm(w);
    if (wn == 0.0) {
      bool all_zero = true;
      for (double x : m.data)
        if (x != 0.0) {
          all_zero = false;
          break;
        }
      if (all_zero) return 0.0;
      // start vector landed in the null space; try another one
      if (++restarts > 5) throw NumericError("max_singular_value: degenerate iterate", 0.0);
      reseed();
      rayleigh_prev = -1.0;
      continue;
    }
    for (std::size_t j = 0; j < m.cols; ++j) v[j] = w[j] / wn;
  }
  throw NumericError("max_singular_value: no convergence within iteration cap",
                     std::sqrt(rayleigh));
}

// Row-wise split of y against the matching rows of target: parallel holds the
// component along each target row, orthogonal the remainder, so
// parallel + orthogonal == y and matching rows of parallel/orthogonal are
// perpendicular. A zero target row spans nothing: that whole row of y is
// orthogonal.
struct RowDecomposition {
  Matrix parallel;
  Matrix orthogonal;
};

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double log_sum_exp(std::span<const double> xs) {
  double m = kNegInf;
  for (double x : xs) m = std::max(m, x);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

inline RowDecomposition row_decompose(const Matrix& y, const Matrix& target) {
  require_shape(y.same_shape(target), "row_decompose: shapes differ");
  RowDecomposition out{Matrix(y.rows, y.cols), Matrix(y.rows, y.cols)};
  for (std::size_t i = 0; i < y.rows; ++i) {
    const auto yrow = y.row(i);
    const auto trow = target.row(i);
    const double tt = dot(trow, trow);
    if (tt == 0.0) {
      std::copy(yrow.begin(), yrow.end(), out.orthogonal.row(i).begin());
      continue;
    }
    const double c = dot(yrow, trow) / tt;
    for (std::size_t j = 0; j < y.cols; ++j) {
      const double par = c * trow[j];
      out.parallel(i, j) = par;
      out.orthogonal(i, j) = yrow[j] - par;
    }
  }
  return out;
}

}  // namespace promptctl
