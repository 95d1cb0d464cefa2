#pragma once
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "lekit/error.hpp"
#include "lekit/rng.hpp"

namespace lekit {

/// Dense row-major matrix of doubles. The one container every module shares.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // rows * cols, row-major

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  static Matrix zeros(std::size_t r, std::size_t c) { return Matrix(r, c, 0.0); }
  static Matrix ones(std::size_t r, std::size_t c) { return Matrix(r, c, 1.0); }
  static Matrix full(std::size_t r, std::size_t c, double v) { return Matrix(r, c, v); }

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  std::size_t size() const { return data.size(); }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
  bool is_scalar() const { return rows == 1 && cols == 1; }

  std::string shape_str() const { return std::to_string(rows) + "x" + std::to_string(cols); }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows == b.rows && a.cols == b.cols && a.data == b.data;
  }
};

// ---- scalar helpers -------------------------------------------------------

/// Overflow-safe logistic function.
inline double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// softplus(x) = max(x,0) + log1p(exp(-|x|)); never overflows, always > 0.
inline double stable_softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

// ---- kernels --------------------------------------------------------------
// These are the single source of truth for every primitive: the tape and the
// plain inference path both call them, so replays are bit-identical.

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) throw ShapeError("matmul", a.shape_str(), b.shape_str());
  Matrix c(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* arow = &a.data[i * a.cols];
    double* crow = &c.data[i * c.cols];
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = arow[k];
      if (aik == 0.0) continue;
      const double* brow = &b.data[k * b.cols];
      for (std::size_t j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

/// a * b^T
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols != b.cols) throw ShapeError("matmul_nt", a.shape_str(), b.shape_str());
  Matrix c(a.rows, b.rows);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* arow = &a.data[i * a.cols];
    for (std::size_t j = 0; j < b.rows; ++j) {
      const double* brow = &b.data[j * b.cols];
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) acc += arow[k] * brow[k];
      c(i, j) = acc;
    }
  }
  return c;
}

/// a^T * b
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows != b.rows) throw ShapeError("matmul_tn", a.shape_str(), b.shape_str());
  Matrix c(a.cols, b.cols);
  for (std::size_t k = 0; k < a.rows; ++k) {
    const double* arow = &a.data[k * a.cols];
    const double* brow = &b.data[k * b.cols];
    for (std::size_t i = 0; i < a.cols; ++i) {
      const double aki = arow[i];
      if (aki == 0.0) continue;
      double* crow = &c.data[i * c.cols];
      for (std::size_t j = 0; j < b.cols; ++j) crow[j] += aki * brow[j];
    }
  }
  return c;
}

inline Matrix transpose(const Matrix& a) {
  Matrix t(a.cols, a.rows);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
  return t;
}

namespace detail {
template <class F>
Matrix zip(const char* op, const Matrix& a, const Matrix& b, F f) {
  if (!a.same_shape(b)) throw ShapeError(op, a.shape_str(), b.shape_str());
  Matrix c(a.rows, a.cols);
  for (std::size_t i = 0; i < a.size(); ++i) c.data[i] = f(a.data[i], b.data[i]);
  return c;
}
template <class F>
Matrix map(const Matrix& a, F f) {
  Matrix c(a.rows, a.cols);
  for (std::size_t i = 0; i < a.size(); ++i) c.data[i] = f(a.data[i]);
  return c;
}
}  // namespace detail

inline Matrix add(const Matrix& a, const Matrix& b) {
  return detail::zip("add", a, b, [](double x, double y) { return x + y; });
}
inline Matrix sub(const Matrix& a, const Matrix& b) {
  return detail::zip("subtract", a, b, [](double x, double y) { return x - y; });
}
inline Matrix hadamard(const Matrix& a, const Matrix& b) {
  return detail::zip("multiply", a, b, [](double x, double y) { return x * y; });
}
inline Matrix scale(const Matrix& a, double c) {
  return detail::map(a, [c](double x) { return c * x; });
}
inline Matrix add_scalar(const Matrix& a, double c) {
  return detail::map(a, [c](double x) { return x + c; });
}
inline Matrix map_sigmoid(const Matrix& a) { return detail::map(a, stable_sigmoid); }
inline Matrix map_softplus(const Matrix& a) { return detail::map(a, stable_softplus); }
inline Matrix map_exp(const Matrix& a) {
  return detail::map(a, [](double x) { return std::exp(x); });
}
inline Matrix map_square(const Matrix& a) {
  return detail::map(a, [](double x) { return x * x; });
}

/// Natural log; rejects non-positive entries.
inline Matrix map_log(const Matrix& a) {
  for (double v : a.data)
    if (!(v > 0.0)) throw NumericError("log", "non-positive input " + std::to_string(v));
  return detail::map(a, [](double x) { return std::log(x); });
}

/// Row-wise softmax with the usual max-shift for stability.
inline Matrix row_softmax(const Matrix& a) {
  Matrix s(a.rows, a.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    double mx = a(i, 0);
    for (std::size_t j = 1; j < a.cols; ++j) mx = std::max(mx, a(i, j));
    double denom = 0.0;
    for (std::size_t j = 0; j < a.cols; ++j) {
      const double e = std::exp(a(i, j) - mx);
      s(i, j) = e;
      denom += e;
    }
    for (std::size_t j = 0; j < a.cols; ++j) s(i, j) /= denom;
  }
  return s;
}

/// n x c -> n x 1
inline Matrix row_sum(const Matrix& a) {
  Matrix s(a.rows, 1);
  for (std::size_t i = 0; i < a.rows; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < a.cols; ++j) acc += a(i, j);
    s(i, 0) = acc;
  }
  return s;
}

/// Sum of all entries as a 1x1 matrix.
inline Matrix sum_all(const Matrix& a) {
  double acc = 0.0;
  for (double v : a.data) acc += v;
  Matrix s(1, 1);
  s(0, 0) = acc;
  return s;
}

inline Matrix normal_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols);
  for (auto& v : m.data) v = rng.normal();
  return m;
}

inline Matrix uniform_matrix(Rng& rng, std::size_t rows, std::size_t cols, double lo, double hi) {
  Matrix m(rows, cols);
  for (auto& v : m.data) v = rng.uniform(lo, hi);
  return m;
}

}  // namespace lekit
