// SPDX-License-Identifier: Apache-2.0

#ifndef DRIFTTUNE_MAT_HPP
#define DRIFTTUNE_MAT_HPP

#include <cmath>
#include <cstddef>
#include <vector>

#include "drifttune/errors.hpp"
#include "drifttune/rng.hpp"

namespace drifttune {

using Vec = std::vector<double>;

/// Dense row-major matrix of doubles. Vectors are stored as 1 x n.
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double *row(std::size_t i) { return data.data() + i * cols; }
  const double *row(std::size_t i) const { return data.data() + i * cols; }

  double &at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  std::size_t size() const { return rows * cols; }

  void zero() { std::fill(data.begin(), data.end(), 0.0); }
  void fill(double v) { std::fill(data.begin(), data.end(), v); }

  bool same_shape(const Mat &o) const { return rows == o.rows && cols == o.cols; }
};

inline double dot(const double *a, const double *b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    s += a[i] * b[i];
  }
  return s;
}

/// out = a * b, shapes (m x k) * (k x n).
inline void matmul(const Mat &a, const Mat &b, Mat &out) {
  if (a.cols != b.rows) {
    throw DimensionError("matmul: inner dimensions differ");
  }
  out = Mat(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double *arow = a.row(i);
    double *orow = out.row(i);
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double av = arow[k];
      const double *brow = b.row(k);
      for (std::size_t j = 0; j < b.cols; ++j) {
        orow[j] += av * brow[j];
      }
    }
  }
}

/// Exact GELU, erf form: 0.5 * x * (1 + erf(x / sqrt(2))).
inline double gelu(double x) {
  return 0.5 * x * (1.0 + std::erf(x * 0.7071067811865475244));
}

/// d/dx of the exact GELU: Phi(x) + x * phi(x).
inline double gelu_grad(double x) {
  const double phi = std::exp(-0.5 * x * x) * 0.3989422804014326779;
  const double cdf = 0.5 * (1.0 + std::erf(x * 0.7071067811865475244));
  return cdf + x * phi;
}

/// Xavier-uniform fill: U(-limit, limit), limit = sqrt(6 / (rows + cols)).
inline void xavier_uniform(Mat &m, Rng &rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(m.rows + m.cols));
  for (double &v : m.data) {
    v = rng.uniform(-limit, limit);
  }
}

inline bool all_finite(const Mat &m) {
  for (double v : m.data) {
    if (!std::isfinite(v)) {
      return false;
    }
  }
  return true;
}

} // namespace drifttune

#endif
