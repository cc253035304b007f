// SPDX-License-Identifier: Apache-2.0
#include "devmoe/linalg/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace devmoe::linalg {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                                b.shape_string());
  }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: inner dimensions differ, " + a.shape_string() + " * " +
                                b.shape_string());
  }
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  Matrix c(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    double* crow = c.row_span(i).data();
    const double* arow = a.row_span(i).data();
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b.row_span(p).data();
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw std::invalid_argument("matmul_tn: row counts differ, " + a.shape_string() + "^T * " +
                                b.shape_string());
  }
  const std::size_t n = a.cols(), k = a.rows(), m = b.cols();
  Matrix c(n, m);
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = a.row_span(p).data();
    const double* brow = b.row_span(p).data();
    for (std::size_t i = 0; i < n; ++i) {
      const double av = arow[i];
      double* crow = c.row_span(i).data();
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw std::invalid_argument("matmul_nt: column counts differ, " + a.shape_string() + " * " +
                                b.shape_string() + "^T");
  }
  const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
  Matrix c(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = a.row_span(i).data();
    for (std::size_t j = 0; j < m; ++j) {
      const double* brow = b.row_span(j).data();
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c(i, j) = acc;
    }
  }
  return c;
}

Matrix transpose(const Matrix& m) {
  Matrix t(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
  return t;
}

Matrix add(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "add");
  Matrix c = a;
  axpy(c, b, 1.0);
  return c;
}

Matrix sub(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "sub");
  Matrix c = a;
  axpy(c, b, -1.0);
  return c;
}

Matrix scale(const Matrix& a, double s) {
  Matrix c = a;
  for (double& x : c.values()) x *= s;
  return c;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "hadamard");
  Matrix c = a;
  auto cv = c.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < cv.size(); ++i) cv[i] *= bv[i];
  return c;
}

void axpy(Matrix& dst, const Matrix& src, double c) {
  require_same_shape(dst, src, "axpy");
  auto d = dst.values();
  auto s = src.values();
  if (c == 1.0) {
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
  } else {
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += c * s[i];
  }
}

double frob_sq(const Matrix& m) noexcept {
  double acc = 0.0;
  for (double x : m.values()) acc += x * x;
  return acc;
}

double frob_norm(const Matrix& m) noexcept { return std::sqrt(frob_sq(m)); }

double max_abs(const Matrix& m) noexcept {
  double best = 0.0;
  for (double x : m.values()) best = std::max(best, std::abs(x));
  return best;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double best = 0.0;
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) best = std::max(best, std::abs(av[i] - bv[i]));
  return best;
}

Matrix gather_cols(const Matrix& m, std::span<const std::size_t> cols) {
  Matrix out(m.rows(), cols.size());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double* src = m.row_span(i).data();
    double* dst = out.row_span(i).data();
    for (std::size_t j = 0; j < cols.size(); ++j) {
      if (cols[j] >= m.cols()) throw std::out_of_range("gather_cols: column index out of range");
      dst[j] = src[cols[j]];
    }
  }
  return out;
}

Matrix slice_rows(const Matrix& m, std::size_t begin, std::size_t count) {
  if (begin + count > m.rows()) {
    throw std::out_of_range("slice_rows: rows [" + std::to_string(begin) + "," +
                            std::to_string(begin + count) + ") outside " + m.shape_string());
  }
  Matrix out(count, m.cols());
  std::copy_n(m.values().begin() + static_cast<std::ptrdiff_t>(begin * m.cols()), count * m.cols(),
              out.values().begin());
  return out;
}

Matrix gaussian(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (double& x : m.values()) x = dist(rng);
  return m;
}

}  // namespace devmoe::linalg
