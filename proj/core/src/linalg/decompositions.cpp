// SPDX-License-Identifier: Apache-2.0
#include "devmoe/linalg/decompositions.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "devmoe/linalg/ops.hpp"

namespace devmoe::linalg {
namespace {

double column_dot(const Matrix& m, std::size_t p, std::size_t q) {
  double acc = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i) acc += m(i, p) * m(i, q);
  return acc;
}

void rotate_columns(Matrix& m, std::size_t p, std::size_t q, double c, double s) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double xp = m(i, p);
    const double xq = m(i, q);
    m(i, p) = c * xp - s * xq;
    m(i, q) = s * xp + c * xq;
  }
}

// Replace the flagged columns of an orthonormal-column matrix with unit
// vectors orthogonal to every other column.
void complete_orthonormal_columns(Matrix& u, const std::vector<bool>& missing) {
  const std::size_t n = u.rows();
  std::size_t candidate = 0;
  for (std::size_t j = 0; j < u.cols(); ++j) {
    if (!missing[j]) continue;
    bool placed = false;
    while (!placed && candidate < n) {
      std::vector<double> v(n, 0.0);
      v[candidate++] = 1.0;
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t k = 0; k < u.cols(); ++k) {
          if (k == j || (missing[k] && k > j)) continue;
          double dot = 0.0;
          for (std::size_t i = 0; i < n; ++i) dot += u(i, k) * v[i];
          for (std::size_t i = 0; i < n; ++i) v[i] -= dot * u(i, k);
        }
      }
      double norm = 0.0;
      for (double x : v) norm += x * x;
      norm = std::sqrt(norm);
      if (norm > 0.5) {
        for (std::size_t i = 0; i < n; ++i) u(i, j) = v[i] / norm;
        placed = true;
      }
    }
    if (!placed) throw std::runtime_error("svd: failed to complete orthonormal basis");
  }
}

// Largest-magnitude entry of every row of vt made positive; u columns follow.
void apply_sign_convention(SvdResult& r) {
  for (std::size_t k = 0; k < r.vt.rows(); ++k) {
    auto row = r.vt.row_span(k);
    std::size_t arg = 0;
    for (std::size_t j = 1; j < row.size(); ++j) {
      if (std::abs(row[j]) > std::abs(row[arg])) arg = j;
    }
    if (row[arg] < 0.0) {
      for (double& x : row) x = -x;
      for (std::size_t i = 0; i < r.u.rows(); ++i) r.u(i, k) = -r.u(i, k);
    }
  }
}

// rows >= cols
SvdResult svd_tall(const Matrix& m, const SvdOptions& options) {
  const std::size_t n = m.cols();
  QrResult f = qr(m);
  Matrix w = std::move(f.r);  // n x n
  Matrix v = Matrix::identity(n);

  bool converged = n < 2;
  for (std::size_t sweep = 0; sweep < options.max_sweeps && !converged; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double alpha = column_dot(w, p, p);
        const double beta = column_dot(w, q, q);
        const double gamma = column_dot(w, p, q);
        if (gamma == 0.0 || std::abs(gamma) <= options.tolerance * std::sqrt(alpha * beta)) continue;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        rotate_columns(w, p, q, c, s);
        rotate_columns(v, p, q, c, s);
        rotated = true;
      }
    }
    converged = !rotated;
  }
  if (!converged) {
    throw std::runtime_error("svd: one-sided Jacobi did not converge within " +
                             std::to_string(options.max_sweeps) + " sweeps");
  }

  std::vector<double> norms(n);
  for (std::size_t j = 0; j < n; ++j) norms[j] = std::sqrt(column_dot(w, j, j));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return norms[a] > norms[b]; });

  const double smax = n == 0 ? 0.0 : norms[order[0]];
  Matrix ur(n, n);
  SvdResult out;
  out.s.resize(n);
  out.vt = Matrix(n, n);
  std::vector<bool> missing(n, false);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = order[k];
    out.s[k] = norms[j];
    for (std::size_t i = 0; i < n; ++i) out.vt(k, i) = v(i, j);
    if (norms[j] == 0.0 || norms[j] <= smax * 1e-15) {
      missing[k] = true;
    } else {
      for (std::size_t i = 0; i < n; ++i) ur(i, k) = w(i, j) / norms[j];
    }
  }
  if (std::any_of(missing.begin(), missing.end(), [](bool b) { return b; })) {
    complete_orthonormal_columns(ur, missing);
  }
  out.u = matmul(f.q, ur);
  apply_sign_convention(out);
  return out;
}

}  // namespace

QrResult qr(const Matrix& m) {
  const std::size_t rows = m.rows(), cols = m.cols();
  const std::size_t k = std::min(rows, cols);
  Matrix a = m;
  std::vector<std::vector<double>> reflectors(k);

  for (std::size_t j = 0; j < k; ++j) {
    double norm = 0.0;
    for (std::size_t i = j; i < rows; ++i) norm += a(i, j) * a(i, j);
    norm = std::sqrt(norm);
    if (norm == 0.0) continue;
    const double alpha = a(j, j) >= 0.0 ? -norm : norm;
    std::vector<double> v(rows - j);
    for (std::size_t i = j; i < rows; ++i) v[i - j] = a(i, j);
    v[0] -= alpha;
    double vnorm2 = 0.0;
    for (double x : v) vnorm2 += x * x;
    if (vnorm2 == 0.0) continue;
    for (std::size_t c = j; c < cols; ++c) {
      double dot = 0.0;
      for (std::size_t i = j; i < rows; ++i) dot += v[i - j] * a(i, c);
      const double f = 2.0 * dot / vnorm2;
      for (std::size_t i = j; i < rows; ++i) a(i, c) -= f * v[i - j];
    }
    for (double& x : v) x /= std::sqrt(vnorm2);
    reflectors[j] = std::move(v);
  }

  QrResult out;
  out.r = Matrix(k, cols);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t c = i; c < cols; ++c) out.r(i, c) = a(i, c);

  out.q = Matrix(rows, k);
  for (std::size_t i = 0; i < k; ++i) out.q(i, i) = 1.0;
  for (std::size_t jj = k; jj-- > 0;) {
    const auto& v = reflectors[jj];
    if (v.empty()) continue;
    for (std::size_t c = 0; c < k; ++c) {
      double dot = 0.0;
      for (std::size_t i = jj; i < rows; ++i) dot += v[i - jj] * out.q(i, c);
      for (std::size_t i = jj; i < rows; ++i) out.q(i, c) -= 2.0 * dot * v[i - jj];
    }
  }
  return out;
}

SvdResult svd(const Matrix& m, const SvdOptions& options) {
  if (m.rows() == 0 || m.cols() == 0) {
    throw std::invalid_argument("svd: empty matrix " + m.shape_string());
  }
  if (m.rows() >= m.cols()) return svd_tall(m, options);
  SvdResult t = svd_tall(transpose(m), options);
  SvdResult out;
  out.s = std::move(t.s);
  out.u = transpose(t.vt);
  out.vt = transpose(t.u);
  apply_sign_convention(out);
  return out;
}

Matrix top_r_right_rows(const Matrix& m, std::size_t r) {
  const std::size_t k = std::min(m.rows(), m.cols());
  if (r == 0 || r > k) {
    throw std::invalid_argument("top_r_right_rows: r=" + std::to_string(r) + " outside [1, " +
                                std::to_string(k) + "] for " + m.shape_string());
  }
  return slice_rows(svd(m).vt, 0, r);
}

Matrix rowspace_projector(const Matrix& b) {
  const SvdResult f = svd(b);
  if (b.rows() > b.cols() || f.s.back() <= 1e-10) {
    const double smin = b.rows() > b.cols() ? 0.0 : f.s.back();
    throw std::invalid_argument("rowspace_projector: " + b.shape_string() +
                                " is not full row rank (smallest singular value " +
                                std::to_string(smin) + ")");
  }
  return matmul_tn(f.vt, f.vt);
}

Matrix orthonormalize_rows(const Matrix& b) {
  const SvdResult f = svd(b);
  if (b.rows() > b.cols() || f.s.back() <= 1e-10) {
    throw std::invalid_argument("orthonormalize_rows: " + b.shape_string() + " is not full row rank");
  }
  return f.vt;
}

Matrix colspace_projector(const Matrix& m) {
  if (m.empty()) return Matrix(m.rows(), m.rows());
  const SvdResult f = svd(m);
  const double cut = 1e-10 * f.s.front();
  std::size_t k = 0;
  while (k < f.s.size() && f.s[k] > cut) ++k;
  Matrix p(m.rows(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.rows(); ++j) {
      double acc = 0.0;
      for (std::size_t c = 0; c < k; ++c) acc += f.u(i, c) * f.u(j, c);
      p(i, j) = acc;
    }
  return p;
}

}  // namespace devmoe::linalg
