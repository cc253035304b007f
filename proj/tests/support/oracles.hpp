// SPDX-License-Identifier: Apache-2.0
// Reference implementations used only by tests. Everything here is computed
// independently of the library code paths it checks.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

#include "devmoe/linalg/matrix.hpp"

namespace oracle {

using devmoe::linalg::Matrix;

inline Eigen::MatrixXd to_eigen(const Matrix& m) {
  Eigen::MatrixXd e(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) e(i, j) = m(i, j);
  return e;
}

inline Matrix from_eigen(const Eigen::MatrixXd& e) {
  Matrix m(e.rows(), e.cols());
  for (Eigen::Index i = 0; i < e.rows(); ++i)
    for (Eigen::Index j = 0; j < e.cols(); ++j) m(i, j) = e(i, j);
  return m;
}

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double stddev = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, stddev);
  Matrix m(rows, cols);
  for (double& v : m.values()) v = n(rng);
  return m;
}

/// Plain triple loop, i-j-k order.
inline Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

/// Eigenvalues of mᵀm, descending.
inline std::vector<double> gram_eigenvalues(const Matrix& m) {
  const Eigen::MatrixXd e = to_eigen(m);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(e.transpose() * e);
  std::vector<double> out(es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());
  std::sort(out.rbegin(), out.rend());
  return out;
}

/// Top-r eigenvectors of mᵀm as columns (cols x r).
inline Eigen::MatrixXd gram_top_eigenvectors(const Matrix& m, std::size_t r) {
  const Eigen::MatrixXd e = to_eigen(m);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(e.transpose() * e);
  const Eigen::Index n = es.eigenvectors().cols();
  Eigen::MatrixXd out(e.cols(), r);
  for (std::size_t k = 0; k < r; ++k) out.col(k) = es.eigenvectors().col(n - 1 - static_cast<Eigen::Index>(k));
  return out;
}

/// Sine of the largest principal angle between the column spans of two
/// orthonormal bases of equal size.
inline double max_principal_angle_sin(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a.transpose() * b);
  const double c = svd.singularValues().minCoeff();
  return std::sqrt(std::max(0.0, 1.0 - c * c));
}

/// Least-squares residual of v against the row space of b, via Eigen's QR.
inline Eigen::VectorXd rowspace_residual(const Matrix& b, const Eigen::VectorXd& v) {
  const Eigen::MatrixXd bt = to_eigen(b).transpose();
  const Eigen::VectorXd coef = bt.colPivHouseholderQr().solve(v);
  return v - bt * coef;
}

/// Mann-Whitney AUC in percent by counting all positive/negative pairs.
inline double pairwise_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[i] != 1 || y[j] != 0) continue;
      pairs += 1.0;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  return 100.0 * wins / pairs;
}

}  // namespace oracle
