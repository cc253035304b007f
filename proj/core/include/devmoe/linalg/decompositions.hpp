// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "devmoe/linalg/matrix.hpp"

namespace devmoe::linalg {

struct QrResult {
  Matrix q;  ///< rows x k, orthonormal columns (k = min(rows, cols))
  Matrix r;  ///< k x cols, upper triangular
};

/// Thin Householder QR.
QrResult qr(const Matrix& m);

struct SvdOptions {
  std::size_t max_sweeps = 100;
  double tolerance = 1e-12;
};

/// Thin SVD, m = u·diag(s)·vt with k = min(rows, cols).
///
/// s is sorted descending; the largest-magnitude entry of every right
/// singular vector (row of vt) is positive, with u flipped to match.
struct SvdResult {
  Matrix u;               ///< rows x k
  std::vector<double> s;  ///< k, descending, >= 0
  Matrix vt;              ///< k x cols
};

/// One-sided Jacobi on the smaller Gram side, preceded by a QR reduction of
/// the tall orientation. Throws std::runtime_error naming the sweep cap if the
/// off-diagonal tolerance is not reached.
SvdResult svd(const Matrix& m, const SvdOptions& options = {});

/// Rows of vt belonging to the r largest singular values (r x m.cols()).
Matrix top_r_right_rows(const Matrix& m, std::size_t r);

/// P = bᵀ(b·bᵀ)⁻¹·b, the orthogonal projector onto the row space of b.
/// Requires full row rank (smallest singular value > 1e-10).
Matrix rowspace_projector(const Matrix& b);

/// Orthogonal projector (rows x rows) onto the span of m's columns. Singular
/// values below 1e-10·s_max are treated as zero.
Matrix colspace_projector(const Matrix& m);

/// Orthonormal basis of the row space of b (same shape, full row rank required).
Matrix orthonormalize_rows(const Matrix& b);

}  // namespace devmoe::linalg
