// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "devmoe/autodiff/tape.hpp"

namespace devmoe::ad {

// Shape errors throw std::invalid_argument naming the op and the operand shapes.

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var scale(const Var& a, double c);
Var hadamard(const Var& a, const Var& b);
Var transpose(const Var& a);
/// Elementwise sum of equally shaped values.
Var sum(std::span<const Var> terms);

Var relu(const Var& x);
/// tanh approximation: 0.5·x·(1 + tanh(√(2/π)·(x + 0.044715·x³))).
Var gelu(const Var& x);
Var sigmoid(const Var& x);

/// Row-wise softmax of x / temperature.
Var softmax_rows(const Var& x, double temperature);
/// Column-wise softmax of x / temperature.
Var softmax_cols(const Var& x, double temperature);

/// Mean of every row (r x 1).
Var row_mean(const Var& x);
/// Mean of every column (1 x c).
Var col_mean(const Var& x);
/// Euclidean norm of every column (1 x c).
Var col_l2norm(const Var& x);
Var full_mean(const Var& x);
/// Population variance over all entries.
Var full_variance(const Var& x);
Var frob_sq(const Var& x);
/// Mean binary cross-entropy of probabilities `pred` against 0/1 `labels`.
Var bce(const Var& pred, const Matrix& labels);

/// Scalar a / scalar b.
Var divide(const Var& a, const Var& b);
/// x + b with a column vector b (r x 1) broadcast over columns.
Var add_col_broadcast(const Var& x, const Var& b);
/// x + s with a 1x1 s broadcast over every entry.
Var add_scalar_broadcast(const Var& x, const Var& s);
/// Column j of x multiplied by w(0, j); w is 1 x c.
Var col_scale(const Var& x, const Var& w);
/// Sums consecutive groups of `group` columns: (r x g·n) -> (r x n).
Var group_col_sum(const Var& x, std::size_t group);
/// Per-sample token mixing. x is d x (n·T) with each sample's T token
/// columns contiguous; output column (s,j) = Σ_k mix(j,k)·x(:, (s,k)).
Var token_mix(const Var& x, const Var& mix);
/// Stack row blocks vertically.
Var vstack(std::span<const Var> parts);
/// Row k of x (1 x c).
Var row_of(const Var& x, std::size_t k);
/// Every `stride`-th column starting at 0.
Var subsample_cols(const Var& x, std::size_t stride);

struct SvdRowsOptions {
  /// Gap regulariser ε in (Δ)/(Δ² + ε²), Δ = s_i² − s_j².
  double gap_epsilon = 1e-6;
  /// When false the op is recorded as a constant (no gradient flows).
  bool gradient_flow = true;
};

struct SvdRowsDiagnostics {
  /// s_r − s_{r+1} (or s_r when r is the full rank).
  double spectral_gap = 0.0;
  /// True when the gap fell below the regulariser scale.
  bool degenerate = false;
};

/// Top-r right singular vectors of x as rows (r x x.cols()). Backward is the
/// first-order differential of the Gram eigenvectors with a regularised gap.
Var truncated_svd_rows(const Var& x, std::size_t r, const SvdRowsOptions& options = {},
                       SvdRowsDiagnostics* diagnostics = nullptr);

}  // namespace devmoe::ad
