// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <span>

#include "devmoe/linalg/matrix.hpp"

namespace devmoe::linalg {

// Products accumulate over the inner index left-to-right for every output
// entry, so results are reproducible bit-for-bit across runs.
Matrix matmul(const Matrix& a, const Matrix& b);
/// aᵀ·b without materialising the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// a·bᵀ without materialising the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& m);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double c);
Matrix hadamard(const Matrix& a, const Matrix& b);

/// dst += c·src
void axpy(Matrix& dst, const Matrix& src, double c = 1.0);

double frob_sq(const Matrix& m) noexcept;
double frob_norm(const Matrix& m) noexcept;
double max_abs(const Matrix& m) noexcept;
double max_abs_diff(const Matrix& a, const Matrix& b);

/// Columns `cols` of m, in order.
Matrix gather_cols(const Matrix& m, std::span<const std::size_t> cols);
/// Rows [begin, begin+count).
Matrix slice_rows(const Matrix& m, std::size_t begin, std::size_t count);

using Rng = std::mt19937_64;

/// Entries drawn i.i.d. from N(0, stddev²).
Matrix gaussian(std::size_t rows, std::size_t cols, double stddev, Rng& rng);

void require_same_shape(const Matrix& a, const Matrix& b, const char* op);

}  // namespace devmoe::linalg
