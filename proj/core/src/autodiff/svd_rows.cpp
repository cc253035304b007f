// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "devmoe/autodiff/ops.hpp"
#include "devmoe/linalg/decompositions.hpp"
#include "devmoe/linalg/ops.hpp"

namespace devmoe::ad {
namespace la = devmoe::linalg;

// Rows of the output are the top-r eigenvectors v_i of A = xᵀx (λ_i = s_i²).
// First-order perturbation: dv_i = Σ_{j≠i} v_j (v_jᵀ dA v_i) / (λ_i − λ_j),
// where j also ranges over the null space of A when x is wide (λ_j = 0).
// Each 1/Δ is replaced by Δ/(Δ² + ε²). With G_A the symmetric part of
// Σ_i Σ_j c_ij v_j v_iᵀ, the input gradient is 2·x·G_A.
Var truncated_svd_rows(const Var& x, std::size_t r, const SvdRowsOptions& options,
                       SvdRowsDiagnostics* diagnostics) {
  const Matrix& in = x.value();
  const std::size_t k = std::min(in.rows(), in.cols());
  if (r == 0 || r > k) {
    throw std::invalid_argument("truncated_svd_rows: r=" + std::to_string(r) + " outside [1, " +
                                std::to_string(k) + "] for " + in.shape_string());
  }
  la::SvdResult f = la::svd(in);
  Matrix rows = la::slice_rows(f.vt, 0, r);

  const double eps = options.gap_epsilon;
  if (diagnostics) {
    const double next = r < k ? f.s[r] : 0.0;
    diagnostics->spectral_gap = f.s[r - 1] - next;
    diagnostics->degenerate = (f.s[r - 1] * f.s[r - 1] - next * next) <= eps;
  }

  if (!options.gradient_flow) return x.tape().constant(std::move(rows));

  std::vector<double> lambda(k);
  for (std::size_t j = 0; j < k; ++j) lambda[j] = f.s[j] * f.s[j];
  Matrix vt = std::move(f.vt);  // k x n
  const bool wide = in.cols() > k;

  return x.tape().record(
      "truncated_svd_rows", std::move(rows), {x},
      [vt = std::move(vt), lambda = std::move(lambda), r, k, eps, wide](const BackwardContext& ctx) {
        const auto gap = [eps](double d) { return d / (d * d + eps * eps); };
        const Matrix& g = ctx.grad_out;  // r x n, row i = dL/dv_i
        const Matrix& y = ctx.value_out;  // r x n, row i = v_i
        const std::size_t n = g.cols();

        // coeff(j, i) = gap(λ_i − λ_j)·(v_j · g_i), j ≠ i
        Matrix proj = la::matmul_nt(vt, g);  // k x r
        Matrix coeff(k, r);
        for (std::size_t j = 0; j < k; ++j)
          for (std::size_t i = 0; i < r; ++i)
            if (i != j) coeff(j, i) = gap(lambda[i] - lambda[j]) * proj(j, i);

        // M = Vᵀ·coeff·Y  (n x n)
        Matrix m = la::matmul_tn(vt, la::matmul(coeff, y));

        if (wide) {
          // (I − VᵀV)·gᵢ scaled by gap(λ_i) and paired with v_iᵀ.
          Matrix perp = la::transpose(g);  // n x r
          la::axpy(perp, la::matmul_tn(vt, proj), -1.0);
          for (std::size_t row = 0; row < n; ++row)
            for (std::size_t i = 0; i < r; ++i) perp(row, i) *= gap(lambda[i]);
          la::axpy(m, la::matmul(perp, y));
        }

        Matrix sym = la::add(m, la::transpose(m));  // = 2·G_A
        la::axpy(*ctx.input_grads[0], la::matmul(*ctx.inputs[0], sym));
      });
}

}  // namespace devmoe::ad
