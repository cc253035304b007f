// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "devmoe/autodiff/tape.hpp"
#include "devmoe/linalg/matrix.hpp"

namespace devmoe::selfcheck {

using linalg::Matrix;

/// Outcome of one named check: `value` is the worst observed error.
struct CheckResult {
  std::string name;
  bool passed = false;
  double value = 0.0;
  double tolerance = 0.0;
  std::string detail;
};

/// Builds a scalar loss from parameter handles recorded on `tape`.
using LossBuilder = std::function<ad::Var(ad::Tape& tape, std::span<const ad::Var> params)>;

struct FdReport {
  /// max |analytic − fd| / max(|analytic|, |fd|) over entries with
  /// |analytic| > floor; entries below the floor count as 1 if |fd| > 1e-5.
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

/// Central finite differences with step `eps` against Tape::backward.
FdReport finite_difference_check(const LossBuilder& build, const std::vector<Matrix>& params, double eps = 1e-5,
                                 double floor = 1e-8);

/// Max over `batches` random batches and every adapted layer of
/// ‖G − G·P_H‖ / ‖G‖, where G is the gradient of the layer's frozen weight or
/// of a trainable B, and P_H projects onto the span of the layer's inputs.
double gradient_span_residual(std::uint64_t seed, std::size_t batches);

/// Max over `fixtures` of ‖ΔW_A − ΔW_proj‖ / ‖ΔW_proj‖ for one SGD step on A
/// of a single-expert layer with orthonormal B rows.
double projection_identity_error(std::uint64_t seed, std::size_t fixtures);

struct GradcheckOptions {
  /// Swap one primitive for a copy with a wrong backward rule.
  bool inject_fault = false;
  std::uint64_t seed = 11;
};

/// Runs every named check: primitives, svd_rows, composed_loss,
/// gradient_in_input_span, projection_identity, frozen_svd_no_flow.
std::vector<CheckResult> run_gradcheck(const GradcheckOptions& options = {});

}  // namespace devmoe::selfcheck
