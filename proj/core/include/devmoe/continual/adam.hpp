// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "devmoe/linalg/matrix.hpp"

namespace devmoe::continual {

using linalg::Matrix;

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Moments are created lazily on the first step, shaped like the parameters.
struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::size_t step = 0;
};

/// Bias-corrected Adam update of every params[i] by grads[i]. The parameter
/// list must keep the same length and shapes across calls on one state.
void adam_step(AdamState& state, std::span<Matrix* const> params, std::span<const Matrix> grads,
               const AdamConfig& config);

}  // namespace devmoe::continual
