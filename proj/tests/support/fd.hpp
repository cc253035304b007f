// SPDX-License-Identifier: Apache-2.0
// Central finite differences, written against the public Tape API only.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "devmoe/autodiff/tape.hpp"

namespace oracle {

using devmoe::ad::Tape;
using devmoe::ad::Var;
using devmoe::linalg::Matrix;

using Builder = std::function<Var(Tape&, std::span<const Var>)>;

inline double eval_loss(const Builder& build, const std::vector<Matrix>& params) {
  Tape tape;
  std::vector<Var> vars;
  for (const Matrix& p : params) vars.push_back(tape.parameter(p));
  return build(tape, vars).value().scalar();
}

inline std::vector<Matrix> analytic_grads(const Builder& build, const std::vector<Matrix>& params) {
  Tape tape;
  std::vector<Var> vars;
  for (const Matrix& p : params) vars.push_back(tape.parameter(p));
  const Var loss = build(tape, vars);
  const auto g = tape.backward(loss, vars);
  std::vector<Matrix> out;
  for (const Var& v : vars) out.push_back(g.at(v));
  return out;
}

inline std::vector<Matrix> numeric_grads(const Builder& build, std::vector<Matrix> params, double eps = 1e-5) {
  std::vector<Matrix> out;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Matrix g(params[p].rows(), params[p].cols());
    for (std::size_t k = 0; k < params[p].size(); ++k) {
      const double saved = params[p].values()[k];
      params[p].values()[k] = saved + eps;
      const double up = eval_loss(build, params);
      params[p].values()[k] = saved - eps;
      const double down = eval_loss(build, params);
      params[p].values()[k] = saved;
      g.values()[k] = (up - down) / (2.0 * eps);
    }
    out.push_back(std::move(g));
  }
  return out;
}

/// Max relative error over entries with |analytic| > floor. Entries below the
/// floor fail (return 1) only if the numeric value is clearly non-zero.
inline double max_rel_error(const std::vector<Matrix>& analytic, const std::vector<Matrix>& numeric,
                            double floor = 1e-8) {
  double worst = 0.0;
  for (std::size_t p = 0; p < analytic.size(); ++p)
    for (std::size_t k = 0; k < analytic[p].size(); ++k) {
      const double a = analytic[p].values()[k];
      const double n = numeric[p].values()[k];
      if (std::abs(a) <= floor) {
        if (std::abs(n) > 1e-5) worst = std::max(worst, 1.0);
        continue;
      }
      worst = std::max(worst, std::abs(a - n) / std::max(std::abs(a), std::abs(n)));
    }
  return worst;
}

inline double fd_rel_error(const Builder& build, const std::vector<Matrix>& params, double eps = 1e-5) {
  return max_rel_error(analytic_grads(build, params), numeric_grads(build, params, eps));
}

}  // namespace oracle
