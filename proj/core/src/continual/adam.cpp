// SPDX-License-Identifier: Apache-2.0
#include "devmoe/continual/adam.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace devmoe::continual {

void adam_step(AdamState& state, std::span<Matrix* const> params, std::span<const Matrix> grads,
               const AdamConfig& config) {
  if (params.size() != grads.size()) {
    throw std::invalid_argument("adam_step: " + std::to_string(params.size()) + " parameters but " +
                                std::to_string(grads.size()) + " gradients");
  }
  if (state.step == 0) {
    state.m.clear();
    state.v.clear();
    for (const Matrix* p : params) {
      state.m.emplace_back(p->rows(), p->cols());
      state.v.emplace_back(p->rows(), p->cols());
    }
  }
  if (state.m.size() != params.size()) {
    throw std::invalid_argument("adam_step: parameter count changed from " + std::to_string(state.m.size()) + " to " +
                                std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->same_shape(grads[i]) || !params[i]->same_shape(state.m[i])) {
      throw std::invalid_argument("adam_step: parameter " + std::to_string(i) + " " + params[i]->shape_string() +
                                  " vs gradient " + grads[i].shape_string());
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->values();
    auto g = grads[i].values();
    auto m = state.m[i].values();
    auto v = state.v[i].values();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g[j];
      v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g[j] * g[j];
      const double mh = m[j] / c1;
      const double vh = v[j] / c2;
      p[j] -= config.lr * mh / (std::sqrt(vh) + config.epsilon);
    }
  }
}

}  // namespace devmoe::continual
