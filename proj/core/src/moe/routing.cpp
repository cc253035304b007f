// SPDX-License-Identifier: Apache-2.0
#include "devmoe/moe/routing.hpp"

#include <stdexcept>
#include <string>

#include "devmoe/autodiff/ops.hpp"

namespace devmoe::moe {

ad::Var gate_scores(std::span<const ad::Var> expert_outputs, GateReduction reduction) {
  if (expert_outputs.empty()) throw std::invalid_argument("gate_scores: no experts");
  std::vector<ad::Var> rows;
  rows.reserve(expert_outputs.size());
  for (const ad::Var& o : expert_outputs) {
    rows.push_back(reduction == GateReduction::Mean ? ad::col_mean(o) : ad::col_l2norm(o));
  }
  return ad::vstack(rows);
}

ad::Var response_matrix(const ad::Var& gates, std::size_t token_count) {
  return ad::group_col_sum(gates, token_count);
}

MoeOutput moe_forward(std::span<const ExpertVars> experts, const ad::Var& h, std::size_t token_count,
                      double temperature, GateReduction reduction) {
  if (experts.empty()) throw std::invalid_argument("moe_forward: layer has no experts");
  if (token_count == 0 || h.cols() % token_count != 0) {
    throw std::invalid_argument("moe_forward: " + std::to_string(h.cols()) +
                                " columns is not a multiple of token count " + std::to_string(token_count));
  }
  std::vector<ad::Var> outputs;
  outputs.reserve(experts.size());
  for (const ExpertVars& e : experts) outputs.push_back(ad::matmul(e.a, ad::matmul(e.b, h)));

  MoeOutput out;
  out.gates = ad::softmax_cols(gate_scores(outputs, reduction), temperature);
  std::vector<ad::Var> weighted;
  weighted.reserve(outputs.size());
  for (std::size_t k = 0; k < outputs.size(); ++k) {
    weighted.push_back(ad::col_scale(outputs[k], ad::row_of(out.gates, k)));
  }
  out.mixed = ad::sum(weighted);
  out.response = response_matrix(out.gates, token_count);
  return out;
}

MoeValues moe_forward(const DevMoeLayer& layer, const Matrix& h, std::size_t token_count) {
  ad::Tape tape;
  std::vector<ExpertVars> vars;
  for (const LoraExpert& e : layer.experts()) vars.push_back({tape.constant(e.a), tape.constant(e.b)});
  MoeOutput out = moe_forward(vars, tape.constant(h), token_count, layer.config().temperature, layer.config().gate);
  return {out.mixed.value(), out.gates.value(), out.response.value()};
}

}  // namespace devmoe::moe
