// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "devmoe/autodiff/tape.hpp"
#include "devmoe/moe/expert_bank.hpp"

namespace devmoe::moe {

/// One expert's factors as recorded on a tape (parameters or constants).
struct ExpertVars {
  ad::Var a;
  ad::Var b;
};

struct MoeOutput {
  /// d_out x (n·T): per-token convex combination of expert outputs.
  ad::Var mixed;
  /// K x (n·T): per-token softmax weights, columns sum to 1.
  ad::Var gates;
  /// K x n: gate mass summed over each sample's tokens; columns sum to T.
  ad::Var response;
};

/// K x N gate logits: row k is the reduction of expert k's output columns.
ad::Var gate_scores(std::span<const ad::Var> expert_outputs, GateReduction reduction);

/// I[k, l] = Σ over the tokens of sample l of gates[k, ·].
ad::Var response_matrix(const ad::Var& gates, std::size_t token_count);

/// Expert outputs O_k = A_k·(B_k·H), softmax gates over experts per token
/// column, and the gated sum. `h` is d_in x (n·T), sample-major.
MoeOutput moe_forward(std::span<const ExpertVars> experts, const ad::Var& h, std::size_t token_count,
                      double temperature, GateReduction reduction);

/// Value-only evaluation of a layer on a fixed input; no gradients.
struct MoeValues {
  Matrix mixed;
  Matrix gates;
  Matrix response;
};
MoeValues moe_forward(const DevMoeLayer& layer, const Matrix& h, std::size_t token_count);

}  // namespace devmoe::moe
