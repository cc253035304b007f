// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "devmoe/moe/expert_bank.hpp"

namespace devmoe::continual {

enum class Variant { Full, ClsOnly, ClsSubspace, ClsOrt, ClsLlb, FakeOnly, RealOnly, RealSequence };

/// What a variant switches on.
struct VariantTraits {
  moe::BankLayout layout = moe::BankLayout::RealAndFakes;
  bool subspace_term = false;
  bool gradient_term = false;
  bool llb = false;
  /// Whether the bank grows per task.
  bool expands = true;
};

VariantTraits traits(Variant v);
std::string to_string(Variant v);
/// Throws std::invalid_argument listing every variant name.
Variant parse_variant(const std::string& s);
const std::vector<Variant>& all_variants();

}  // namespace devmoe::continual
