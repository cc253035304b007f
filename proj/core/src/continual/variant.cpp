// SPDX-License-Identifier: Apache-2.0
#include "devmoe/continual/variant.hpp"

#include <stdexcept>

namespace devmoe::continual {

VariantTraits traits(Variant v) {
  using moe::BankLayout;
  switch (v) {
    case Variant::Full: return {BankLayout::RealAndFakes, true, true, true, true};
    case Variant::ClsOnly: return {BankLayout::RealAndFakes, false, false, false, true};
    case Variant::ClsSubspace: return {BankLayout::RealAndFakes, true, false, false, true};
    case Variant::ClsOrt: return {BankLayout::RealAndFakes, true, true, false, true};
    case Variant::ClsLlb: return {BankLayout::RealAndFakes, false, false, true, true};
    case Variant::FakeOnly: return {BankLayout::FakesOnly, true, true, false, true};
    case Variant::RealOnly: return {BankLayout::RealOnly, false, false, false, false};
    case Variant::RealSequence: return {BankLayout::RealAndFakeSequences, true, true, true, true};
  }
  throw std::logic_error("traits: unhandled variant");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Full: return "full";
    case Variant::ClsOnly: return "cls_only";
    case Variant::ClsSubspace: return "cls_subspace";
    case Variant::ClsOrt: return "cls_ort";
    case Variant::ClsLlb: return "cls_llb";
    case Variant::FakeOnly: return "fake_only";
    case Variant::RealOnly: return "real_only";
    case Variant::RealSequence: return "real_sequence";
  }
  return "unknown";
}

const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> all{Variant::Full,     Variant::ClsOnly,  Variant::ClsSubspace, Variant::ClsOrt,
                                        Variant::ClsLlb,   Variant::FakeOnly, Variant::RealOnly,    Variant::RealSequence};
  return all;
}

Variant parse_variant(const std::string& s) {
  std::string names;
  for (Variant v : all_variants()) {
    if (to_string(v) == s) return v;
    names += (names.empty() ? "" : ", ") + to_string(v);
  }
  throw std::invalid_argument("unknown variant '" + s + "'; expected one of: " + names);
}

}  // namespace devmoe::continual
