// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "devmoe/linalg/matrix.hpp"
#include "devmoe/linalg/ops.hpp"

namespace devmoe::moe {

using linalg::Matrix;

enum class ExpertKind { Real, Fake };

/// Low-rank adapter ΔW = a·b. Rows of b span the adapter's input subspace.
struct LoraExpert {
  Matrix a;  ///< d_out x r
  Matrix b;  ///< r x d_in
  ExpertKind kind = ExpertKind::Fake;
  /// Task that created the expert; 0 for the shared Real expert.
  std::size_t task_id = 0;
  bool frozen = false;

  [[nodiscard]] std::size_t parameter_count() const noexcept { return a.size() + b.size(); }
  [[nodiscard]] Matrix delta_weight() const;
};

/// How an expert's d_out-dimensional token output is reduced to a gate logit.
enum class GateReduction { Mean, L2Norm };

/// Which experts a layer holds.
enum class BankLayout {
  /// [Real, Fake₁, …, Fake_t]: the default developmental bank.
  RealAndFakes,
  /// [Fake₁, …, Fake_t]: no Real expert.
  FakesOnly,
  /// [Real]: one global adapter trained on every task.
  RealOnly,
  /// [Real₁, Fake₁, …, Real_t, Fake_t]: the Real expert is also grown per task.
  RealAndFakeSequences,
};

std::string to_string(GateReduction g);
std::string to_string(BankLayout layout);
GateReduction parse_gate_reduction(const std::string& s);

struct LayerConfig {
  std::size_t d_in = 32;
  std::size_t d_out = 64;
  std::size_t rank = 4;
  double temperature = 1.0;
  /// Coefficient increment for label-matched experts.
  double delta = 0.15;
  GateReduction gate = GateReduction::Mean;
  BankLayout layout = BankLayout::RealAndFakes;
};

/// Expert bank of one adapted linear layer.
///
/// Invariants (checked by validate()): at most one Real expert is trainable and
/// it precedes its task's Fake; only the newest Fake is trainable; every
/// expert has shapes (d_out x r, r x d_in).
class DevMoeLayer {
 public:
  /// Creates the shared Real expert (A = 0, B ~ N(0, 1/d_in)) when the layout
  /// has one. Throws if rank > min(d_in, d_out)/4 or any size is zero.
  DevMoeLayer(const LayerConfig& config, linalg::Rng& rng);

  /// Freezes every existing Fake and appends Fake(task_id) with A = 0,
  /// B ~ N(0, 1/d_in). In the sequence layout the current Real is frozen and a
  /// new Real is appended first. task_id must equal fake_count() + 1.
  void expand_for_task(std::size_t task_id, linalg::Rng& rng);

  [[nodiscard]] const LayerConfig& config() const noexcept { return config_; }
  [[nodiscard]] const std::vector<LoraExpert>& experts() const noexcept { return experts_; }
  [[nodiscard]] std::vector<LoraExpert>& experts() noexcept { return experts_; }
  [[nodiscard]] std::size_t fake_count() const noexcept;
  /// Pointer to the trainable Fake, or null.
  [[nodiscard]] const LoraExpert* current_fake() const noexcept;
  [[nodiscard]] std::size_t trainable_parameter_count() const noexcept;
  [[nodiscard]] std::size_t total_parameter_count() const noexcept;
  /// Parameters added by one expand_for_task call.
  [[nodiscard]] std::size_t growth_per_task() const noexcept;

  /// Throws std::logic_error describing the first broken invariant.
  void validate() const;

 private:
  LoraExpert make_expert(ExpertKind kind, std::size_t task_id, linalg::Rng& rng) const;

  LayerConfig config_;
  std::vector<LoraExpert> experts_;
};

/// Labels: 0 = real, 1 = fake. Returns K x n with 1+δ where the expert kind
/// matches the sample label and 1−δ elsewhere.
Matrix coefficient_matrix(const std::vector<LoraExpert>& experts, const std::vector<int>& labels,
                          double delta);

/// Stable byte encoding of one expert (kind, task, frozen flag, shapes, raw
/// doubles). Used for freeze-integrity checks and checkpoints.
std::vector<unsigned char> serialize_expert(const LoraExpert& e);

}  // namespace devmoe::moe
