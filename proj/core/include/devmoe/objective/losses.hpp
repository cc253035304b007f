// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "devmoe/autodiff/tape.hpp"
#include "devmoe/linalg/matrix.hpp"

namespace devmoe::objective {

using linalg::Matrix;

enum class GradOrthMode {
  /// Top-r input directions of the current batch against every frozen B_i.
  PaperFormula,
  /// Input directions archived at the end of task i against the trainable B_t.
  StoredPrevSpaces,
};

std::string to_string(GradOrthMode m);
GradOrthMode parse_grad_orth_mode(const std::string& s);

/// Epochs [begin, end) use (lambda1, lambda2).
struct ScheduleEntry {
  std::size_t begin = 0;
  std::size_t end = 0;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
};

/// (0.5, 0.5) for epochs 0–4, (1, 0.1) for 5–9, (1, 0.01) for 10–19.
std::vector<ScheduleEntry> default_schedule();

struct OrthoConfig {
  std::vector<ScheduleEntry> schedule = default_schedule();
  double lambda3 = 0.2;
  GradOrthMode mode = GradOrthMode::PaperFormula;
  bool svd_grad_flow = true;
  /// Switches for ablations; a disabled term contributes nothing.
  bool subspace_term = true;
  bool gradient_term = true;
  /// Captured input columns beyond this are stride-subsampled before the SVD.
  std::size_t column_cap = 512;
  double gap_epsilon = 1e-6;

  /// Throws std::invalid_argument unless the schedule ranges are contiguous
  /// from epoch 0, cover [0, epochs), and every λ is non-negative.
  void validate(std::size_t epochs) const;
};

/// Throws std::out_of_range if no schedule entry contains `epoch`.
std::pair<double, double> lambda_schedule(const OrthoConfig& config, std::size_t epoch);
std::pair<double, double> lambda_schedule(std::size_t epoch);

/// ‖B_t·B_iᵀ‖²_F for basis-row matrices (r x d_in).
double subspace_overlap(const Matrix& bt, const Matrix& bi);
ad::Var subspace_overlap(const ad::Var& bt, const ad::Var& bi);

/// Top-r right singular rows of Hᵀ (r x d_in), i.e. the dominant directions of
/// the input columns. Columns beyond the cap are stride-subsampled.
ad::Var input_space_basis(const ad::Var& h, std::size_t r, const OrthoConfig& config);
Matrix input_space_basis(const Matrix& h, std::size_t r, std::size_t column_cap = 512);

/// ‖V_r·B_iᵀ‖²_F with V_r = input_space_basis(h, r).
ad::Var grad_space_term(const ad::Var& h, const ad::Var& bi, std::size_t r, const OrthoConfig& config);

/// Frozen bases (and optionally input-space bases) per adapted layer.
class SubspaceArchive {
 public:
  explicit SubspaceArchive(std::size_t layers = 0) : bases_(layers), spaces_(layers) {}

  void add_basis(std::size_t layer, Matrix b) { bases_.at(layer).push_back(std::move(b)); }
  void add_input_space(std::size_t layer, Matrix v) { spaces_.at(layer).push_back(std::move(v)); }

  [[nodiscard]] std::size_t layer_count() const noexcept { return bases_.size(); }
  [[nodiscard]] const std::vector<Matrix>& bases(std::size_t layer) const { return bases_.at(layer); }
  [[nodiscard]] const std::vector<Matrix>& input_spaces(std::size_t layer) const { return spaces_.at(layer); }

 private:
  std::vector<std::vector<Matrix>> bases_;
  std::vector<std::vector<Matrix>> spaces_;
};

struct OrthoInputs {
  /// Trainable B_t per adapted layer.
  std::span<const ad::Var> current_bases;
  /// Captured input H per adapted layer (PaperFormula mode only).
  std::span<const ad::Var> captured;
  std::size_t rank = 0;
};

/// Mean over archived tasks i of λ₁·‖B_t B_iᵀ‖² + λ₂·G_i, averaged over
/// layers. Exactly 0 while the archive is empty.
ad::Var integrated_ortho_loss(ad::Tape& tape, const SubspaceArchive& archive, const OrthoInputs& inputs,
                              std::size_t epoch, const OrthoConfig& config);

/// Population variance of I∘C divided by its mean. Throws if the mean is not
/// positive.
ad::Var llb_loss(const ad::Var& response, const Matrix& coefficients);
double llb_loss(const Matrix& response, const Matrix& coefficients);

/// cls + ort + λ₃·llb.
ad::Var total_loss(const ad::Var& cls, const ad::Var& ort, const ad::Var& llb, double lambda3);

}  // namespace devmoe::objective
