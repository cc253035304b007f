// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "devmoe/continual/adam.hpp"
#include "devmoe/continual/task_stream.hpp"
#include "devmoe/continual/variant.hpp"
#include "devmoe/eval/report.hpp"
#include "devmoe/network/model.hpp"
#include "devmoe/objective/losses.hpp"

namespace devmoe::continual {

struct TrainerConfig {
  AdamConfig adam;
  std::size_t batch_size = 128;
  std::size_t epochs_per_task = 20;
  /// Seeds per-epoch shuffling.
  std::uint64_t seed = 1;
  /// Samples used to archive input spaces at task end.
  std::size_t archive_samples = 64;

  void validate() const;
};

struct TrainLog {
  std::vector<eval::StepRecord> steps;
  /// B of the new Fake expert per adapted layer, right after expansion.
  std::vector<Matrix> initial_bases;
  double final_train_accuracy = 0.0;

  /// CSV with header task,epoch,step,l_cls,l_ort,l_llb,lambda1,lambda2,total.
  void write_csv(const std::filesystem::path& path) const;
};

/// Everything one task's training may touch besides its data.
struct TrainContext {
  network::DevMoeModel& model;
  objective::SubspaceArchive& archive;
  const TrainerConfig& trainer;
  const objective::OrthoConfig& ortho;
  VariantTraits traits;
};

/// Expands the bank for `task_id` (unless the variant does not grow), trains
/// on `train` alone with fresh Adam state, then archives the new Fake bases
/// (and input spaces in StoredPrevSpaces mode).
TrainLog train_task(TrainContext& ctx, const Dataset& train, std::size_t task_id);

/// Losses for one minibatch, recorded on `tape`. Exposed for gradient checks.
struct BatchLoss {
  ad::Var total;
  ad::Var cls;
  ad::Var ort;
  ad::Var llb;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  /// Input H of every adapted layer.
  std::vector<ad::Var> captured;
};

BatchLoss batch_loss(ad::Tape& tape, const network::ModelBinding& binding, const network::DevMoeModel& model,
                     const objective::SubspaceArchive& archive, const Matrix& tokens, const std::vector<int>& labels,
                     std::size_t epoch, const objective::OrthoConfig& ortho, const VariantTraits& traits);

/// Index of the trainable Fake expert in each layer, or -1.
std::ptrdiff_t current_fake_index(const moe::DevMoeLayer& layer);

}  // namespace devmoe::continual
