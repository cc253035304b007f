// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "devmoe/continual/trainer.hpp"
#include "devmoe/eval/metrics.hpp"

namespace devmoe::continual {

struct RunConfig {
  StreamConfig stream;
  network::ModelConfig model;
  TrainerConfig trainer;
  objective::OrthoConfig ortho;
  Variant variant = Variant::Full;

  /// Throws std::invalid_argument on inconsistent sections (e.g. stream and
  /// backbone disagree on token shape).
  void validate() const;
};

/// Copy of `config` with the run seed applied to adapter init and shuffling.
RunConfig with_seed(RunConfig config, std::uint64_t seed);

struct ParamRecord {
  std::size_t task = 0;  ///< 1-based
  std::size_t total = 0;
  std::size_t trainable = 0;
  std::size_t growth_per_task = 0;
};

/// ‖B_j·B_iᵀ‖² for Fake bases of tasks i < j (1-based) in one layer, at B_j's
/// initialisation and after the whole sequence.
struct OverlapRecord {
  std::size_t layer = 0;
  std::size_t i = 0;
  std::size_t j = 0;
  double initial = 0.0;
  double final = 0.0;
};

struct RunResult {
  eval::ScoreMatrix acc;
  eval::ScoreMatrix auc;
  std::vector<TrainLog> logs;
  std::vector<ParamRecord> params;
  std::vector<OverlapRecord> overlaps;
  /// Frozen-expert byte comparisons performed and the ones that failed.
  std::size_t frozen_checks = 0;
  std::vector<std::string> freeze_violations;
  bool backbone_unchanged = true;
  std::shared_ptr<const network::DevMoeModel> model;

  /// Every step record of every task, in order.
  [[nodiscard]] std::vector<eval::StepRecord> all_steps() const;
};

struct RunOptions {
  /// When set, a checkpoint is written there after every task.
  std::filesystem::path checkpoint_dir;
  std::string config_digest;
  /// Receives one human-readable line per finished task.
  std::function<void(const std::string&)> progress;
};

/// Trains the tasks in order and scores every seen test set after each task.
RunResult run_sequence(const RunConfig& config, const RunOptions& options = {});

}  // namespace devmoe::continual
