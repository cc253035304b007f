// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "devmoe/linalg/matrix.hpp"

namespace devmoe::continual {

using linalg::Matrix;

enum class PerturbationKind {
  /// Fake tokens gain a rank-2 offset inside a per-task random subspace,
  /// orthogonal to the recent tasks' subspaces.
  SubspaceShift,
  /// Fake tokens gain a per-task band of higher-frequency cosines.
  BandArtifact,
};

std::string to_string(PerturbationKind k);
PerturbationKind parse_perturbation_kind(const std::string& s);

struct StreamConfig {
  std::size_t num_tasks = 4;
  /// Samples per task split, half real and half fake.
  std::size_t n_train = 2000;
  std::size_t n_test = 500;
  std::size_t token_count = 8;
  std::size_t embed_dim = 32;
  /// Number of low-frequency cosine atoms spanning real tokens.
  std::size_t real_basis = 4;
  double noise_std = 0.1;
  PerturbationKind kind = PerturbationKind::BandArtifact;
  double magnitude = 1.0;
  std::uint64_t master_seed = 2024;

  void validate() const;
};

struct TaskSpec {
  std::size_t task_id = 0;  ///< 1-based
  std::uint64_t fake_seed = 0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  PerturbationKind kind = PerturbationKind::SubspaceShift;
  double magnitude = 0.0;
};

/// Samples stored as d x (n·T) token columns, sample-major. Label 0 = real,
/// 1 = fake.
struct Dataset {
  Matrix tokens;
  std::vector<int> labels;
  std::size_t token_count = 0;

  [[nodiscard]] std::size_t size() const noexcept { return labels.size(); }
  /// Tokens of the listed samples, in order.
  [[nodiscard]] Matrix gather(std::span<const std::size_t> samples) const;
  [[nodiscard]] std::vector<int> gather_labels(std::span<const std::size_t> samples) const;
};

struct TaskData {
  Dataset train;
  Dataset test;
};

/// Deterministic domain-incremental stream. Real tokens follow one shared
/// recipe for every task; only the fake perturbation changes with the task.
class TaskStream {
 public:
  explicit TaskStream(const StreamConfig& config);

  [[nodiscard]] const StreamConfig& config() const noexcept { return config_; }
  [[nodiscard]] const std::vector<TaskSpec>& specs() const noexcept { return specs_; }
  /// real_basis x d, orthonormal rows.
  [[nodiscard]] const Matrix& real_basis() const noexcept { return real_basis_; }
  /// Rows spanning task t's perturbation (2 x d).
  [[nodiscard]] Matrix perturbation_directions(std::size_t task_id) const;

  /// Throws std::out_of_range for task ids outside [1, num_tasks].
  [[nodiscard]] TaskData generate_task(std::size_t task_id) const;

 private:
  [[nodiscard]] Dataset generate_split(const TaskSpec& spec, std::size_t n, std::uint64_t split) const;
  [[nodiscard]] const TaskSpec& spec(std::size_t task_id) const;
  [[nodiscard]] Matrix draw_directions(const TaskSpec& spec) const;

  StreamConfig config_;
  std::vector<TaskSpec> specs_;
  Matrix real_basis_;
  std::vector<Matrix> directions_;
};

}  // namespace devmoe::continual
