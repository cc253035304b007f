// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "devmoe/autodiff/tape.hpp"
#include "devmoe/linalg/ops.hpp"
#include "devmoe/moe/expert_bank.hpp"
#include "devmoe/moe/routing.hpp"
#include "devmoe/network/backbone.hpp"

namespace devmoe::network {

enum class FfnLinear { First, Second };

/// Location of an adapted linear layer.
struct AdaptedSite {
  std::size_t block = 0;
  FfnLinear linear = FfnLinear::First;
};

struct ModelConfig {
  BackboneConfig backbone;
  std::size_t rank = 4;
  double temperature = 1.0;
  double delta = 0.15;
  moe::GateReduction gate = moe::GateReduction::Mean;
  /// Adapt W2 of every block as well as W1.
  bool adapt_both_ffn_linears = false;
  /// X_next = Z + FFN(Z) instead of X_next = FFN(Z).
  bool residual = true;
  /// Seeds adapter initialisation (and nothing else).
  std::uint64_t adapter_seed = 1;

  /// Backbone shape, rank <= min(d_in, d_out)/4 at every adapted site,
  /// temperature > 0 and delta in [0, 1). Throws std::invalid_argument.
  void validate() const;
};

/// Frozen backbone, trainable head and one expert bank per adapted site.
class DevMoeModel {
 public:
  DevMoeModel(const ModelConfig& config, moe::BankLayout layout);

  /// Expands every layer's bank for `task_id` (see DevMoeLayer::expand_for_task).
  void expand_for_task(std::size_t task_id);

  [[nodiscard]] const ModelConfig& config() const noexcept { return config_; }
  [[nodiscard]] moe::BankLayout layout() const noexcept { return layout_; }
  [[nodiscard]] const Backbone& backbone() const noexcept { return backbone_; }
  [[nodiscard]] const ClassifierHead& head() const noexcept { return head_; }
  [[nodiscard]] ClassifierHead& head() noexcept { return head_; }
  [[nodiscard]] const std::vector<AdaptedSite>& sites() const noexcept { return sites_; }
  [[nodiscard]] const std::vector<moe::DevMoeLayer>& layers() const noexcept { return layers_; }
  [[nodiscard]] std::vector<moe::DevMoeLayer>& layers() noexcept { return layers_; }
  [[nodiscard]] std::size_t tasks_seen() const noexcept { return tasks_seen_; }

  [[nodiscard]] const linalg::Rng& rng() const noexcept { return rng_; }

  struct ParameterCount {
    std::size_t total = 0;
    std::size_t trainable = 0;
    /// Parameters added by one further expansion.
    std::size_t growth_per_task = 0;
  };
  [[nodiscard]] ParameterCount count_parameters() const noexcept;

 private:
  friend struct CheckpointAccess;
  ModelConfig config_;
  moe::BankLayout layout_;
  Backbone backbone_;
  ClassifierHead head_;
  std::vector<AdaptedSite> sites_;
  std::vector<moe::DevMoeLayer> layers_;
  linalg::Rng rng_;
  std::size_t tasks_seen_ = 0;
};

/// Model weights registered on one tape. Trainable values become parameters
/// when `track_gradients` is set; everything else is a constant.
struct ModelBinding {
  struct BlockVars {
    ad::Var token_mix, w1, b1, w2, b2;
  };
  std::vector<BlockVars> blocks;
  ad::Var head_weight;
  ad::Var head_bias;
  /// Per adapted site, per expert.
  std::vector<std::vector<moe::ExpertVars>> experts;
  /// Trainable parameters in a fixed order, paired with the model storage
  /// they were copied from.
  std::vector<ad::Var> parameters;
  std::vector<Matrix*> targets;
};

/// With `backbone_parameters` the block weights are recorded as parameters too
/// (for gradient inspection only; they are never added to `parameters`).
ModelBinding bind(ad::Tape& tape, DevMoeModel& model, bool track_gradients, bool backbone_parameters = false);
/// Constants only; usable on a const model.
ModelBinding bind_constant(ad::Tape& tape, const DevMoeModel& model);

struct ForwardResult {
  /// 1 x n probabilities of the fake class.
  ad::Var probs;
  /// d x n mean-pooled features fed to the head.
  ad::Var pooled;
  /// Per adapted site: its input H (d_in x n·T).
  std::vector<ad::Var> captured;
  /// Per adapted site: gates and response matrix.
  std::vector<moe::MoeOutput> routing;
};

/// `tokens` is d x (n·T) with each sample's T token columns contiguous.
ForwardResult forward(ad::Tape& tape, const ModelBinding& binding, const DevMoeModel& model, const Matrix& tokens);

struct Predictions {
  std::vector<double> probs;
  Matrix pooled;  ///< d x n
};

/// Batched inference without gradients.
Predictions predict(const DevMoeModel& model, const Matrix& tokens, std::size_t batch_size = 256);

}  // namespace devmoe::network
