// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "devmoe/linalg/matrix.hpp"

namespace devmoe::network {

using linalg::Matrix;

struct BackboneConfig {
  std::size_t num_blocks = 2;
  std::size_t token_count = 8;
  std::size_t embed_dim = 32;
  std::size_t ffn_hidden = 64;
  std::uint64_t seed = 7;

  /// Throws std::invalid_argument if any count is zero.
  void validate() const;
};

/// One frozen block: token mixing over the token axis, then a per-token FFN.
struct Block {
  Matrix token_mix;  ///< T x T
  Matrix w1;         ///< ffn_hidden x d
  Matrix b1;         ///< ffn_hidden x 1
  Matrix w2;         ///< d x ffn_hidden
  Matrix b2;         ///< d x 1
};

/// Frozen random feature extractor. Weights are N(0, 1/fan_in), biases zero.
struct Backbone {
  BackboneConfig config;
  std::vector<Block> blocks;

  [[nodiscard]] std::size_t parameter_count() const noexcept;
};

Backbone init_backbone(const BackboneConfig& config);

/// Trainable logistic head on mean-pooled features. Zero-initialised.
struct ClassifierHead {
  Matrix weight;  ///< 1 x d
  Matrix bias;    ///< 1 x 1

  [[nodiscard]] std::size_t parameter_count() const noexcept { return weight.size() + bias.size(); }
};

ClassifierHead init_head(std::size_t embed_dim);

}  // namespace devmoe::network
