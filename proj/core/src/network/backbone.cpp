// SPDX-License-Identifier: Apache-2.0
#include "devmoe/network/backbone.hpp"

#include <cmath>
#include <stdexcept>

#include "devmoe/linalg/ops.hpp"

namespace devmoe::network {

void BackboneConfig::validate() const {
  if (num_blocks == 0 || token_count == 0 || embed_dim == 0 || ffn_hidden == 0) {
    throw std::invalid_argument("BackboneConfig: num_blocks, token_count, embed_dim and ffn_hidden must be >= 1");
  }
}

std::size_t Backbone::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const Block& b : blocks) n += b.token_mix.size() + b.w1.size() + b.b1.size() + b.w2.size() + b.b2.size();
  return n;
}

Backbone init_backbone(const BackboneConfig& config) {
  config.validate();
  linalg::Rng rng(config.seed);
  const auto fan = [](std::size_t n) { return 1.0 / std::sqrt(static_cast<double>(n)); };
  Backbone bb;
  bb.config = config;
  for (std::size_t l = 0; l < config.num_blocks; ++l) {
    Block b;
    b.token_mix = linalg::gaussian(config.token_count, config.token_count, fan(config.token_count), rng);
    b.w1 = linalg::gaussian(config.ffn_hidden, config.embed_dim, fan(config.embed_dim), rng);
    b.b1 = Matrix(config.ffn_hidden, 1);
    b.w2 = linalg::gaussian(config.embed_dim, config.ffn_hidden, fan(config.ffn_hidden), rng);
    b.b2 = Matrix(config.embed_dim, 1);
    bb.blocks.push_back(std::move(b));
  }
  return bb;
}

ClassifierHead init_head(std::size_t embed_dim) { return {Matrix(1, embed_dim), Matrix(1, 1)}; }

}  // namespace devmoe::network
