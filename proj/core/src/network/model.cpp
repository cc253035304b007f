// SPDX-License-Identifier: Apache-2.0
#include "devmoe/network/model.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "devmoe/autodiff/ops.hpp"

namespace devmoe::network {

void ModelConfig::validate() const {
  backbone.validate();
  if (rank == 0) throw std::invalid_argument("model.rank must be >= 1");
  const std::size_t limit = std::min(backbone.embed_dim, backbone.ffn_hidden) / 4;
  if (rank > limit) {
    throw std::invalid_argument("model.rank " + std::to_string(rank) + " exceeds min(embed_dim, ffn_hidden)/4 = " +
                                std::to_string(limit));
  }
  if (!(temperature > 0.0)) throw std::invalid_argument("model.temperature must be > 0");
  if (delta < 0.0 || delta >= 1.0) throw std::invalid_argument("model.delta must lie in [0, 1)");
}

DevMoeModel::DevMoeModel(const ModelConfig& config, moe::BankLayout layout)
    : config_(config),
      layout_(layout),
      backbone_(init_backbone(config.backbone)),
      head_(init_head(config.backbone.embed_dim)),
      rng_(config.adapter_seed) {
  const BackboneConfig& bc = config.backbone;
  for (std::size_t l = 0; l < bc.num_blocks; ++l) {
    sites_.push_back({l, FfnLinear::First});
    if (config.adapt_both_ffn_linears) sites_.push_back({l, FfnLinear::Second});
  }
  for (const AdaptedSite& s : sites_) {
    moe::LayerConfig lc;
    lc.d_in = s.linear == FfnLinear::First ? bc.embed_dim : bc.ffn_hidden;
    lc.d_out = s.linear == FfnLinear::First ? bc.ffn_hidden : bc.embed_dim;
    lc.rank = config.rank;
    lc.temperature = config.temperature;
    lc.delta = config.delta;
    lc.gate = config.gate;
    lc.layout = layout;
    layers_.emplace_back(lc, rng_);
  }
}

void DevMoeModel::expand_for_task(std::size_t task_id) {
  for (moe::DevMoeLayer& layer : layers_) layer.expand_for_task(task_id, rng_);
  tasks_seen_ = task_id;
}

DevMoeModel::ParameterCount DevMoeModel::count_parameters() const noexcept {
  ParameterCount c;
  c.total = backbone_.parameter_count() + head_.parameter_count();
  c.trainable = head_.parameter_count();
  for (const moe::DevMoeLayer& layer : layers_) {
    c.total += layer.total_parameter_count();
    c.trainable += layer.trainable_parameter_count();
    c.growth_per_task += layer.growth_per_task();
  }
  return c;
}

namespace {

ModelBinding bind_impl(ad::Tape& tape, const DevMoeModel& model, DevMoeModel* mutable_model, bool backbone_parameters) {
  ModelBinding bnd;
  const auto frozen = [&](const Matrix& m) { return backbone_parameters ? tape.parameter(m) : tape.constant(m); };
  for (const Block& b : model.backbone().blocks) {
    bnd.blocks.push_back({tape.constant(b.token_mix), frozen(b.w1), frozen(b.b1), frozen(b.w2), frozen(b.b2)});
  }
  const auto reg = [&](const Matrix& value, Matrix* storage, bool trainable) {
    if (mutable_model != nullptr && trainable) {
      ad::Var v = tape.parameter(value);
      bnd.parameters.push_back(v);
      bnd.targets.push_back(storage);
      return v;
    }
    return tape.constant(value);
  };
  ClassifierHead* head = mutable_model ? &mutable_model->head() : nullptr;
  bnd.head_weight = reg(model.head().weight, head ? &head->weight : nullptr, true);
  bnd.head_bias = reg(model.head().bias, head ? &head->bias : nullptr, true);
  for (std::size_t s = 0; s < model.layers().size(); ++s) {
    std::vector<moe::ExpertVars> vars;
    const auto& experts = model.layers()[s].experts();
    for (std::size_t k = 0; k < experts.size(); ++k) {
      moe::LoraExpert* e = mutable_model ? &mutable_model->layers()[s].experts()[k] : nullptr;
      const bool trainable = !experts[k].frozen;
      ad::Var a = reg(experts[k].a, e ? &e->a : nullptr, trainable);
      ad::Var b = reg(experts[k].b, e ? &e->b : nullptr, trainable);
      vars.push_back({a, b});
    }
    bnd.experts.push_back(std::move(vars));
  }
  return bnd;
}

}  // namespace

ModelBinding bind(ad::Tape& tape, DevMoeModel& model, bool track_gradients, bool backbone_parameters) {
  return bind_impl(tape, model, track_gradients ? &model : nullptr, backbone_parameters);
}

ModelBinding bind_constant(ad::Tape& tape, const DevMoeModel& model) { return bind_impl(tape, model, nullptr, false); }

ForwardResult forward(ad::Tape& tape, const ModelBinding& binding, const DevMoeModel& model, const Matrix& tokens) {
  const BackboneConfig& bc = model.config().backbone;
  const std::size_t t = bc.token_count;
  if (tokens.rows() != bc.embed_dim || tokens.cols() == 0 || tokens.cols() % t != 0) {
    throw std::invalid_argument("forward: tokens " + tokens.shape_string() + " incompatible with d=" +
                                std::to_string(bc.embed_dim) + ", T=" + std::to_string(t));
  }
  ForwardResult out;

  const auto site_index = [&](std::size_t block, FfnLinear which) -> std::ptrdiff_t {
    const auto& sites = model.sites();
    for (std::size_t i = 0; i < sites.size(); ++i)
      if (sites[i].block == block && sites[i].linear == which) return static_cast<std::ptrdiff_t>(i);
    return -1;
  };
  const auto adapt = [&](std::ptrdiff_t site, const ad::Var& h, ad::Var base) {
    if (site < 0) return base;
    const auto& layer = model.layers()[static_cast<std::size_t>(site)];
    const auto& experts = binding.experts[static_cast<std::size_t>(site)];
    out.captured.push_back(h);
    if (experts.empty()) {
      out.routing.push_back({});
      return base;
    }
    moe::MoeOutput mo = moe::moe_forward(experts, h, t, layer.config().temperature, layer.config().gate);
    out.routing.push_back(mo);
    return ad::add(base, mo.mixed);
  };

  ad::Var x = tape.constant(tokens);
  for (std::size_t l = 0; l < binding.blocks.size(); ++l) {
    const auto& b = binding.blocks[l];
    ad::Var z = ad::token_mix(x, b.token_mix);
    ad::Var u = ad::add_col_broadcast(ad::matmul(b.w1, z), b.b1);
    u = adapt(site_index(l, FfnLinear::First), z, u);
    ad::Var act = ad::gelu(u);
    ad::Var y = ad::add_col_broadcast(ad::matmul(b.w2, act), b.b2);
    y = adapt(site_index(l, FfnLinear::Second), act, y);
    x = model.config().residual ? ad::add(z, y) : y;
  }
  out.pooled = ad::scale(ad::group_col_sum(x, t), 1.0 / static_cast<double>(t));
  ad::Var logits = ad::add_scalar_broadcast(ad::matmul(binding.head_weight, out.pooled), binding.head_bias);
  out.probs = ad::sigmoid(logits);
  return out;
}

Predictions predict(const DevMoeModel& model, const Matrix& tokens, std::size_t batch_size) {
  const std::size_t t = model.config().backbone.token_count;
  const std::size_t d = model.config().backbone.embed_dim;
  if (tokens.rows() != d || tokens.cols() % t != 0) {
    throw std::invalid_argument("predict: tokens " + tokens.shape_string() + " incompatible with d=" +
                                std::to_string(d) + ", T=" + std::to_string(t));
  }
  if (batch_size == 0) throw std::invalid_argument("predict: batch_size must be >= 1");
  const std::size_t n = tokens.cols() / t;
  Predictions p;
  p.probs.reserve(n);
  p.pooled = Matrix(d, n);
  std::vector<std::size_t> cols;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t count = std::min(batch_size, n - start);
    cols.resize(count * t);
    for (std::size_t j = 0; j < cols.size(); ++j) cols[j] = start * t + j;
    ad::Tape tape;
    ModelBinding bnd = bind_constant(tape, model);
    ForwardResult fr = forward(tape, bnd, model, linalg::gather_cols(tokens, cols));
    for (double v : fr.probs.value().values()) p.probs.push_back(v);
    const Matrix& pooled = fr.pooled.value();
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < count; ++j) p.pooled(i, start + j) = pooled(i, j);
  }
  return p;
}

}  // namespace devmoe::network
