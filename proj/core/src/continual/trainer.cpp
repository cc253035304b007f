// SPDX-License-Identifier: Apache-2.0
#include "devmoe/continual/trainer.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <random>
#include <stdexcept>

#include "devmoe/autodiff/ops.hpp"
#include "devmoe/eval/metrics.hpp"
#include "devmoe/linalg/ops.hpp"

namespace devmoe::continual {

void TrainerConfig::validate() const {
  if (batch_size == 0) throw std::invalid_argument("trainer.batch_size must be >= 1");
  if (epochs_per_task == 0) throw std::invalid_argument("trainer.epochs_per_task must be >= 1");
  if (!(adam.lr > 0.0)) throw std::invalid_argument("trainer.lr must be > 0");
  if (adam.beta1 < 0.0 || adam.beta1 >= 1.0 || adam.beta2 < 0.0 || adam.beta2 >= 1.0) {
    throw std::invalid_argument("trainer.beta1 and trainer.beta2 must lie in [0, 1)");
  }
  if (!(adam.epsilon > 0.0)) throw std::invalid_argument("trainer.epsilon must be > 0");
  if (archive_samples == 0) throw std::invalid_argument("trainer.archive_samples must be >= 1");
}

void TrainLog::write_csv(const std::filesystem::path& path) const {
  std::string text = "task,epoch,step,l_cls,l_ort,l_llb,lambda1,lambda2,total\n";
  char buf[256];
  for (const eval::StepRecord& r : steps) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%zu,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", r.task, r.epoch, r.step, r.cls, r.ort,
                  r.llb, r.lambda1, r.lambda2, r.total);
    text += buf;
  }
  eval::write_text_file(path, text);
}

std::ptrdiff_t current_fake_index(const moe::DevMoeLayer& layer) {
  const auto& experts = layer.experts();
  for (std::size_t k = experts.size(); k-- > 0;) {
    if (experts[k].kind == moe::ExpertKind::Fake && !experts[k].frozen) return static_cast<std::ptrdiff_t>(k);
  }
  return -1;
}

BatchLoss batch_loss(ad::Tape& tape, const network::ModelBinding& binding, const network::DevMoeModel& model,
                     const objective::SubspaceArchive& archive, const Matrix& tokens, const std::vector<int>& labels,
                     std::size_t epoch, const objective::OrthoConfig& ortho, const VariantTraits& traits) {
  network::ForwardResult fr = network::forward(tape, binding, model, tokens);
  Matrix y(1, labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) y(0, i) = static_cast<double>(labels[i]);

  BatchLoss out;
  out.cls = ad::bce(fr.probs, y);
  out.ort = tape.constant(Matrix(1, 1));
  out.llb = tape.constant(Matrix(1, 1));

  const auto& layers = model.layers();
  if (traits.subspace_term || traits.gradient_term) {
    objective::OrthoConfig cfg = ortho;
    cfg.subspace_term = ortho.subspace_term && traits.subspace_term;
    cfg.gradient_term = ortho.gradient_term && traits.gradient_term;
    const auto [l1, l2] = objective::lambda_schedule(cfg, epoch);
    out.lambda1 = cfg.subspace_term ? l1 : 0.0;
    out.lambda2 = cfg.gradient_term ? l2 : 0.0;
    std::vector<ad::Var> current;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const std::ptrdiff_t k = current_fake_index(layers[l]);
      if (k < 0) throw std::logic_error("batch_loss: orthogonality requested but layer has no trainable Fake expert");
      current.push_back(binding.experts[l][static_cast<std::size_t>(k)].b);
    }
    objective::OrthoInputs in{current, fr.captured, model.config().rank};
    out.ort = objective::integrated_ortho_loss(tape, archive, in, epoch, cfg);
  }
  if (traits.llb) {
    std::vector<ad::Var> parts;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const Matrix c = moe::coefficient_matrix(layers[l].experts(), labels, layers[l].config().delta);
      parts.push_back(objective::llb_loss(fr.routing[l].response, c));
    }
    out.llb = ad::scale(ad::sum(parts), 1.0 / static_cast<double>(parts.size()));
  }
  out.total = objective::total_loss(out.cls, out.ort, out.llb, ortho.lambda3);
  out.captured = std::move(fr.captured);
  return out;
}

TrainLog train_task(TrainContext& ctx, const Dataset& train, std::size_t task_id) {
  network::DevMoeModel& model = ctx.model;
  const TrainerConfig& tc = ctx.trainer;
  if (train.size() == 0) throw std::invalid_argument("train_task: empty training set");
  if (ctx.archive.layer_count() != model.layers().size()) {
    throw std::invalid_argument("train_task: archive has " + std::to_string(ctx.archive.layer_count()) +
                                " layers, model has " + std::to_string(model.layers().size()));
  }
  if (ctx.traits.expands) model.expand_for_task(task_id);

  TrainLog log;
  for (const moe::DevMoeLayer& layer : model.layers()) {
    const std::ptrdiff_t k = current_fake_index(layer);
    if (k >= 0) log.initial_bases.push_back(layer.experts()[static_cast<std::size_t>(k)].b);
  }

  AdamState adam;
  std::vector<std::size_t> order(train.size());
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < tc.epochs_per_task; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::seed_seq seq{static_cast<std::uint32_t>(tc.seed), static_cast<std::uint32_t>(tc.seed >> 32),
                      static_cast<std::uint32_t>(task_id), static_cast<std::uint32_t>(epoch)};
    linalg::Rng rng(seq);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
      const std::size_t count = std::min(tc.batch_size, order.size() - start);
      const std::span<const std::size_t> idx(order.data() + start, count);
      const Matrix tokens = train.gather(idx);
      const std::vector<int> labels = train.gather_labels(idx);

      ad::Tape tape;
      network::ModelBinding binding = network::bind(tape, model, true);
      BatchLoss bl = batch_loss(tape, binding, model, ctx.archive, tokens, labels, epoch, ctx.ortho, ctx.traits);
      ad::Gradients grads = tape.backward(bl.total, binding.parameters);
      std::vector<Matrix> g;
      g.reserve(binding.parameters.size());
      for (const ad::Var& p : binding.parameters) g.push_back(grads.at(p));
      adam_step(adam, binding.targets, g, tc.adam);

      log.steps.push_back({task_id, epoch, step++, bl.cls.value().scalar(), bl.ort.value().scalar(),
                           bl.llb.value().scalar(), bl.lambda1, bl.lambda2, bl.total.value().scalar()});
    }
  }

  const network::Predictions p = network::predict(model, train.tokens);
  log.final_train_accuracy = eval::accuracy(p.probs, train.labels);

  const bool has_fakes = model.layers().empty() || current_fake_index(model.layers()[0]) >= 0;
  if (has_fakes) {
    for (std::size_t l = 0; l < model.layers().size(); ++l) {
      const auto& layer = model.layers()[l];
      ctx.archive.add_basis(l, layer.experts()[static_cast<std::size_t>(current_fake_index(layer))].b);
    }
    if (ctx.ortho.mode == objective::GradOrthMode::StoredPrevSpaces) {
      // Evenly spaced samples so both classes contribute.
      const std::size_t m = std::min(tc.archive_samples, train.size());
      std::vector<std::size_t> idx(m);
      for (std::size_t j = 0; j < m; ++j) idx[j] = j * train.size() / m;
      ad::Tape tape;
      network::ModelBinding binding = network::bind_constant(tape, model);
      network::ForwardResult fr = network::forward(tape, binding, model, train.gather(idx));
      for (std::size_t l = 0; l < fr.captured.size(); ++l) {
        ctx.archive.add_input_space(
            l, objective::input_space_basis(fr.captured[l].value(), model.config().rank, ctx.ortho.column_cap));
      }
    }
  }
  return log;
}

}  // namespace devmoe::continual
