// SPDX-License-Identifier: Apache-2.0
#include "devmoe/continual/runner.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>

#include "devmoe/linalg/ops.hpp"
#include "devmoe/network/checkpoint.hpp"
#include "devmoe/objective/losses.hpp"

namespace devmoe::continual {

void RunConfig::validate() const {
  stream.validate();
  model.validate();
  trainer.validate();
  ortho.validate(trainer.epochs_per_task);
  if (stream.token_count != model.backbone.token_count || stream.embed_dim != model.backbone.embed_dim) {
    throw std::invalid_argument("stream token shape (" + std::to_string(stream.token_count) + " x " +
                                std::to_string(stream.embed_dim) + ") differs from model (" +
                                std::to_string(model.backbone.token_count) + " x " +
                                std::to_string(model.backbone.embed_dim) + ")");
  }
}

RunConfig with_seed(RunConfig config, std::uint64_t seed) {
  config.model.adapter_seed = seed;
  config.trainer.seed = seed;
  return config;
}

std::vector<eval::StepRecord> RunResult::all_steps() const {
  std::vector<eval::StepRecord> out;
  for (const TrainLog& log : logs) out.insert(out.end(), log.steps.begin(), log.steps.end());
  return out;
}

namespace {

std::vector<unsigned char> backbone_bytes(const network::Backbone& bb) {
  moe::LoraExpert carrier;
  std::vector<unsigned char> out;
  for (const network::Block& b : bb.blocks) {
    for (const Matrix* m : {&b.token_mix, &b.w1, &b.b1, &b.w2, &b.b2}) {
      carrier.a = *m;
      const auto bytes = moe::serialize_expert(carrier);
      out.insert(out.end(), bytes.begin(), bytes.end());
    }
  }
  return out;
}

struct FrozenSnapshot {
  std::size_t layer;
  std::size_t index;
  std::vector<unsigned char> bytes;
};

// Bytes every non-current expert must keep once the next expansion freezes it.
std::vector<FrozenSnapshot> snapshot_freezable(const network::DevMoeModel& model) {
  std::vector<FrozenSnapshot> out;
  for (std::size_t l = 0; l < model.layers().size(); ++l) {
    const auto& layer = model.layers()[l];
    const auto& experts = layer.experts();
    for (std::size_t k = 0; k < experts.size(); ++k) {
      const bool shared_real = experts[k].kind == moe::ExpertKind::Real &&
                               layer.config().layout != moe::BankLayout::RealAndFakeSequences;
      if (shared_real) continue;
      moe::LoraExpert copy = experts[k];
      copy.frozen = true;
      out.push_back({l, k, moe::serialize_expert(copy)});
    }
  }
  return out;
}

}  // namespace

RunResult run_sequence(const RunConfig& config, const RunOptions& options) {
  config.validate();
  const VariantTraits vt = traits(config.variant);
  const TaskStream stream(config.stream);
  const std::size_t tasks = config.stream.num_tasks;

  auto model = std::make_shared<network::DevMoeModel>(config.model, vt.layout);
  objective::SubspaceArchive archive(model->layers().size());
  const auto backbone_before = backbone_bytes(model->backbone());

  RunResult result;
  result.acc = eval::ScoreMatrix(tasks, eval::Metric::Acc);
  result.auc = eval::ScoreMatrix(tasks, eval::Metric::Auc);
  std::vector<Dataset> tests;
  std::vector<FrozenSnapshot> frozen;
  std::vector<FrozenSnapshot> first_snapshots;

  if (!options.checkpoint_dir.empty()) std::filesystem::create_directories(options.checkpoint_dir);

  for (std::size_t t = 1; t <= tasks; ++t) {
    TaskData data = stream.generate_task(t);
    tests.push_back(std::move(data.test));

    TrainContext ctx{*model, archive, config.trainer, config.ortho, vt};
    result.logs.push_back(train_task(ctx, data.train, t));

    for (const FrozenSnapshot& s : frozen) {
      ++result.frozen_checks;
      const auto& experts = model->layers()[s.layer].experts();
      if (s.index >= experts.size() || !experts[s.index].frozen ||
          moe::serialize_expert(experts[s.index]) != s.bytes) {
        result.freeze_violations.push_back("layer " + std::to_string(s.layer) + " expert " + std::to_string(s.index) +
                                           " changed during task " + std::to_string(t));
      }
    }
    frozen = snapshot_freezable(*model);
    for (const FrozenSnapshot& s : frozen) {
      const bool seen = std::any_of(first_snapshots.begin(), first_snapshots.end(), [&](const FrozenSnapshot& f) {
        return f.layer == s.layer && f.index == s.index;
      });
      if (!seen) first_snapshots.push_back(s);
    }

    const auto pc = model->count_parameters();
    result.params.push_back({t, pc.total, pc.trainable, pc.growth_per_task});

    for (std::size_t i = 0; i < t; ++i) {
      const network::Predictions p = network::predict(*model, tests[i].tokens);
      result.acc.set(t - 1, i, eval::accuracy(p.probs, tests[i].labels));
      result.auc.set(t - 1, i, eval::auc(p.probs, tests[i].labels));
    }
    if (!options.checkpoint_dir.empty()) {
      network::save_checkpoint(options.checkpoint_dir / ("task_" + std::to_string(t) + ".ckpt"), *model,
                               options.config_digest);
    }
    if (options.progress) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "task %zu/%zu: train acc %.2f, avg acc %.2f", t, tasks,
                    result.logs.back().final_train_accuracy, eval::avg_row(result.acc, t - 1));
      options.progress(buf);
    }
  }

  // Re-assert every expert frozen during the run against its bytes at the end
  // of the task that trained it.
  for (const FrozenSnapshot& s : first_snapshots) {
    const auto& e = model->layers()[s.layer].experts()[s.index];
    if (!e.frozen) continue;
    ++result.frozen_checks;
    if (moe::serialize_expert(e) != s.bytes) {
      result.freeze_violations.push_back("layer " + std::to_string(s.layer) + " expert " + std::to_string(s.index) +
                                         " differs from its state when frozen");
    }
  }
  result.backbone_unchanged = backbone_bytes(model->backbone()) == backbone_before;

  for (std::size_t l = 0; l < archive.layer_count(); ++l) {
    const auto& bases = archive.bases(l);
    for (std::size_t j = 1; j < bases.size(); ++j) {
      for (std::size_t i = 0; i < j; ++i) {
        result.overlaps.push_back({l, i + 1, j + 1,
                                   objective::subspace_overlap(result.logs[j].initial_bases.at(l), bases[i]),
                                   objective::subspace_overlap(bases[j], bases[i])});
      }
    }
  }
  result.model = model;
  return result;
}

}  // namespace devmoe::continual
