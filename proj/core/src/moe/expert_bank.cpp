// SPDX-License-Identifier: Apache-2.0
#include "devmoe/moe/expert_bank.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>

namespace devmoe::moe {

Matrix LoraExpert::delta_weight() const { return linalg::matmul(a, b); }

std::string to_string(GateReduction g) { return g == GateReduction::Mean ? "mean" : "l2norm"; }

std::string to_string(BankLayout layout) {
  switch (layout) {
    case BankLayout::RealAndFakes: return "real_and_fakes";
    case BankLayout::FakesOnly: return "fakes_only";
    case BankLayout::RealOnly: return "real_only";
    case BankLayout::RealAndFakeSequences: return "real_and_fake_sequences";
  }
  return "unknown";
}

GateReduction parse_gate_reduction(const std::string& s) {
  if (s == "mean") return GateReduction::Mean;
  if (s == "l2norm") return GateReduction::L2Norm;
  throw std::invalid_argument("unknown gate reduction '" + s + "' (expected mean or l2norm)");
}

DevMoeLayer::DevMoeLayer(const LayerConfig& config, linalg::Rng& rng) : config_(config) {
  if (config.d_in == 0 || config.d_out == 0 || config.rank == 0) {
    throw std::invalid_argument("DevMoeLayer: d_in, d_out and rank must be >= 1");
  }
  const std::size_t limit = std::min(config.d_in, config.d_out) / 4;
  if (config.rank > limit) {
    throw std::invalid_argument("DevMoeLayer: rank " + std::to_string(config.rank) +
                                " exceeds min(d_in, d_out)/4 = " + std::to_string(limit));
  }
  if (!(config.temperature > 0.0)) throw std::invalid_argument("DevMoeLayer: temperature must be > 0");
  if (config.delta < 0.0 || config.delta >= 1.0) {
    throw std::invalid_argument("DevMoeLayer: delta must lie in [0, 1)");
  }
  if (config.layout == BankLayout::RealAndFakes || config.layout == BankLayout::RealOnly) {
    experts_.push_back(make_expert(ExpertKind::Real, 0, rng));
  }
}

LoraExpert DevMoeLayer::make_expert(ExpertKind kind, std::size_t task_id, linalg::Rng& rng) const {
  LoraExpert e;
  e.kind = kind;
  e.task_id = task_id;
  e.a = Matrix(config_.d_out, config_.rank);
  e.b = linalg::gaussian(config_.rank, config_.d_in, 1.0 / std::sqrt(static_cast<double>(config_.d_in)), rng);
  return e;
}

void DevMoeLayer::expand_for_task(std::size_t task_id, linalg::Rng& rng) {
  if (config_.layout == BankLayout::RealOnly) {
    throw std::logic_error("expand_for_task: layout real_only holds a single global expert");
  }
  const std::size_t expected = fake_count() + 1;
  if (task_id != expected) {
    throw std::invalid_argument("expand_for_task: task_id " + std::to_string(task_id) +
                                (task_id < expected ? " already has an expert" : " skips ahead") +
                                "; expected " + std::to_string(expected));
  }
  for (LoraExpert& e : experts_) {
    if (e.kind == ExpertKind::Fake || config_.layout == BankLayout::RealAndFakeSequences) e.frozen = true;
  }
  if (config_.layout == BankLayout::RealAndFakeSequences) {
    experts_.push_back(make_expert(ExpertKind::Real, task_id, rng));
  }
  experts_.push_back(make_expert(ExpertKind::Fake, task_id, rng));
}

std::size_t DevMoeLayer::fake_count() const noexcept {
  return static_cast<std::size_t>(std::count_if(experts_.begin(), experts_.end(),
                                                [](const LoraExpert& e) { return e.kind == ExpertKind::Fake; }));
}

const LoraExpert* DevMoeLayer::current_fake() const noexcept {
  for (auto it = experts_.rbegin(); it != experts_.rend(); ++it) {
    if (it->kind == ExpertKind::Fake && !it->frozen) return &*it;
  }
  return nullptr;
}

std::size_t DevMoeLayer::trainable_parameter_count() const noexcept {
  std::size_t n = 0;
  for (const LoraExpert& e : experts_)
    if (!e.frozen) n += e.parameter_count();
  return n;
}

std::size_t DevMoeLayer::total_parameter_count() const noexcept {
  std::size_t n = 0;
  for (const LoraExpert& e : experts_) n += e.parameter_count();
  return n;
}

std::size_t DevMoeLayer::growth_per_task() const noexcept {
  const std::size_t one = config_.rank * (config_.d_in + config_.d_out);
  switch (config_.layout) {
    case BankLayout::RealOnly: return 0;
    case BankLayout::RealAndFakeSequences: return 2 * one;
    default: return one;
  }
}

void DevMoeLayer::validate() const {
  const auto fail = [](const std::string& what) { throw std::logic_error("DevMoeLayer invariant: " + what); };
  for (std::size_t k = 0; k < experts_.size(); ++k) {
    const LoraExpert& e = experts_[k];
    if (e.a.rows() != config_.d_out || e.a.cols() != config_.rank || e.b.rows() != config_.rank ||
        e.b.cols() != config_.d_in) {
      fail("expert " + std::to_string(k) + " has shapes " + e.a.shape_string() + ", " + e.b.shape_string());
    }
  }
  std::size_t unfrozen_fakes = 0;
  std::size_t unfrozen_reals = 0;
  std::size_t next_task = 1;
  for (std::size_t k = 0; k < experts_.size(); ++k) {
    const LoraExpert& e = experts_[k];
    if (e.kind == ExpertKind::Fake) {
      if (e.task_id != next_task++) fail("fake expert task ids are not 1..t in order");
      if (!e.frozen) {
        ++unfrozen_fakes;
        if (k + 1 != experts_.size()) fail("a fake other than the newest is trainable");
      }
    } else if (!e.frozen) {
      ++unfrozen_reals;
    }
  }
  if (unfrozen_fakes > 1) fail("more than one trainable fake expert");
  switch (config_.layout) {
    case BankLayout::RealAndFakes:
    case BankLayout::RealOnly:
      if (experts_.empty() || experts_[0].kind != ExpertKind::Real || experts_[0].frozen) {
        fail("index 0 must hold the trainable Real expert");
      }
      for (std::size_t k = 1; k < experts_.size(); ++k)
        if (experts_[k].kind == ExpertKind::Real) fail("more than one Real expert");
      if (config_.layout == BankLayout::RealOnly && experts_.size() != 1) fail("real_only holds one expert");
      break;
    case BankLayout::FakesOnly:
      if (unfrozen_reals != 0 || experts_.size() != fake_count()) fail("fakes_only holds a Real expert");
      break;
    case BankLayout::RealAndFakeSequences:
      if (experts_.size() != 2 * fake_count()) fail("sequence layout must pair every Fake with a Real");
      for (std::size_t k = 0; k < experts_.size(); ++k) {
        const ExpertKind want = k % 2 == 0 ? ExpertKind::Real : ExpertKind::Fake;
        if (experts_[k].kind != want || experts_[k].task_id != k / 2 + 1) fail("sequence layout out of order");
      }
      if (unfrozen_reals > 1) fail("more than one trainable Real expert");
      break;
  }
}

Matrix coefficient_matrix(const std::vector<LoraExpert>& experts, const std::vector<int>& labels, double delta) {
  Matrix c(experts.size(), labels.size());
  for (std::size_t k = 0; k < experts.size(); ++k) {
    const int expert_label = experts[k].kind == ExpertKind::Real ? 0 : 1;
    for (std::size_t l = 0; l < labels.size(); ++l) {
      if (labels[l] != 0 && labels[l] != 1) {
        throw std::invalid_argument("coefficient_matrix: label " + std::to_string(labels[l]) + " is not 0 or 1");
      }
      c(k, l) = labels[l] == expert_label ? 1.0 + delta : 1.0 - delta;
    }
  }
  return c;
}

namespace {
template <typename T>
void put(std::vector<unsigned char>& out, T v) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.insert(out.end(), buf, buf + sizeof(T));
}

void put_matrix(std::vector<unsigned char>& out, const Matrix& m) {
  put<std::uint64_t>(out, m.rows());
  put<std::uint64_t>(out, m.cols());
  for (double v : m.values()) put(out, v);
}
}  // namespace

std::vector<unsigned char> serialize_expert(const LoraExpert& e) {
  std::vector<unsigned char> out;
  put<std::uint8_t>(out, e.kind == ExpertKind::Real ? 0 : 1);
  put<std::uint64_t>(out, e.task_id);
  put<std::uint8_t>(out, e.frozen ? 1 : 0);
  put_matrix(out, e.a);
  put_matrix(out, e.b);
  return out;
}

}  // namespace devmoe::moe
