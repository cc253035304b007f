// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "devmoe/linalg/matrix.hpp"

namespace devmoe::ad {

using linalg::Matrix;
using NodeId = std::size_t;

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; only valid while the
/// owning Tape is alive.
class Var {
 public:
  Var() = default;

  [[nodiscard]] NodeId id() const noexcept { return id_; }
  [[nodiscard]] Tape& tape() const noexcept { return *tape_; }
  [[nodiscard]] const Matrix& value() const;
  [[nodiscard]] std::size_t rows() const;
  [[nodiscard]] std::size_t cols() const;
  [[nodiscard]] bool requires_grad() const;
  [[nodiscard]] bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, NodeId id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  NodeId id_ = 0;
};

/// Everything a backward rule may touch. `input_grads[i]` is null when input i
/// does not require a gradient; rules accumulate (+=) into the others.
struct BackwardContext {
  const Matrix& grad_out;
  const Matrix& value_out;
  std::span<const Matrix* const> inputs;
  std::span<Matrix* const> input_grads;
};

using BackwardFn = std::function<void(const BackwardContext&)>;

/// Gradients returned by Tape::backward, keyed by node id.
class Gradients {
 public:
  [[nodiscard]] const Matrix& at(const Var& v) const;
  [[nodiscard]] bool contains(const Var& v) const { return grads_.count(v.id()) != 0; }
  [[nodiscard]] std::size_t size() const noexcept { return grads_.size(); }

 private:
  friend class Tape;
  std::map<NodeId, Matrix> grads_;
};

/// Append-only define-by-run graph. Node ids increase in recording order, so
/// every input precedes its consumers and backward is a single reverse scan.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = delete;
  Tape& operator=(Tape&&) = delete;

  Var constant(Matrix value);
  /// Trainable leaf.
  Var parameter(Matrix value);

  /// Record an op. The node requires a gradient iff any input does and a
  /// backward rule is supplied.
  Var record(std::string op, Matrix value, std::vector<Var> inputs, BackwardFn backward);

  [[nodiscard]] const Matrix& value(const Var& v) const { return nodes_.at(v.id()).value; }
  [[nodiscard]] bool requires_grad(const Var& v) const { return nodes_.at(v.id()).requires_grad; }
  [[nodiscard]] const std::string& op_name(const Var& v) const { return nodes_.at(v.id()).op; }
  [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }

  /// Reverse-mode sweep from a 1x1 `loss`. Returns d loss / d v for every
  /// seed; seeds that are not trainable leaves are rejected.
  Gradients backward(const Var& loss, std::span<const Var> seeds);

 private:
  struct Node {
    std::string op;
    Matrix value;
    std::vector<NodeId> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    bool trainable_leaf = false;
  };
  Var push(Node node);
  std::vector<Node> nodes_;
};

}  // namespace devmoe::ad
