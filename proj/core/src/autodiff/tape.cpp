// SPDX-License-Identifier: Apache-2.0
#include "devmoe/autodiff/tape.hpp"

#include <stdexcept>

#include "devmoe/linalg/ops.hpp"

namespace devmoe::ad {

const Matrix& Var::value() const { return tape_->value(*this); }
std::size_t Var::rows() const { return value().rows(); }
std::size_t Var::cols() const { return value().cols(); }
bool Var::requires_grad() const { return tape_->requires_grad(*this); }

const Matrix& Gradients::at(const Var& v) const {
  auto it = grads_.find(v.id());
  if (it == grads_.end()) throw std::out_of_range("Gradients::at: node was not seeded");
  return it->second;
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Matrix value) {
  Node n;
  n.op = "constant";
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::parameter(Matrix value) {
  Node n;
  n.op = "parameter";
  n.value = std::move(value);
  n.requires_grad = true;
  n.trainable_leaf = true;
  return push(std::move(n));
}

Var Tape::record(std::string op, Matrix value, std::vector<Var> inputs, BackwardFn backward) {
  Node n;
  n.op = std::move(op);
  n.value = std::move(value);
  n.inputs.reserve(inputs.size());
  for (const Var& v : inputs) {
    if (&v.tape() != this) throw std::invalid_argument(n.op + ": input recorded on a different tape");
    n.inputs.push_back(v.id());
    n.requires_grad = n.requires_grad || nodes_[v.id()].requires_grad;
  }
  if (!backward) n.requires_grad = false;
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

Gradients Tape::backward(const Var& loss, std::span<const Var> seeds) {
  const Node& root = nodes_.at(loss.id());
  if (!root.value.is_scalar()) {
    throw std::invalid_argument("backward: loss must be 1x1, got " + root.value.shape_string());
  }
  for (const Var& s : seeds) {
    if (!nodes_.at(s.id()).trainable_leaf) {
      throw std::invalid_argument("backward: seed node " + std::to_string(s.id()) + " (" +
                                  nodes_[s.id()].op + ") is not a trainable parameter");
    }
  }

  std::vector<Matrix> grads(loss.id() + 1);
  std::vector<bool> touched(loss.id() + 1, false);
  if (root.requires_grad) {
    grads[loss.id()] = Matrix(1, 1, 1.0);
    touched[loss.id()] = true;
  }

  std::vector<const Matrix*> input_values;
  std::vector<Matrix*> input_grads;
  for (NodeId id = loss.id() + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!touched[id] || !node.backward) continue;
    input_values.clear();
    input_grads.clear();
    for (NodeId in : node.inputs) {
      input_values.push_back(&nodes_[in].value);
      if (nodes_[in].requires_grad) {
        if (!touched[in]) {
          grads[in] = Matrix(nodes_[in].value.rows(), nodes_[in].value.cols());
          touched[in] = true;
        }
        input_grads.push_back(&grads[in]);
      } else {
        input_grads.push_back(nullptr);
      }
    }
    node.backward(BackwardContext{grads[id], node.value, input_values, input_grads});
    if (!node.trainable_leaf) {
      grads[id] = Matrix();  // intermediate no longer needed
    }
  }

  Gradients out;
  for (const Var& s : seeds) {
    const Node& n = nodes_[s.id()];
    if (s.id() <= loss.id() && touched[s.id()]) {
      out.grads_[s.id()] = grads[s.id()];
    } else {
      out.grads_[s.id()] = Matrix(n.value.rows(), n.value.cols());
    }
  }
  return out;
}

}  // namespace devmoe::ad
