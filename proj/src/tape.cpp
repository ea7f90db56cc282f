#include "rcalad/tape.hpp"

#include <algorithm>

#include "rcalad/error.hpp"

namespace rcalad {

void Parameter::zero_grad() {
  if (grad.shape() != value.shape()) {
    grad = Tensor(value.shape());
  } else {
    grad.fill(Real(0));
  }
}

const Tensor& Var::value() const {
  require(tape_ != nullptr, ErrorCode::contract, "value() on an empty Var");
  return tape_->value(*this);
}

bool Var::requires_grad() const { return tape_ && tape_->requires_grad(*this); }

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{OpKind::constant, {}, std::move(value), {}, false, false, nullptr, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Tensor value) {
  nodes_.push_back(Node{OpKind::variable, {}, std::move(value), {}, true, false, nullptr, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Parameter& p) {
  nodes_.push_back(Node{OpKind::parameter, {}, p.value, {}, true, false, &p, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(OpKind kind, std::vector<Var> inputs, Tensor value, BackwardFn backward) {
  Node node{kind, {}, std::move(value), {}, false, false, nullptr, std::move(backward)};
  node.inputs.reserve(inputs.size());
  for (const Var& v : inputs) {
    check_owned(v);
    node.inputs.push_back(v.id_);
    node.requires_grad = node.requires_grad || nodes_[v.id_].requires_grad;
  }
  if (!node.requires_grad) node.backward = nullptr;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Tape::check_owned(Var v) const {
  require(v.tape_ == this && v.id_ < nodes_.size(), ErrorCode::contract,
          "variable does not belong to this tape");
}

const Tensor& Tape::value(Var v) const {
  check_owned(v);
  return nodes_[v.id_].value;
}

Tensor Tape::grad(Var v) const {
  check_owned(v);
  const Node& n = nodes_[v.id_];
  return n.has_grad ? n.grad : Tensor(n.value.shape());
}

bool Tape::requires_grad(Var v) const {
  check_owned(v);
  return nodes_[v.id_].requires_grad;
}

OpKind Tape::kind(Var v) const {
  check_owned(v);
  return nodes_[v.id_].kind;
}

std::span<const std::size_t> Tape::inputs(Var v) const {
  check_owned(v);
  return nodes_[v.id_].inputs;
}

Var Tape::node(std::size_t id) {
  require(id < nodes_.size(), ErrorCode::contract, "node index out of range");
  return Var(this, id);
}

void Tape::accumulate(std::size_t id, const Tensor& g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  require(g.size() == n.value.size(), ErrorCode::shape,
          "gradient of shape " + to_string(g.shape()) + " for node of shape " +
              to_string(n.value.shape()));
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape(), std::vector<Real>(g.values().begin(), g.values().end()));
    n.has_grad = true;
    return;
  }
  auto dst = n.grad.values();
  auto src = g.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void Tape::backward(Var root) {
  check_owned(root);
  require(nodes_[root.id_].value.size() == 1, ErrorCode::contract,
          "backward() needs a scalar root, got shape " +
              to_string(nodes_[root.id_].value.shape()));
  for (Node& n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor();
  }
  if (!nodes_[root.id_].requires_grad) return;
  accumulate(root.id_, Tensor(nodes_[root.id_].value.shape(), Real(1)));

  for (std::size_t i = root.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad) continue;
    if (n.backward) {
      BackwardContext ctx(*this, i);
      n.backward(ctx);
    }
    if (n.param != nullptr) {
      Parameter& p = *n.param;
      if (p.grad.shape() != p.value.shape()) p.zero_grad();
      auto dst = p.grad.values();
      auto src = n.grad.values();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
  }
}

const Tensor& BackwardContext::grad_out() const { return tape_.nodes_[node_].grad; }

const Tensor& BackwardContext::output() const { return tape_.nodes_[node_].value; }

const Tensor& BackwardContext::input(std::size_t i) const {
  return tape_.nodes_[tape_.nodes_[node_].inputs.at(i)].value;
}

bool BackwardContext::needs(std::size_t i) const {
  return tape_.nodes_[tape_.nodes_[node_].inputs.at(i)].requires_grad;
}

void BackwardContext::accumulate(std::size_t i, const Tensor& g) {
  tape_.accumulate(tape_.nodes_[node_].inputs.at(i), g);
}

} // namespace rcalad
