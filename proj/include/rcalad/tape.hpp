#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "rcalad/tensor.hpp"

namespace rcalad {

/// Trainable tensor with its gradient buffer.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  void zero_grad();
};

enum class OpKind {
  constant,
  variable,
  parameter,
  affine,
  activation,  // tanh, sigmoid, linear
  rectifier,   // relu, lrelu: kink at 0
  concat,
  dropout,
  batch_norm,
  spectral_norm,
  add,
  sub,
  mul,
  scale,
  log,
  one_minus,
  clamp,
  mean,
  sum,
};

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  std::size_t id() const noexcept { return id_; }
  Tape* tape() const noexcept { return tape_; }
  bool valid() const noexcept { return tape_ != nullptr; }

private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class BackwardContext;

/// Linear record of forward operations. Nodes are appended in evaluation
/// order, so every node's inputs precede it and a single reverse sweep
/// visits each node once.
class Tape {
public:
  using BackwardFn = std::function<void(BackwardContext&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);
  /// Leaf bound to `p`; backward() adds d(root)/d(p) into p.grad.
  Var parameter(Parameter& p);
  /// Parameter treated as a constant (no gradient flows into it).
  Var frozen(const Parameter& p) { return constant(p.value); }

  Var record(OpKind kind, std::vector<Var> inputs, Tensor value, BackwardFn backward);

  /// Reverse sweep from a single-element root.
  void backward(Var root);

  const Tensor& value(Var v) const;
  /// Gradient of the last backward() root w.r.t. `v`; zeros when unreached.
  Tensor grad(Var v) const;
  bool requires_grad(Var v) const;
  OpKind kind(Var v) const;
  std::span<const std::size_t> inputs(Var v) const;
  /// Handle to the node recorded `id`-th (0-based).
  Var node(std::size_t id);
  std::size_t size() const noexcept { return nodes_.size(); }

  void clear() { nodes_.clear(); }

private:
  friend class BackwardContext;

  struct Node {
    OpKind kind;
    std::vector<std::size_t> inputs;
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool has_grad = false;
    Parameter* param = nullptr;
    BackwardFn backward;
  };

  void check_owned(Var v) const;
  void accumulate(std::size_t id, const Tensor& g);

  std::deque<Node> nodes_;  // stable addresses: values outlive later appends
};

/// View handed to an op's backward function.
class BackwardContext {
public:
  const Tensor& grad_out() const;
  const Tensor& output() const;
  const Tensor& input(std::size_t i) const;
  bool needs(std::size_t i) const;
  void accumulate(std::size_t i, const Tensor& g);

private:
  friend class Tape;
  BackwardContext(Tape& tape, std::size_t node) : tape_(tape), node_(node) {}

  Tape& tape_;
  std::size_t node_;
};

} // namespace rcalad
