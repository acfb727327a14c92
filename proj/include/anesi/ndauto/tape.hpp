#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "anesi/ndauto/params.hpp"
#include "anesi/ndauto/tensor.hpp"

namespace anesi::nd {

class Tape;

// Handle to a node recorded on a Tape. Cheap to copy; only valid while its
// tape is alive.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Linear record of primitive operations. Nodes are appended in evaluation
// order, so reverse id order is a topological order and backward() visits
// every node once.
class Tape {
 public:
  // Propagates the gradient held by node `self` into its inputs.
  using BackwardFn = std::function<void(Tape& tape, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Leaf whose gradient is kept and can be read with gradient().
  Var input(Tensor value);
  // Leaf bound to a named parameter. Repeated calls with the same name return
  // the same node, so gradients from every use accumulate.
  Var param(const ParamStore& params, const std::string& name);

  // Appends a derived node. `backward` is only invoked when some input
  // requires a gradient.
  Var record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  // Gradient accumulator of a node, allocated on first use.
  Tensor& grad(std::size_t id);

  // Reverse pass from a single-element loss. Throws ConfigError otherwise.
  void backward(Var loss);

  Gradients param_gradients() const;
  const Tensor& gradient(Var v) const;
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    bool requires_grad = false;
    std::string param_name;
  };

  std::vector<Node> nodes_;
  std::map<std::string, std::size_t> param_ids_;
};

}  // namespace anesi::nd
