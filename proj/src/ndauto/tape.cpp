#include "anesi/ndauto/tape.hpp"

#include "anesi/errors.hpp"

namespace anesi::nd {

const Tensor& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, nullptr, false, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::input(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, nullptr, true, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(const ParamStore& params, const std::string& name) {
  if (auto it = param_ids_.find(name); it != param_ids_.end()) return Var(this, it->second);
  nodes_.push_back(Node{params.value(name), {}, nullptr, true, name});
  param_ids_[name] = nodes_.size() - 1;
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward) {
  bool needs_grad = false;
  for (const Var& in : inputs) needs_grad = needs_grad || nodes_[in.id()].requires_grad;
  nodes_.push_back(Node{std::move(value), {}, needs_grad ? std::move(backward) : nullptr,
                        needs_grad, {}});
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad(std::size_t id) {
  Node& node = nodes_[id];
  if (node.grad.size() != node.value.size()) node.grad = Tensor(node.value.shape());
  return node.grad;
}

void Tape::backward(Var loss) {
  if (value(loss.id()).size() != 1) {
    throw ConfigError("backward() needs a scalar loss, got " +
                      std::to_string(value(loss.id()).size()) + " elements");
  }
  for (auto& node : nodes_) {
    if (node.requires_grad) node.grad = Tensor(node.value.shape());
  }
  if (!nodes_[loss.id()].requires_grad) return;
  grad(loss.id())[0] = 1.0;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    if (nodes_[id].backward) nodes_[id].backward(*this, id);
  }
}

Gradients Tape::param_gradients() const {
  Gradients out;
  for (const auto& [name, id] : param_ids_) {
    const Node& node = nodes_[id];
    out[name] = node.grad.size() == node.value.size() ? node.grad : Tensor(node.value.shape());
  }
  return out;
}

const Tensor& Tape::gradient(Var v) const { return nodes_[v.id()].grad; }

}  // namespace anesi::nd
