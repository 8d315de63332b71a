#include "simsr/ad/tape.hpp"

#include "simsr/error.hpp"

namespace simsr::ad {

Parameter& ParamSet::add(std::string name, Tensor value, bool trainable) {
  if (find(name)) throw Error(Errc::invalid_argument, "duplicate parameter " + name);
  Tensor grad(value.shape());
  params_.push_back({std::move(name), std::move(value), std::move(grad), trainable});
  return params_.back();
}

Parameter* ParamSet::find(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

const Parameter* ParamSet::find(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

Parameter& ParamSet::get(const std::string& name) {
  if (auto* p = find(name)) return *p;
  throw Error(Errc::invalid_argument, "unknown parameter " + name);
}

const Parameter& ParamSet::get(const std::string& name) const {
  if (const auto* p = find(name)) return *p;
  throw Error(Errc::invalid_argument, "unknown parameter " + name);
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_)
    if (p.trainable) n += p.value.size();
  return n;
}

void ParamSet::zero_grad() {
  for (auto& p : params_) p.grad.fill(0.0);
}

const Tensor& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::variable(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::parameter(Parameter& param) {
  Node n;
  n.value = Tensor(Shape{0});
  n.requires_grad = param.trainable;
  n.param = &param;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::vector<std::size_t> parents, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  for (auto p : parents) n.requires_grad = n.requires_grad || nodes_[p].requires_grad;
  if (n.requires_grad) {
    n.parents = std::move(parents);
    n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Tensor* Tape::grad_target(std::size_t id) {
  auto& n = nodes_[id];
  if (!n.requires_grad) return nullptr;
  if (!n.has_grad) {
    n.grad = Tensor(value(id).shape());
    n.has_grad = true;
  }
  return &n.grad;
}

void Tape::backward(const Var& loss) {
  if (consumed_) throw Error(Errc::graph_consumed, "backward called twice on one recording");
  if (loss.tape() != this) throw Error(Errc::invalid_argument, "loss belongs to another tape");
  const auto& lv = value(loss.id());
  if (lv.size() != 1) throw Error(Errc::not_scalar, "loss has shape " + shape_string(lv.shape()));
  consumed_ = true;
  if (!nodes_[loss.id()].requires_grad) return;
  grad_target(loss.id())->fill(1.0);
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    auto& n = nodes_[id];
    if (!n.has_grad) continue;
    if (n.backward) n.backward(*this, id);
    if (n.param) {
      auto& pg = n.param->grad;
      if (pg.size() != n.grad.size()) pg = Tensor(n.param->value.shape());
      for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += n.grad[i];
    }
  }
}

Tensor Tape::grad(const Var& v) const {
  const auto& n = nodes_[v.id()];
  if (n.has_grad) return n.grad;
  return Tensor(value(v.id()).shape());
}

void Tape::reset() {
  nodes_.clear();
  consumed_ = false;
}

}  // namespace simsr::ad
