#pragma once

#include "simsr/ad/tensor.hpp"

#include <deque>
#include <functional>
#include <string>
#include <vector>

namespace simsr::ad {

/// Trainable tensor with its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;
};

/// Ordered, name-addressable parameter collection. Element addresses are
/// stable while no parameters are added.
class ParamSet {
 public:
  Parameter& add(std::string name, Tensor value, bool trainable = true);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  const Parameter* find(const std::string& name) const;
  Parameter* find(const std::string& name);

  std::deque<Parameter>& all() { return params_; }
  const std::deque<Parameter>& all() const { return params_; }
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  void zero_grad();

 private:
  std::deque<Parameter> params_;
};

class Tape;

/// Handle to a node recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Records operations in execution order; backward replays them in reverse.
/// A recording supports one backward pass, after which reset() is required.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);
  Var parameter(Parameter& param);

  Var record(Tensor value, std::vector<std::size_t> parents, BackwardFn backward);

  void backward(const Var& loss);
  void reset();

  const Tensor& value(std::size_t id) const {
    const auto& n = nodes_[id];
    return n.param ? n.param->value : n.value;
  }
  /// Gradient of the last backward pass; zeros for nodes it did not reach.
  Tensor grad(const Var& v) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Gradient accumulator for a parent inside a backward function, or
  /// nullptr when the parent does not track gradients.
  Tensor* grad_target(std::size_t id);
  const Tensor& incoming(std::size_t id) const { return nodes_[id].grad; }

  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    Parameter* param = nullptr;
  };
  std::vector<Node> nodes_;
  bool consumed_ = false;
};

}  // namespace simsr::ad
