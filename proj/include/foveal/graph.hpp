#pragma once

// Tape-based reverse-mode differentiation. A Graph records every operation
// eagerly as it is applied; backward() sweeps the tape in reverse and
// accumulates into the Parameter gradients it reaches.

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "foveal/rng.hpp"
#include "foveal/tensor.hpp"

namespace foveal {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool frozen = false;
};

using ParamPtr = std::shared_ptr<Parameter>;

// Ordered, named collection of trainable tensors.
class ParameterSet {
 public:
  ParamPtr add(std::string name, Tensor init) {
    if (index_.count(name)) throw Error("duplicate parameter name '" + name + "'");
    auto p = std::make_shared<Parameter>();
    p->name = name;
    p->grad = Tensor::zeros_like(init);
    p->value = std::move(init);
    index_[name] = params_.size();
    params_.push_back(p);
    return p;
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  const ParamPtr& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("unknown parameter '" + name + "'");
    return params_[it->second];
  }

  const std::vector<ParamPtr>& all() const { return params_; }
  std::size_t size() const { return params_.size(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->value.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p->grad.fill(0.0);
  }

  void freeze(bool frozen = true) {
    for (auto& p : params_) p->frozen = frozen;
  }

  bool all_frozen() const {
    for (const auto& p : params_)
      if (!p->frozen) return false;
    return true;
  }

  std::uint64_t checksum() const {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& p : params_) h = foveal::checksum(p->value, h);
    return h;
  }

  // Deep copy: fresh storage, same names/values/flags.
  ParameterSet clone() const {
    ParameterSet out;
    for (const auto& p : params_) {
      auto q = out.add(p->name, p->value);
      q->grad = p->grad;
      q->frozen = p->frozen;
    }
    return out;
  }

 private:
  std::vector<ParamPtr> params_;
  std::map<std::string, std::size_t> index_;
};

// Uniform in +-sqrt(6 / (fan_in + fan_out)).
inline Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  Tensor t(std::move(shape));
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : t.data()) v = rng.uniform(-limit, limit);
  return t;
}

using NodeId = std::size_t;

class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, const Tensor& out_grad)>;

  NodeId constant(Tensor value) { return push("constant", std::move(value), {}, nullptr, false); }

  // Leaf that collects a gradient without being a Parameter.
  NodeId variable(Tensor value) { return push("variable", std::move(value), {}, nullptr, true); }

  NodeId parameter(const ParamPtr& p) {
    NodeId id = push("parameter", Tensor(), {}, nullptr, !p->frozen);
    nodes_[id].param = p;
    return id;
  }

  // Records an operation. The node requires a gradient iff any input does.
  NodeId record(std::string kind, Tensor value, std::vector<NodeId> inputs, BackwardFn fn) {
    bool needs = false;
    for (NodeId in : inputs) needs = needs || nodes_.at(in).requires_grad;
    return push(std::move(kind), std::move(value), std::move(inputs), std::move(fn), needs);
  }

  // Identity in the forward pass; blocks all upstream gradient.
  NodeId stop_gradient(NodeId x) {
    return push("stop_gradient", value(x), {x}, nullptr, false);
  }

  const Tensor& value(NodeId id) const {
    const Node& n = nodes_.at(id);
    return n.param ? n.param->value : n.value;
  }
  bool requires_grad(NodeId id) const { return nodes_.at(id).requires_grad; }
  const std::string& kind(NodeId id) const { return nodes_.at(id).kind; }
  const std::vector<NodeId>& inputs(NodeId id) const { return nodes_.at(id).inputs; }
  std::size_t size() const { return nodes_.size(); }

  // Gradient of the last backward sweep; zeros if the node was not reached.
  Tensor grad(NodeId id) const {
    const Node& n = nodes_.at(id);
    return n.grad.empty() ? Tensor::zeros_like(value(id)) : n.grad;
  }

  bool has_grad(NodeId id) const { return !nodes_.at(id).grad.empty(); }

  // Adds an upstream gradient at an arbitrary node for the next sweep.
  void seed_gradient(NodeId id, const Tensor& g) {
    value(id).require_same_shape(g, "seed_gradient");
    seeds_.emplace_back(id, g);
  }

  void backward(NodeId loss) {
    if (value(loss).size() != 1) {
      throw Error("backward requires a scalar loss, got shape " + shape_str(value(loss).shape()));
    }
    seed_gradient(loss, Tensor(value(loss).shape(), 1.0));
    backward();
  }

  // Sweeps using only the explicit seeds. When `accept` is given, only the
  // parameters it accepts accumulate gradient.
  void backward(const std::function<bool(const Parameter&)>& accept = {}) {
    for (auto& n : nodes_) n.grad = Tensor();
    for (auto& [id, g] : seeds_) {
      if (nodes_[id].requires_grad) slot(id) += g;
    }
    seeds_.clear();
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grad.empty() || !n.requires_grad) continue;
      if (n.backward) n.backward(*this, n.grad);
      if (n.param && !n.param->frozen && (!accept || accept(*n.param))) n.param->grad += n.grad;
    }
  }

  // Mutable gradient buffer for an input node, allocated on first use.
  Tensor& slot(NodeId id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = Tensor::zeros_like(value(id));
    return n.grad;
  }

 private:
  struct Node {
    std::string kind;
    Tensor value;
    Tensor grad;
    std::vector<NodeId> inputs;
    BackwardFn backward;
    ParamPtr param;
    bool requires_grad = false;
  };

  NodeId push(std::string kind, Tensor value, std::vector<NodeId> inputs, BackwardFn fn,
              bool requires_grad) {
    Node n;
    n.kind = std::move(kind);
    n.value = std::move(value);
    n.inputs = std::move(inputs);
    n.backward = std::move(fn);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
  }

  std::vector<Node> nodes_;
  std::vector<std::pair<NodeId, Tensor>> seeds_;
};

}  // namespace foveal
