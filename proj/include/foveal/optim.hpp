#pragma once

#include <map>
#include <string>

#include "foveal/graph.hpp"

namespace foveal {

// SGD with heavy-ball momentum: v <- mu * v + g / batch; p <- p - lr * v.
// Frozen parameters are skipped entirely.
class Sgd {
 public:
  Sgd(double learning_rate, double momentum) : lr_(learning_rate), momentum_(momentum) {
    if (!(learning_rate >= 0.0)) throw Error("learning rate must be non-negative");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw Error("momentum must lie in [0, 1)");
  }

  void step(ParameterSet& params, double grad_scale = 1.0) {
    for (const auto& p : params.all()) {
      if (p->frozen) continue;
      auto it = velocity_.find(p->name);
      if (it == velocity_.end()) it = velocity_.emplace(p->name, Tensor::zeros_like(p->value)).first;
      Tensor& v = it->second;
      for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = momentum_ * v[i] + grad_scale * p->grad[i];
        p->value[i] -= lr_ * v[i];
      }
    }
  }

  double learning_rate() const { return lr_; }
  double momentum() const { return momentum_; }

  const std::map<std::string, Tensor>& velocity() const { return velocity_; }
  void set_velocity(std::map<std::string, Tensor> v) { velocity_ = std::move(v); }

 private:
  double lr_;
  double momentum_;
  std::map<std::string, Tensor> velocity_;
};

}  // namespace foveal
