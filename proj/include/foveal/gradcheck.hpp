#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "foveal/graph.hpp"

namespace foveal {

// Builds a fresh graph and returns its scalar loss node.
using LossBuilder = std::function<NodeId(Graph&)>;

inline double evaluate_loss(const LossBuilder& build) {
  Graph g;
  return g.value(build(g))[0];
}

// Gradient of the loss w.r.t. one parameter, leaving its accumulator as it was.
inline Tensor analytic_gradient(const LossBuilder& build, const ParamPtr& param) {
  const Tensor saved = param->grad;
  const bool frozen = param->frozen;
  param->frozen = false;
  param->grad.fill(0.0);
  Graph g;
  g.backward(build(g));
  Tensor out = param->grad;
  param->grad = saved;
  param->frozen = frozen;
  return out;
}

// Central differences, one entry at a time.
inline Tensor numeric_gradient(const LossBuilder& build, const ParamPtr& param, double h) {
  if (!(h > 0.0)) throw Error("finite difference step must be positive");
  Tensor out = Tensor::zeros_like(param->value);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double original = param->value[i];
    param->value[i] = original + h;
    const double up = evaluate_loss(build);
    param->value[i] = original - h;
    const double down = evaluate_loss(build);
    param->value[i] = original;
    out[i] = (up - down) / (2.0 * h);
  }
  return out;
}

// max_i |a_i - n_i| / max(1e-8, |a_i| + |n_i|)
inline double max_relative_error(const Tensor& analytic, const Tensor& numeric) {
  analytic.require_same_shape(numeric, "max_relative_error");
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i], n = numeric[i];
    worst = std::max(worst, std::abs(a - n) / std::max(1e-8, std::abs(a) + std::abs(n)));
  }
  return worst;
}

inline double finite_diff_check(const LossBuilder& build, const ParamPtr& param, double h = 1e-5) {
  return max_relative_error(analytic_gradient(build, param), numeric_gradient(build, param, h));
}

// Worst error over every parameter of a set.
inline double finite_diff_check(const LossBuilder& build, const ParameterSet& params,
                                double h = 1e-5) {
  double worst = 0.0;
  for (const auto& p : params.all()) worst = std::max(worst, finite_diff_check(build, p, h));
  return worst;
}

}  // namespace foveal
