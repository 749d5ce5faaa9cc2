#pragma once

// Double-deck recurrent attention classifier.
//
//   context --ctx net--> r2_0            r1_0 = 0
//   l_hat_0 = tanh(W_emit r2_0 + b_emit)
//   for n = 1..N:
//     l_n    = policy(l_hat_{n-1})                    (greedy, sampled, forced)
//     x_n    = glimpse pixels at l_n                  (constants: no gradient)
//     fused  = relu(W_fuse [G_image(x_n); G_loc(l_n)] + b_fuse)
//     r1_n   = relu(W_in fused + W_11 r1_{n-1} + b_1)   bottom deck
//     r2_n   = relu(W_21 r1_n  + W_22 r2_{n-1} + b_2)   top deck
//     l_hat_n = tanh(W_emit r2_n + b_emit)             (n < N only)
//   logits = W_cls r1_N + b_cls
//
// The context reaches the classifier only through the locations it emits.

#include <iomanip>
#include <ostream>
#include <string>
#include <vector>

#include "foveal/glimpse.hpp"
#include "foveal/ops.hpp"
#include "foveal/visual_core.hpp"

namespace foveal {

enum class LocationMode { learned, fixed_center };

struct ModelConfig {
  std::size_t glimpses = 3;
  PatchLadder ladder{};
  std::size_t deck1 = 256;
  std::size_t deck2 = 256;
  std::size_t fusion_width = 256;
  std::size_t location_embed = 128;
  std::size_t context_hidden = 128;
  std::size_t classes = 10;
  LocationMode location_mode = LocationMode::learned;

  void validate() const {
    if (glimpses < 1) throw Error("model needs at least one glimpse");
    if (classes < 2) throw Error("model needs at least two classes");
    if (!deck1 || !deck2 || !fusion_width || !location_embed || !context_hidden)
      throw Error("model layer widths must be positive");
    ladder.validate();
  }
};

struct EpisodeState {
  NodeId r1 = 0;
  NodeId r2 = 0;
  std::size_t step = 0;
};

struct ClassScores {
  NodeId logits_node = 0;
  Tensor logits;         // K
  Tensor probabilities;  // K

  int predicted() const {
    std::size_t best = 0;
    for (std::size_t k = 1; k < logits.size(); ++k)
      if (logits[k] > logits[best]) best = k;
    return static_cast<int>(best);
  }
};

enum class PolicyKind { greedy, sampled, forced };

struct LocationPolicy {
  PolicyKind kind = PolicyKind::greedy;
  double sigma = 0.0;
  std::vector<Location> forced;

  static LocationPolicy greedy() { return {}; }
  static LocationPolicy sampled(double sigma) { return {PolicyKind::sampled, sigma, {}}; }
  static LocationPolicy forced_sequence(std::vector<Location> locs) {
    return {PolicyKind::forced, 0.0, std::move(locs)};
  }
};

struct LocationSample {
  Location raw;      // before clamping
  Location clamped;  // what the glimpse uses
  double log_density = 0.0;
};

// l = clamp(l_hat + eps), eps ~ N(0, sigma^2 I). The log-density is that of
// the unclamped Gaussian at the raw sample.
inline LocationSample sample_location(Location estimate, double sigma, Rng& rng) {
  if (!(sigma >= 0.0)) throw Error("sample standard deviation must be non-negative");
  if (sigma == 0.0) return {estimate, estimate.clamped(), 0.0};
  LocationSample s;
  s.raw = {estimate.row + sigma * rng.normal(), estimate.col + sigma * rng.normal()};
  s.clamped = s.raw.clamped();
  const double dr = s.raw.row - estimate.row, dc = s.raw.col - estimate.col;
  s.log_density = -(dr * dr + dc * dc) / (2.0 * sigma * sigma) - std::log(2.0 * std::numbers::pi * sigma * sigma);
  return s;
}

struct StepTrace {
  Location estimate;  // l_hat the location was drawn from
  LocationSample sample;
  NodeId estimate_node = 0;
  GlimpseBundle glimpse;
};

struct Episode {
  Graph graph;
  ContextPatch context;
  std::vector<StepTrace> steps;
  ClassScores scores;
  EpisodeState final_state;
  LocationPolicy policy;
};

class AttentionModel {
 public:
  AttentionModel(ModelConfig config, VisualCore core, Rng& rng) : config_(std::move(config)), core_(std::move(core)) {
    config_.validate();
    if (core_.config().input_size != config_.ladder.out_size)
      throw Error("visual core input size " + std::to_string(core_.config().input_size) +
                  " does not match glimpse size " + std::to_string(config_.ladder.out_size));
    const std::size_t C = core_.config().input_channels, S = config_.ladder.out_size;
    const std::size_t F = core_.feature_dim() * config_.ladder.resolutions.size();
    auto dense = [&](const std::string& name, std::size_t in, std::size_t out, bool bias = true) {
      params_.add(name + ".w", glorot_uniform({in, out}, in, out, rng));
      if (bias) params_.add(name + ".b", Tensor({out}));
    };
    // Recurrent weights start at the identity and the r1 -> r2 link at zero, so
    // each deck initially carries its state forward unchanged and every glimpse
    // starts where the first one looked.
    auto recurrent = [&](const std::string& name, std::size_t n) {
      Tensor w({n, n});
      for (std::size_t i = 0; i < n; ++i) w(i, i) = 1.0;
      params_.add(name + ".w", std::move(w));
    };
    dense("ctx.fc0", C * S * S, config_.context_hidden);
    dense("ctx.fc1", config_.context_hidden, config_.deck2);
    dense("loc", 2, config_.location_embed);
    dense("fuse", F + config_.location_embed, config_.fusion_width);
    dense("deck1.in", config_.fusion_width, config_.deck1);
    recurrent("deck1.rec", config_.deck1);
    params_.add("deck2.up.w", Tensor({config_.deck1, config_.deck2}));
    params_.add("deck2.up.b", Tensor({config_.deck2}));
    recurrent("deck2.rec", config_.deck2);
    dense("emit", config_.deck2, 2);
    dense("cls", config_.deck1, config_.classes);
  }

  const ModelConfig& config() const { return config_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  // Context network, location deck and emission head: the parameters that
  // exist only to choose where to look.
  static bool is_location_parameter(const std::string& name) {
    return name.starts_with("ctx.") || name.starts_with("deck2.") || name.starts_with("emit.");
  }

  VisualCore& core() { return core_; }
  const VisualCore& core() const { return core_; }

  // Context network into the top deck; the bottom deck starts at zero.
  EpisodeState init_episode(Graph& g, const Tensor& context_patch) const {
    const std::size_t C = core_.config().input_channels, S = config_.ladder.out_size;
    if (context_patch.shape() != Shape{C, S, S})
      throw Error("context patch must be " + shape_str({C, S, S}) + ", got " + shape_str(context_patch.shape()));
    const NodeId x = g.constant(context_patch.reshaped({1, C * S * S}));
    const NodeId h = dense(g, "ctx.fc0", x, Activation::relu);
    EpisodeState st;
    st.r2 = dense(g, "ctx.fc1", h, Activation::relu);
    st.r1 = g.constant(Tensor({1, config_.deck1}));
    return st;
  }

  // relu(W_fuse [features; relu(W_loc l + b_loc)] + b_fuse); loc is 1 x 2.
  NodeId fuse_glimpse_location(Graph& g, const TowerFeatures& features, NodeId loc) const {
    const NodeId embed = dense(g, "loc", loc, Activation::relu);
    const NodeId joined = concat(g, {features.concatenated, embed}, 1);
    return dense(g, "fuse", joined, Activation::relu);
  }

  EpisodeState step(Graph& g, const EpisodeState& st, NodeId fused) const {
    EpisodeState next;
    const NodeId in1 = add(g, fully_connected(g, fused, param(g, "deck1.in.w"), param(g, "deck1.in.b")),
                           fully_connected(g, st.r1, param(g, "deck1.rec.w")));
    next.r1 = activation(g, in1, Activation::relu);
    const NodeId in2 = add(g, fully_connected(g, next.r1, param(g, "deck2.up.w"), param(g, "deck2.up.b")),
                           fully_connected(g, st.r2, param(g, "deck2.rec.w")));
    next.r2 = activation(g, in2, Activation::relu);
    next.step = st.step + 1;
    return next;
  }

  // 1 x 2 location estimate in (-1, 1)^2.
  NodeId emit_location(Graph& g, const EpisodeState& st) const {
    return dense(g, "emit", st.r2, Activation::tanh);
  }

  ClassScores classify(Graph& g, const EpisodeState& st) const {
    if (st.step != config_.glimpses)
      throw Error("classify called after " + std::to_string(st.step) + " of " + std::to_string(config_.glimpses) +
                  " glimpses");
    ClassScores s;
    s.logits_node = fully_connected(g, st.r1, param(g, "cls.w"), param(g, "cls.b"));
    s.logits = g.value(s.logits_node).reshaped({config_.classes});
    s.probabilities = softmax_rows(g.value(s.logits_node)).reshaped({config_.classes});
    return s;
  }

  Episode forward_episode(const Tensor& image, ContextMode context_mode, const LocationPolicy& policy,
                          Rng& rng) const {
    ContextPatch context = build_context(image, context_mode, config_.ladder.out_size, rng);
    return forward_with_context(image, std::move(context), policy, rng);
  }

  // Same pipeline with the context supplied by the caller.
  Episode forward_with_context(const Tensor& image, ContextPatch context, const LocationPolicy& policy,
                               Rng& rng) const {
    if (policy.kind == PolicyKind::forced && policy.forced.size() != config_.glimpses)
      throw Error("forced policy needs " + std::to_string(config_.glimpses) + " locations, got " +
                  std::to_string(policy.forced.size()));
    Episode ep;
    ep.policy = policy;
    Graph& g = ep.graph;
    const ValueRange range = value_range(image);
    ep.context = std::move(context);
    EpisodeState st = init_episode(g, ep.context.patch);
    NodeId estimate = emit_location(g, st);
    for (std::size_t n = 0; n < config_.glimpses; ++n) {
      StepTrace tr;
      tr.estimate_node = estimate;
      tr.estimate = as_location(g.value(estimate));
      NodeId loc_node;
      if (config_.location_mode == LocationMode::fixed_center) {
        tr.sample = {{0, 0}, {0, 0}, 0.0};
        loc_node = g.constant(Tensor({1, 2}));
      } else if (policy.kind == PolicyKind::forced) {
        const Location l = policy.forced[n].clamped();
        tr.sample = {policy.forced[n], l, 0.0};
        loc_node = g.constant(Tensor({1, 2}, {l.row, l.col}));
      } else if (policy.kind == PolicyKind::sampled && policy.sigma > 0.0) {
        tr.sample = sample_location(tr.estimate, policy.sigma, rng);
        const Tensor eps({1, 2}, {tr.sample.raw.row - tr.estimate.row, tr.sample.raw.col - tr.estimate.col});
        loc_node = clamp(g, add(g, estimate, g.constant(eps)), -1.0, 1.0);
      } else {
        tr.sample = {tr.estimate, tr.estimate.clamped(), 0.0};
        loc_node = clamp(g, estimate, -1.0, 1.0);
      }
      tr.glimpse = extract_glimpse(image, tr.sample.clamped, config_.ladder, rng, range);
      const TowerFeatures features = core_.towers_forward(g, tr.glimpse.patches);
      st = step(g, st, fuse_glimpse_location(g, features, loc_node));
      ep.steps.push_back(std::move(tr));
      if (n + 1 < config_.glimpses) estimate = emit_location(g, st);
    }
    ep.final_state = st;
    ep.scores = classify(g, st);
    return ep;
  }

  static Location as_location(const Tensor& t) { return {t[0], t[1]}; }

 private:
  NodeId param(Graph& g, const std::string& name) const { return g.parameter(params_.get(name)); }

  NodeId dense(Graph& g, const std::string& name, NodeId x, Activation act) const {
    return activation(g, fully_connected(g, x, param(g, name + ".w"), param(g, name + ".b")), act);
  }

  ModelConfig config_;
  VisualCore core_;
  ParameterSet params_;
};

// One row per glimpse: step, estimate, sampled location, then each box as
// center_row/center_col/side in source pixels.
inline void write_trace_csv(std::ostream& os, const Episode& ep) {
  if (ep.steps.empty()) throw Error("episode trace is empty");
  os << "step,lhat_row,lhat_col,l_row,l_col";
  for (Resolution r : ep.steps.front().glimpse.resolutions)
    os << ',' << to_string(r) << "_row," << to_string(r) << "_col," << to_string(r) << "_side";
  os << '\n';
  os << std::setprecision(17);
  for (std::size_t n = 0; n < ep.steps.size(); ++n) {
    const StepTrace& t = ep.steps[n];
    os << n + 1 << ',' << t.estimate.row << ',' << t.estimate.col << ',' << t.sample.clamped.row << ','
       << t.sample.clamped.col;
    for (const Box& b : t.glimpse.boxes) os << ',' << b.center_row << ',' << b.center_col << ',' << b.side;
    os << '\n';
  }
}

}  // namespace foveal
