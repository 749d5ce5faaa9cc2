#pragma once

// Small models and helpers shared by the unit tests and the acceptance runner.

#include <vector>

#include "foveal/attention.hpp"

namespace foveal::testing {

inline CoreConfig tiny_core_config(std::size_t size = 16, std::size_t feature_dim = 8) {
  CoreConfig c;
  c.input_size = size;
  c.convs = {{4, 3, 1, 1, 2, 2}, {6, 3, 1, 1, 2, 2}};
  c.feature_dim = feature_dim;
  return c;
}

inline ModelConfig tiny_model_config(std::size_t glimpses, std::vector<Resolution> res, std::size_t classes = 4,
                                     std::size_t size = 16) {
  ModelConfig m;
  m.glimpses = glimpses;
  m.ladder.resolutions = std::move(res);
  m.ladder.out_size = size;
  m.deck1 = 12;
  m.deck2 = 10;
  m.fusion_width = 12;
  m.location_embed = 6;
  m.context_hidden = 8;
  m.classes = classes;
  return m;
}

inline AttentionModel tiny_model(std::size_t glimpses, std::vector<Resolution> res, std::uint64_t seed,
                                 std::size_t classes = 4) {
  Rng rng(seed);
  VisualCore core(tiny_core_config(), rng);
  return AttentionModel(tiny_model_config(glimpses, std::move(res), classes), std::move(core), rng);
}

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = 0.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// The fully differentiable part of an episode: pixels are fixed inputs and
// each estimate feeds G_loc directly, so every parameter is reachable.
inline NodeId episode_loss(Graph& g, const AttentionModel& model, const Tensor& context,
                           const std::vector<std::vector<Tensor>>& patches, int label) {
  EpisodeState st = model.init_episode(g, context);
  NodeId estimate = model.emit_location(g, st);
  for (std::size_t n = 0; n < patches.size(); ++n) {
    const TowerFeatures f = model.core().towers_forward(g, patches[n]);
    st = model.step(g, st, model.fuse_glimpse_location(g, f, estimate));
    if (n + 1 < patches.size()) estimate = model.emit_location(g, st);
  }
  const ClassScores s = model.classify(g, st);
  const std::vector<int> y{label};
  return softmax_cross_entropy(g, s.logits_node, y).loss;
}

}  // namespace foveal::testing
