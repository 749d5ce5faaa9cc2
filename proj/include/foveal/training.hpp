#pragma once

// Hybrid training: cross-entropy backprop through the differentiable path plus
// a REINFORCE term for the location samples.

#include <functional>
#include <numeric>
#include <optional>
#include <ostream>

#include "foveal/attention.hpp"
#include "foveal/dataset.hpp"
#include "foveal/metrics.hpp"
#include "foveal/optim.hpp"

namespace foveal {

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  double sample_std = 0.1;
  double baseline_decay = 0.9;
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  std::uint64_t seed = 1;
  bool mirror = true;
  ContextMode context_mode = ContextMode::random;

  void validate() const {
    if (!(learning_rate > 0.0)) throw Error("learning rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw Error("momentum must lie in [0, 1)");
    if (!(sample_std > 0.0)) throw Error("sample standard deviation must be positive");
    if (!(baseline_decay >= 0.0 && baseline_decay <= 1.0)) throw Error("baseline decay must lie in [0, 1]");
    if (batch_size == 0) throw Error("batch size must be positive");
  }
};

// Exponential moving average of rewards.
struct RewardBaseline {
  double value = 0.0;
  double decay = 0.9;

  void update(double reward) { value = decay * value + (1.0 - decay) * reward; }
};

// 1 if the argmax (lowest index on ties) is the label.
inline double compute_reward(const ClassScores& scores, int label) {
  return scores.predicted() == label ? 1.0 : 0.0;
}

// Descent-direction gradient on l_hat: -(R - b) * (l - l_hat) / sigma^2.
inline Tensor reinforce_location_gradient(Location raw_sample, Location estimate, double advantage, double sigma) {
  if (!(sigma > 0.0)) throw Error("REINFORCE needs a positive sample standard deviation");
  const double s2 = sigma * sigma;
  return Tensor({1, 2}, {-advantage * (raw_sample.row - estimate.row) / s2,
                         -advantage * (raw_sample.col - estimate.col) / s2});
}

struct GradientTerms {
  bool backprop = true;
  bool reinforce = true;
};

struct HybridResult {
  double loss = 0.0;
  double reward = 0.0;
  double advantage = 0.0;
  int predicted = 0;
};

// Accumulates gradients into the model's parameters for one episode, then
// updates the baseline. `reward_override` replaces the 0/1 reward.
inline HybridResult hybrid_gradients(Episode& ep, const AttentionModel& model, int label, RewardBaseline& baseline,
                                     GradientTerms terms = {}, std::optional<double> reward_override = {}) {
  if (ep.steps.size() != model.config().glimpses)
    throw Error("episode has " + std::to_string(ep.steps.size()) + " steps but the model expects " +
                std::to_string(model.config().glimpses));
  Graph& g = ep.graph;
  for (const StepTrace& s : ep.steps)
    if (s.estimate_node >= g.size() || g.value(s.estimate_node).shape() != Shape{1, 2})
      throw Error("episode trace does not belong to this graph");
  if (ep.scores.logits.size() != model.config().classes)
    throw Error("episode scores have " + std::to_string(ep.scores.logits.size()) + " classes, model has " +
                std::to_string(model.config().classes));

  const std::vector<int> y{label};
  const CrossEntropy ce = softmax_cross_entropy(g, ep.scores.logits_node, y);
  HybridResult out;
  out.loss = g.value(ce.loss)[0];
  out.predicted = ep.scores.predicted();
  out.reward = reward_override ? *reward_override : compute_reward(ep.scores, label);
  out.advantage = out.reward - baseline.value;

  if (terms.backprop) g.backward(ce.loss);
  // The policy term trains the location pathway only; the classification
  // deck learns from cross-entropy alone.
  const bool sampled = ep.policy.kind == PolicyKind::sampled && ep.policy.sigma > 0.0 &&
                       model.config().location_mode == LocationMode::learned;
  if (terms.reinforce && sampled && out.advantage != 0.0) {
    for (const StepTrace& s : ep.steps)
      if (g.requires_grad(s.estimate_node))
        g.seed_gradient(s.estimate_node,
                        reinforce_location_gradient(s.sample.raw, s.estimate, out.advantage, ep.policy.sigma));
    g.backward([](const Parameter& p) { return AttentionModel::is_location_parameter(p.name); });
  }
  baseline.update(out.reward);
  return out;
}

inline Tensor mirror(const Tensor& image) {
  const std::size_t C = image.dim(0), H = image.dim(1), W = image.dim(2);
  Tensor out(image.shape());
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t r = 0; r < H; ++r)
      for (std::size_t x = 0; x < W; ++x) out(c, r, x) = image(c, r, W - 1 - x);
  return out;
}

// Reverses columns with probability 1/2 when enabled; one draw per call then.
inline Tensor mirror_augment(const Tensor& image, Rng& rng, bool enabled) {
  if (!enabled || rng.uniform() >= 0.5) return image;
  if (image.rank() != 3) throw Error("mirror_augment expects C x H x W, got " + shape_str(image.shape()));
  return mirror(image);
}

struct EpochStats {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double mean_reward = 0.0;
  double train_mA = 0.0;
};

inline void write_epoch_line(std::ostream& os, const EpochStats& s) {
  const auto old = os.precision(17);
  os << s.epoch << ',' << s.mean_loss << ',' << s.mean_reward << ',' << s.train_mA << '\n';
  os.precision(old);
}

inline void shuffle_indices(std::vector<std::size_t>& order, Rng& rng) {
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
}

// One pass over `data` in seeded shuffled order. Only the attention
// parameters move; the core must already be frozen.
inline EpochStats train_epoch(AttentionModel& model, const LabeledImageSet& data, const TrainConfig& cfg, Sgd& opt,
                              RewardBaseline& baseline, Rng& rng, std::size_t epoch = 1) {
  if (data.size() == 0) throw Error("training dataset is empty");
  if (!model.core().frozen()) throw Error("visual core must be frozen before attention training");
  if (data.class_count() != model.config().classes)
    throw Error("dataset has " + std::to_string(data.class_count()) + " classes, model has " +
                std::to_string(model.config().classes));
  if (cfg.batch_size == 0) throw Error("batch size must be positive");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  shuffle_indices(order, rng);

  EpochStats st;
  st.epoch = epoch;
  std::vector<int> predictions, labels;
  const auto policy = LocationPolicy::sampled(cfg.sample_std);
  for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
    const std::size_t n = std::min(cfg.batch_size, order.size() - start);
    model.params().zero_grad();
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t i = order[start + b];
      const Tensor image = mirror_augment(data.images[i], rng, cfg.mirror);
      Episode ep = model.forward_episode(image, cfg.context_mode, policy, rng);
      const HybridResult r = hybrid_gradients(ep, model, data.labels[i], baseline);
      st.mean_loss += r.loss;
      st.mean_reward += r.reward;
      predictions.push_back(r.predicted);
      labels.push_back(data.labels[i]);
    }
    opt.step(model.params(), 1.0 / static_cast<double>(n));
  }
  st.mean_loss /= static_cast<double>(data.size());
  st.mean_reward /= static_cast<double>(data.size());
  st.train_mA = mean_accuracy(predictions, labels, model.config().classes).mA;
  return st;
}

// Gaussian bandit: a free mean mu, reward -|l - target|^2, trained with the
// same REINFORCE estimator and an EMA baseline.
struct BanditResult {
  Location mean;
  std::size_t steps = 0;  // steps taken until |mu - target| < tolerance
  bool converged = false;
};

inline BanditResult run_gaussian_bandit(Location target, double sigma, double lr, std::size_t max_steps, Rng& rng,
                                        double tolerance = 0.05, Location start = {0.0, 0.0},
                                        double baseline_decay = 0.9) {
  BanditResult r;
  r.mean = start;
  RewardBaseline baseline{0.0, baseline_decay};
  bool primed = false;
  for (std::size_t t = 0; t < max_steps; ++t) {
    const LocationSample s = sample_location(r.mean, sigma, rng);
    const double dr = s.clamped.row - target.row, dc = s.clamped.col - target.col;
    const double reward = -(dr * dr + dc * dc);
    if (!primed) baseline.value = reward, primed = true;
    const Tensor grad = reinforce_location_gradient(s.raw, r.mean, reward - baseline.value, sigma);
    baseline.update(reward);
    r.mean.row -= lr * grad[0];
    r.mean.col -= lr * grad[1];
    r.steps = t + 1;
    if (std::hypot(r.mean.row - target.row, r.mean.col - target.col) < tolerance) {
      r.converged = true;
      break;
    }
  }
  return r;
}

}  // namespace foveal
