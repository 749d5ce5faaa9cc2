#pragma once

// Convolutional glimpse feature extractor. One parameter set serves every
// resolution "tower"; pretraining attaches softmax heads to each single tower
// and to the concatenation of all three.

#include <array>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "foveal/dataset.hpp"
#include "foveal/glimpse.hpp"
#include "foveal/ops.hpp"
#include "foveal/optim.hpp"

namespace foveal {

struct ConvLayerSpec {
  std::size_t channels = 16;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 1;
  std::size_t pool_window = 2;  // 0 disables pooling
  std::size_t pool_stride = 2;
};

struct CoreConfig {
  std::size_t input_channels = 1;
  std::size_t input_size = 96;
  std::size_t first_conv_stride = 1;
  std::vector<ConvLayerSpec> convs{{16, 7, 1, 3, 2, 2}, {32, 3, 1, 1, 2, 2}};
  std::vector<std::size_t> hidden_fc{};
  std::size_t feature_dim = 128;

  // Spatial side after each conv(+pool) stage; throws if any collapses.
  std::vector<std::size_t> spatial_sizes() const {
    if (convs.empty()) throw Error("core needs at least one convolution");
    if (first_conv_stride != 1 && first_conv_stride != 2)
      throw Error("first_conv_stride must be 1 or 2");
    std::vector<std::size_t> sizes;
    std::size_t s = input_size;
    for (std::size_t i = 0; i < convs.size(); ++i) {
      const auto& c = convs[i];
      const std::size_t stride = i == 0 ? first_conv_stride : c.stride;
      if (c.kernel > s + 2 * c.padding)
        throw Error("core conv " + std::to_string(i) + " kernel exceeds its " + std::to_string(s) + "px input");
      s = (s + 2 * c.padding - c.kernel) / stride + 1;
      if (c.pool_window) {
        if (c.pool_window > s)
          throw Error("core pool " + std::to_string(i) + " window exceeds its " + std::to_string(s) + "px input");
        s = (s - c.pool_window) / c.pool_stride + 1;
      }
      sizes.push_back(s);
    }
    return sizes;
  }

  std::size_t flattened_size() const { return spatial_sizes().back() * spatial_sizes().back() * convs.back().channels; }

  void validate() const {
    if (feature_dim == 0) throw Error("feature_dim must be positive");
    if (input_channels == 0) throw Error("input_channels must be positive");
    (void)spatial_sizes();
  }
};

struct TowerFeatures {
  std::vector<NodeId> towers;  // B x feature_dim each, ladder order
  NodeId concatenated = 0;     // B x (feature_dim * towers)
};

class VisualCore {
 public:
  VisualCore(CoreConfig config, Rng& rng) : config_(std::move(config)) {
    config_.validate();
    std::size_t in_ch = config_.input_channels;
    for (std::size_t i = 0; i < config_.convs.size(); ++i) {
      const auto& c = config_.convs[i];
      const std::size_t fan = in_ch * c.kernel * c.kernel;
      params_.add("core.conv" + std::to_string(i) + ".k",
                  glorot_uniform({c.channels, in_ch, c.kernel, c.kernel}, fan, c.channels * c.kernel * c.kernel, rng));
      params_.add("core.conv" + std::to_string(i) + ".b", Tensor({c.channels}));
      in_ch = c.channels;
    }
    std::size_t width = config_.flattened_size();
    std::vector<std::size_t> widths = config_.hidden_fc;
    widths.push_back(config_.feature_dim);
    for (std::size_t i = 0; i < widths.size(); ++i) {
      params_.add("core.fc" + std::to_string(i) + ".w", glorot_uniform({width, widths[i]}, width, widths[i], rng));
      params_.add("core.fc" + std::to_string(i) + ".b", Tensor({widths[i]}));
      width = widths[i];
    }
  }

  const CoreConfig& config() const { return config_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  // Marks every core parameter stop-gradient; forward values are unaffected.
  void freeze(bool frozen = true) { params_.freeze(frozen); }
  bool frozen() const { return params_.all_frozen(); }

  // B x C x S x S patches -> B x feature_dim features.
  NodeId tower(Graph& g, NodeId patches) const {
    const Tensor& x = g.value(patches);
    if (x.rank() != 4 || x.dim(1) != config_.input_channels || x.dim(2) != config_.input_size ||
        x.dim(3) != config_.input_size) {
      throw Error("visual core expects B x " + std::to_string(config_.input_channels) + " x " +
                  std::to_string(config_.input_size) + " x " + std::to_string(config_.input_size) +
                  " patches, got " + shape_str(x.shape()));
    }
    const std::size_t batch = x.dim(0);
    NodeId h = patches;
    for (std::size_t i = 0; i < config_.convs.size(); ++i) {
      const auto& c = config_.convs[i];
      const std::string name = "core.conv" + std::to_string(i);
      h = conv2d(g, h, g.parameter(params_.get(name + ".k")), i == 0 ? config_.first_conv_stride : c.stride,
                 c.padding, g.parameter(params_.get(name + ".b")));
      h = activation(g, h, Activation::relu);
      if (c.pool_window) h = pool(g, h, PoolKind::max, c.pool_window, c.pool_stride);
    }
    h = reshape(g, h, {batch, config_.flattened_size()});
    for (std::size_t i = 0; i <= config_.hidden_fc.size(); ++i) {
      const std::string name = "core.fc" + std::to_string(i);
      h = fully_connected(g, h, g.parameter(params_.get(name + ".w")), g.parameter(params_.get(name + ".b")));
      h = activation(g, h, Activation::relu);
    }
    return h;
  }

  // Runs the shared network on each resolution's patch and depth-concatenates.
  TowerFeatures towers_forward(Graph& g, const std::vector<NodeId>& patches) const {
    if (patches.empty()) throw Error("towers_forward needs at least one patch");
    TowerFeatures f;
    for (NodeId p : patches) f.towers.push_back(tower(g, p));
    f.concatenated = f.towers.size() == 1 ? f.towers[0] : concat(g, f.towers, 1);
    return f;
  }

  // Convenience for single patches of shape C x S x S.
  TowerFeatures towers_forward(Graph& g, const std::vector<Tensor>& patches) const {
    std::vector<NodeId> ids;
    for (const Tensor& p : patches) {
      if (p.rank() != 3) throw Error("patch must be C x S x S, got " + shape_str(p.shape()));
      ids.push_back(g.constant(p.reshaped({1, p.dim(0), p.dim(1), p.dim(2)})));
    }
    return towers_forward(g, ids);
  }

  std::size_t feature_dim() const { return config_.feature_dim; }

 private:
  CoreConfig config_;
  ParameterSet params_;
};

// Batched patches for all three resolutions: B x C x S x S each.
using PatchBatch = std::array<Tensor, 3>;

inline constexpr std::array<const char*, 4> kHeadNames = {"high", "medium", "low", "all"};

// Softmax heads on {high, medium, low, all-concatenated}; the training loss
// is the mean of the four cross-entropies.
class MultiHeadPretrainer {
 public:
  MultiHeadPretrainer(VisualCore& core, std::size_t classes, Rng& rng) : core_(&core), classes_(classes) {
    const std::size_t F = core.feature_dim();
    for (std::size_t h = 0; h < 4; ++h) {
      const std::size_t in = h == 3 ? 3 * F : F;
      heads_.add(std::string("head.") + kHeadNames[h] + ".w", glorot_uniform({in, classes}, in, classes, rng));
      heads_.add(std::string("head.") + kHeadNames[h] + ".b", Tensor({classes}));
    }
  }

  ParameterSet& heads() { return heads_; }
  const VisualCore& core() const { return *core_; }
  std::size_t classes() const { return classes_; }

  struct Losses {
    std::array<NodeId, 4> head_nodes{};
    std::array<double, 4> head{};
    std::array<Tensor, 4> probs;
    NodeId total_node = 0;
    double total = 0.0;
  };

  Losses loss(Graph& g, const PatchBatch& batch, std::span<const int> labels) const {
    for (const Tensor& t : batch)
      if (t.rank() != 4 || t.dim(0) != labels.size())
        throw Error("pretraining needs all three resolutions for every example");
    std::vector<NodeId> inputs;
    for (const Tensor& t : batch) inputs.push_back(g.constant(t));
    const TowerFeatures f = core_->towers_forward(g, inputs);
    Losses out;
    NodeId sum = 0;
    for (std::size_t h = 0; h < 4; ++h) {
      const NodeId feats = h == 3 ? f.concatenated : f.towers[h];
      const std::string name = std::string("head.") + kHeadNames[h];
      const NodeId logits = fully_connected(g, feats, g.parameter(heads_.get(name + ".w")),
                                            g.parameter(heads_.get(name + ".b")));
      auto ce = softmax_cross_entropy(g, logits, labels);
      out.head_nodes[h] = ce.loss;
      out.head[h] = g.value(ce.loss)[0];
      out.probs[h] = std::move(ce.probs);
      sum = h == 0 ? ce.loss : add(g, sum, ce.loss);
    }
    out.total_node = scale(g, sum, 0.25);
    out.total = g.value(out.total_node)[0];
    return out;
  }

  // One optimizer step on the shared core and all heads.
  Losses step(const PatchBatch& batch, std::span<const int> labels, Sgd& opt) {
    core_->params().zero_grad();
    heads_.zero_grad();
    Graph g;
    Losses l = loss(g, batch, labels);
    g.backward(l.total_node);
    opt.step(core_->params());
    opt.step(heads_);
    return l;
  }

 private:
  VisualCore* core_;
  std::size_t classes_;
  ParameterSet heads_;
};

// Patches for all three ladder levels around a jittered image centre.
inline PatchBatch make_pretrain_batch(const LabeledImageSet& data, std::span<const std::size_t> indices,
                                      std::size_t out_size, double jitter, Rng& rng) {
  PatchLadder ladder;
  ladder.out_size = out_size;
  const std::size_t C = data.images.at(indices[0]).dim(0);
  PatchBatch batch;
  for (auto& t : batch) t = Tensor({indices.size(), C, out_size, out_size});
  const std::size_t plane = C * out_size * out_size;
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const Tensor& img = data.images[indices[b]];
    const Location loc{rng.uniform(-jitter, jitter), rng.uniform(-jitter, jitter)};
    const GlimpseBundle g = extract_glimpse(img, loc, ladder, rng, value_range(img));
    for (std::size_t r = 0; r < 3; ++r)
      std::copy_n(g.patches[r].raw(), plane, batch[r].raw() + b * plane);
  }
  return batch;
}

struct PretrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::size_t epochs = 3;
  std::size_t batch_size = 16;
  double jitter = 0.1;
};

struct PretrainEpochStats {
  std::size_t epoch = 0;
  double mean_total_loss = 0.0;
  std::array<double, 4> head_accuracy{};  // on the epoch's training batches, pre-update
};

// Per-head accuracy of argmax predictions.
inline std::array<double, 4> head_accuracy(const MultiHeadPretrainer& trainer, const LabeledImageSet& data,
                                           std::size_t out_size, double jitter, Rng& rng,
                                           std::size_t batch_size = 32) {
  std::array<double, 4> correct{};
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, order.size() - start);
    std::span<const std::size_t> idx(order.data() + start, n);
    PatchBatch batch = make_pretrain_batch(data, idx, out_size, jitter, rng);
    std::vector<int> labels;
    for (std::size_t i : idx) labels.push_back(data.labels[i]);
    Graph g;
    auto l = trainer.loss(g, batch, labels);
    for (std::size_t h = 0; h < 4; ++h)
      for (std::size_t b = 0; b < n; ++b) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < trainer.classes(); ++k)
          if (l.probs[h](b, k) > l.probs[h](b, best)) best = k;
        correct[h] += static_cast<int>(best) == labels[b] ? 1.0 : 0.0;
      }
  }
  for (double& c : correct) c /= static_cast<double>(data.size());
  return correct;
}

inline std::vector<PretrainEpochStats> pretrain_core(
    MultiHeadPretrainer& trainer, const LabeledImageSet& data, const PretrainConfig& cfg, Rng& rng,
    const std::function<void(const PretrainEpochStats&)>& on_epoch = {}) {
  data.validate();
  if (data.size() == 0) throw Error("pretraining dataset is empty");
  Sgd opt(cfg.learning_rate, cfg.momentum);
  std::vector<PretrainEpochStats> stats;
  std::vector<std::size_t> order(data.size());
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    PretrainEpochStats st;
    st.epoch = epoch + 1;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, order.size() - start);
      std::span<const std::size_t> idx(order.data() + start, n);
      PatchBatch batch = make_pretrain_batch(data, idx, trainer.core().config().input_size, cfg.jitter, rng);
      std::vector<int> labels;
      for (std::size_t i : idx) labels.push_back(data.labels[i]);
      const auto losses = trainer.step(batch, labels, opt);
      st.mean_total_loss += losses.total;
      for (std::size_t h = 0; h < 4; ++h)
        for (std::size_t b = 0; b < n; ++b) {
          std::size_t best = 0;
          for (std::size_t k = 1; k < trainer.classes(); ++k)
            if (losses.probs[h](b, k) > losses.probs[h](b, best)) best = k;
          st.head_accuracy[h] += static_cast<int>(best) == labels[b] ? 1.0 : 0.0;
        }
      ++batches;
    }
    st.mean_total_loss /= static_cast<double>(batches);
    for (double& a : st.head_accuracy) a /= static_cast<double>(data.size());
    stats.push_back(st);
    if (on_epoch) on_epoch(st);
  }
  return stats;
}

}  // namespace foveal
