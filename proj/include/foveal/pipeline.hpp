#pragma once

// The five pipeline stages driven by a RunConfig: synth, pretrain, train,
// eval and viz. Each stage reads and writes files under the output directory.

#include <fstream>
#include <iostream>
#include <ostream>

#include "foveal/checkpoint.hpp"
#include "foveal/config.hpp"
#include "foveal/data.hpp"
#include "foveal/eval.hpp"
#include "foveal/training.hpp"
#include "foveal/visual_core.hpp"

namespace foveal {

inline const std::vector<std::string>& core_keys() {
  static const std::vector<std::string> k = {"patch_size", "core_channels", "core_kernels", "first_conv_stride",
                                             "feature_dim"};
  return k;
}

inline const std::vector<std::string>& model_keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> v = core_keys();
    for (const char* s : {"glimpses", "resolutions", "base_fraction", "scale_factor", "deck1", "deck2", "fusion_width",
                          "location_embed", "context_hidden", "location_mode"})
      v.push_back(s);
    return v;
  }();
  return k;
}

struct RunPaths {
  fs::path out, data, pretrain_data, core_checkpoint, checkpoint;
};

inline RunPaths run_paths(const RunConfig& cfg) {
  RunPaths p;
  p.out = cfg.out_dir();
  p.data = cfg.path_or("data", p.out / "data");
  p.pretrain_data = cfg.path_or("pretrain_data", p.data / "pretrain");
  p.core_checkpoint = cfg.path_or("core_checkpoint", p.out / "core.ckpt");
  p.checkpoint = cfg.path_or("checkpoint", p.out / "model.ckpt");
  return p;
}

inline CoreConfig core_config_from(const RunConfig& cfg, std::size_t input_channels) {
  const auto channels = cfg.integer_list("core_channels");
  const auto kernels = cfg.integer_list("core_kernels");
  if (channels.size() != kernels.size())
    throw Error("core_channels lists " + std::to_string(channels.size()) + " layers but core_kernels lists " +
                std::to_string(kernels.size()));
  CoreConfig c;
  c.input_channels = input_channels;
  c.input_size = cfg.integer("patch_size");
  c.first_conv_stride = cfg.integer("first_conv_stride");
  c.feature_dim = cfg.integer("feature_dim");
  c.convs.clear();
  for (std::size_t i = 0; i < channels.size(); ++i) {
    if (kernels[i] % 2 == 0) throw Error("core kernels must be odd, got " + std::to_string(kernels[i]));
    c.convs.push_back({channels[i], kernels[i], 1, kernels[i] / 2, 2, 2});
  }
  c.validate();
  return c;
}

inline PatchLadder ladder_from(const RunConfig& cfg) {
  PatchLadder l;
  l.base_fraction = cfg.real("base_fraction");
  l.scale_factor = cfg.real("scale_factor");
  l.resolutions = cfg.resolutions("resolutions");
  l.out_size = cfg.integer("patch_size");
  l.validate();
  return l;
}

inline ModelConfig model_config_from(const RunConfig& cfg, std::size_t classes) {
  ModelConfig m;
  m.glimpses = cfg.integer("glimpses");
  m.ladder = ladder_from(cfg);
  m.deck1 = cfg.integer("deck1");
  m.deck2 = cfg.integer("deck2");
  m.fusion_width = cfg.integer("fusion_width");
  m.location_embed = cfg.integer("location_embed");
  m.context_hidden = cfg.integer("context_hidden");
  m.classes = classes;
  m.location_mode = cfg.str("location_mode") == "fixed_center" ? LocationMode::fixed_center : LocationMode::learned;
  m.validate();
  return m;
}

inline TrainConfig train_config_from(const RunConfig& cfg) {
  TrainConfig t;
  t.learning_rate = cfg.real("lr");
  t.momentum = cfg.real("momentum");
  t.sample_std = cfg.real("sigma");
  t.baseline_decay = cfg.real("baseline_decay");
  t.epochs = cfg.integer("epochs");
  t.batch_size = cfg.integer("batch");
  t.seed = cfg.integer("seed");
  t.mirror = cfg.boolean("mirror");
  t.validate();
  return t;
}

inline PretrainConfig pretrain_config_from(const RunConfig& cfg) {
  PretrainConfig p;
  p.learning_rate = cfg.real("pretrain_lr");
  p.momentum = cfg.real("pretrain_momentum");
  p.epochs = cfg.integer("pretrain_epochs");
  p.batch_size = cfg.integer("pretrain_batch");
  p.jitter = cfg.real("pretrain_jitter");
  if (!(p.learning_rate > 0.0)) throw Error("pretrain_lr must be positive");
  if (!(p.momentum >= 0.0 && p.momentum < 1.0)) throw Error("pretrain_momentum must lie in [0, 1)");
  if (p.batch_size == 0) throw Error("pretrain_batch must be positive");
  return p;
}

inline ClutterConfig clutter_from(const RunConfig& cfg, Placement placement) {
  ClutterConfig c;
  c.canvas = cfg.integer("canvas");
  c.clutter_count = cfg.integer("clutter_count");
  c.clutter_size = cfg.integer("clutter_size");
  c.placement = placement;
  return c;
}

// Throws if a recorded snapshot disagrees with `cfg` on any of `keys`.
inline void require_matching_keys(const std::string& snapshot, const RunConfig& cfg,
                                  const std::vector<std::string>& keys, const fs::path& source) {
  const auto recorded = parse_snapshot(snapshot);
  for (const auto& key : keys) {
    auto it = recorded.find(key);
    if (it == recorded.end()) continue;
    RunConfig probe;
    probe.set(key, it->second);
    const KeySpec* spec = find_key(key);
    bool same = false;
    if (spec->kind == KeyKind::real)
      same = probe.real(key) == cfg.real(key);
    else if (spec->kind == KeyKind::resolutions)
      same = resolutions_str(probe.resolutions(key)) == resolutions_str(cfg.resolutions(key));
    else
      same = probe.str(key) == cfg.str(key);
    if (!same)
      throw Error(source.string() + " was built with " + key + "=" + it->second + " but the config has " + key + "=" +
                  cfg.str(key));
  }
}

inline void echo_config(const RunConfig& cfg, const std::string& stage) {
  const fs::path out = cfg.out_dir();
  fs::create_directories(out);
  write_file(out / (stage + "_config.txt"), cfg.resolved());
}

// ---------------------------------------------------------------------------
// synth

namespace detail {

inline LabeledImageSet interleave(const LabeledImageSet& pool, const std::vector<std::vector<std::size_t>>& by_class,
                                  std::size_t from, std::size_t count) {
  LabeledImageSet out;
  out.class_names = numbered_classes(by_class.size());
  for (std::size_t i = from; i < from + count; ++i)
    for (std::size_t k = 0; k < by_class.size(); ++k) out.push(pool.images[by_class[k][i]], static_cast<int>(k));
  return out;
}

}  // namespace detail

inline void run_synth(const RunConfig& cfg, std::ostream& log) {
  const RunPaths paths = run_paths(cfg);
  echo_config(cfg, "synth");
  const std::size_t K = cfg.integer("classes");
  if (K < 2 || K > 10) throw Error("classes must lie in [2, 10], got " + std::to_string(K));
  const std::size_t n_train = cfg.integer("train_per_class"), n_test = cfg.integer("test_per_class"),
                    n_pre = cfg.integer("pretrain_per_class");
  if (!n_train || !n_test || !n_pre) throw Error("train_per_class, test_per_class and pretrain_per_class must be positive");
  Rng rng(cfg.integer("seed"));

  LabeledImageSet train_base, test_base, pre_base;
  const bool idx_images = !cfg.str("idx_images").empty(), idx_labels = !cfg.str("idx_labels").empty();
  if (idx_images != idx_labels) throw Error("idx_images and idx_labels must be given together");
  if (idx_images) {
    const LabeledImageSet pool = load_idx(cfg.str("idx_images"), cfg.str("idx_labels"));
    std::vector<std::vector<std::size_t>> by_class(K);
    for (std::size_t i = 0; i < pool.size(); ++i)
      if (static_cast<std::size_t>(pool.labels[i]) < K) by_class[pool.labels[i]].push_back(i);
    for (std::size_t k = 0; k < K; ++k) {
      if (by_class[k].size() < n_train + n_test + n_pre)
        throw Error("IDX file has " + std::to_string(by_class[k].size()) + " digits of class " + std::to_string(k) +
                    ", need " + std::to_string(n_train + n_test + n_pre));
      shuffle_indices(by_class[k], rng);
    }
    train_base = detail::interleave(pool, by_class, 0, n_train);
    test_base = detail::interleave(pool, by_class, n_train, n_test);
    pre_base = detail::interleave(pool, by_class, n_train + n_test, n_pre);
  } else {
    const std::size_t size = cfg.integer("digit_size");
    train_base = synth_digits(n_train, rng, size, K);
    test_base = synth_digits(n_test, rng, size, K);
    pre_base = synth_digits(n_pre, rng, size, K);
  }

  const auto write = [&](const char* name, const LabeledImageSet& base, Placement placement) {
    const LabeledImageSet set = synth_cluttered(base, clutter_from(cfg, placement), rng);
    fs::remove_all(paths.data / name);
    save_image_dir(paths.data / name, set);
    log << "synth: wrote " << set.size() << " images to " << (paths.data / name).string() << '\n';
  };
  write("train", train_base, Placement::random);
  write("test", test_base, Placement::random);
  write("pretrain", pre_base, Placement::center);
}

// ---------------------------------------------------------------------------
// pretrain

inline void run_pretrain(const RunConfig& cfg, std::ostream& log) {
  const RunPaths paths = run_paths(cfg);
  echo_config(cfg, "pretrain");
  const LabeledImageSet data = load_image_dir(paths.pretrain_data);
  const PretrainConfig pcfg = pretrain_config_from(cfg);
  Rng rng(cfg.integer("seed"));
  VisualCore core(core_config_from(cfg, data.images.front().dim(0)), rng);
  MultiHeadPretrainer trainer(core, data.class_count(), rng);

  std::ofstream csv(paths.out / "pretrain_log.csv", std::ios::binary | std::ios::trunc);
  csv.precision(17);
  pretrain_core(trainer, data, pcfg, rng, [&](const PretrainEpochStats& s) {
    csv << s.epoch << ',' << s.mean_total_loss;
    for (double a : s.head_accuracy) csv << ',' << a;
    csv << '\n' << std::flush;
    log << "pretrain: epoch " << s.epoch << " loss " << s.mean_total_loss << " heads high/medium/low/all "
        << s.head_accuracy[0] << '/' << s.head_accuracy[1] << '/' << s.head_accuracy[2] << '/' << s.head_accuracy[3]
        << '\n';
  });

  Checkpoint ck;
  ck.config = cfg.resolved(true);
  ck.epoch = pcfg.epochs;
  ck.rng_state = rng.state();
  ck.put_all(core.params());
  ck.put_all(trainer.heads());
  fs::create_directories(paths.core_checkpoint.parent_path().empty() ? "." : paths.core_checkpoint.parent_path());
  save_checkpoint(paths.core_checkpoint, ck);
  log << "pretrain: wrote " << paths.core_checkpoint.string() << '\n';
}

// ---------------------------------------------------------------------------
// train

namespace detail {

inline std::size_t input_channels_of(const Checkpoint& ck) { return ck.get("core.conv0.k").dim(1); }

inline Checkpoint model_checkpoint(const RunConfig& cfg, const AttentionModel& model, const Sgd& opt,
                                   const RewardBaseline& baseline, const Rng& rng, std::size_t epoch) {
  Checkpoint ck;
  ck.config = cfg.resolved(true);
  ck.epoch = epoch;
  ck.rng_state = rng.state();
  ck.put_all(model.core().params());
  ck.put_all(model.params());
  for (const auto& [name, v] : opt.velocity()) ck.put("opt.velocity." + name, v);
  Tensor b({1});
  b[0] = baseline.value;
  ck.put("train.baseline", b);
  return ck;
}

// Keeps the first `lines` lines of a log file.
inline void truncate_lines(const fs::path& path, std::size_t lines) {
  std::string kept;
  if (fs::exists(path)) {
    std::istringstream in(read_file(path));
    std::string line;
    for (std::size_t n = 0; n < lines && std::getline(in, line); ++n) kept += line + '\n';
  }
  write_file(path, kept);
}

}  // namespace detail

// A frozen core restored from `ck`, wrapped in an attention model with
// fresh parameters drawn from `rng`.
inline AttentionModel build_model(const RunConfig& cfg, const Checkpoint& core_ck, std::size_t classes, Rng& rng) {
  VisualCore core(core_config_from(cfg, detail::input_channels_of(core_ck)), rng);
  restore_parameters(core_ck, core.params());
  core.freeze();
  AttentionModel model(model_config_from(cfg, classes), core, rng);
  model.core().freeze();
  return model;
}

inline void run_train(const RunConfig& cfg, std::ostream& log) {
  const RunPaths paths = run_paths(cfg);
  echo_config(cfg, "train");
  const TrainConfig tcfg = train_config_from(cfg);
  LabeledImageSet train = load_image_dir(paths.data / "train"), val;
  const double val_fraction = cfg.real("val_fraction");
  if (val_fraction < 0.0 || val_fraction >= 1.0) throw Error("val_fraction must lie in [0, 1)");
  if (val_fraction > 0.0) std::tie(train, val) = split_train_val(train, 1.0 - val_fraction, tcfg.seed);

  const Checkpoint core_ck = load_checkpoint(paths.core_checkpoint);
  require_matching_keys(core_ck.config, cfg, core_keys(), paths.core_checkpoint);
  Rng rng(tcfg.seed);
  AttentionModel model = build_model(cfg, core_ck, train.class_count(), rng);
  Sgd opt(tcfg.learning_rate, tcfg.momentum);
  RewardBaseline baseline{0.0, tcfg.baseline_decay};
  std::size_t done = 0;

  const fs::path log_path = paths.out / "train_log.csv", val_path = paths.out / "val_log.csv";
  if (cfg.boolean("resume") && fs::exists(paths.checkpoint)) {
    const Checkpoint ck = load_checkpoint(paths.checkpoint);
    std::vector<std::string> keys;
    for (const auto& k : config_keys())
      if (k.recorded && std::string(k.name) != "epochs") keys.push_back(k.name);
    require_matching_keys(ck.config, cfg, keys, paths.checkpoint);
    restore_parameters(ck, model.core().params());
    restore_parameters(ck, model.params());
    std::map<std::string, Tensor> velocity;
    for (const auto& name : ck.names_with_prefix("opt.velocity."))
      velocity[name.substr(std::string("opt.velocity.").size())] = ck.get(name);
    opt.set_velocity(std::move(velocity));
    baseline.value = ck.get("train.baseline")[0];
    rng.set_state(ck.rng_state);
    done = ck.epoch;
    log << "train: resumed from " << paths.checkpoint.string() << " after epoch " << done << '\n';
  }
  detail::truncate_lines(log_path, done);
  if (!val.size()) fs::remove(val_path);
  else detail::truncate_lines(val_path, done);

  for (std::size_t epoch = done + 1; epoch <= tcfg.epochs; ++epoch) {
    const EpochStats st = train_epoch(model, train, tcfg, opt, baseline, rng, epoch);
    {
      std::ofstream out(log_path, std::ios::binary | std::ios::app);
      write_epoch_line(out, st);
    }
    log << "train: epoch " << epoch << " loss " << st.mean_loss << " reward " << st.mean_reward << " train mA "
        << st.train_mA;
    if (val.size()) {
      const double mA = evaluate(model, val, cfg.integer("eval_seed")).report.mA;
      std::ofstream out(val_path, std::ios::binary | std::ios::app);
      out.precision(17);
      out << epoch << ',' << mA << '\n';
      log << " val mA " << mA;
    }
    log << '\n';
    save_checkpoint(paths.checkpoint, detail::model_checkpoint(cfg, model, opt, baseline, rng, epoch));
  }
  if (done >= tcfg.epochs) log << "train: checkpoint already holds " << done << " epochs\n";
}

// ---------------------------------------------------------------------------
// eval and viz

inline AttentionModel load_trained_model(const RunConfig& cfg, const fs::path& path) {
  const Checkpoint ck = load_checkpoint(path);
  require_matching_keys(ck.config, cfg, model_keys(), path);
  Rng scratch(0);
  AttentionModel model = build_model(cfg, ck, ck.get("cls.b").dim(0), scratch);
  restore_parameters(ck, model.params());
  return model;
}

inline LabeledImageSet load_test_set(const RunConfig& cfg, const AttentionModel& model) {
  LabeledImageSet test = load_image_dir(run_paths(cfg).data / "test");
  if (test.class_count() != model.config().classes)
    throw Error("test set has " + std::to_string(test.class_count()) + " classes but the model predicts " +
                std::to_string(model.config().classes));
  return test;
}

inline EvalReport run_eval(const RunConfig& cfg, std::ostream& log) {
  const RunPaths paths = run_paths(cfg);
  echo_config(cfg, "eval");
  const AttentionModel model = load_trained_model(cfg, paths.checkpoint);
  const LabeledImageSet test = load_test_set(cfg, model);
  EvalReport report = evaluate(model, test, cfg.integer("eval_seed")).report;
  report.class_names = test.class_names;
  report.config_echo = cfg.resolved();
  std::ostringstream text;
  write_report(text, report);
  write_file(paths.out / "eval_report.txt", text.str());
  log << "eval: mA " << report.mA << " over " << report.n_evaluated << " images, report in "
      << (paths.out / "eval_report.txt").string() << '\n';
  return report;
}

inline void run_viz(const RunConfig& cfg, std::ostream& log) {
  const RunPaths paths = run_paths(cfg);
  echo_config(cfg, "viz");
  const AttentionModel model = load_trained_model(cfg, paths.checkpoint);
  const LabeledImageSet test = load_test_set(cfg, model);
  const fs::path dir = paths.out / "viz";
  fs::create_directories(dir);
  const std::size_t n = std::min<std::size_t>(cfg.integer("viz_count"), test.size());
  for (std::size_t i = 0; i < n; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "%04zu", i);
    const Episode ep = evaluate_one(model, test.images[i], cfg.integer("eval_seed"), i);
    emit_visuals(test.images[i], ep, ep.scores.predicted() == test.labels[i], dir, id);
    std::ostringstream trace;
    write_trace_csv(trace, ep);
    write_file(dir / (std::string(id) + "_trace.csv"), trace.str());
  }
  log << "viz: rendered " << n << " images into " << dir.string() << '\n';
}

}  // namespace foveal
