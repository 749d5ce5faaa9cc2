#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

#include "foveal/pipeline.hpp"

using namespace foveal;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("foveal_pipe_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

RunConfig micro_config(const fs::path& out, std::vector<std::string> extra = {}) {
  std::vector<std::string> o = {"out=" + out.string(), "classes=3", "train_per_class=8", "test_per_class=4",
                                "pretrain_per_class=6", "canvas=40", "clutter_count=2", "clutter_size=6",
                                "digit_size=14", "patch_size=12", "core_channels=4,6", "core_kernels=3,3",
                                "feature_dim=8", "deck1=12", "deck2=10", "fusion_width=12", "location_embed=6",
                                "context_hidden=8", "glimpses=2", "epochs=3", "batch=4", "pretrain_epochs=2",
                                "viz_count=2"};
  o.insert(o.end(), extra.begin(), extra.end());
  return parse_config({}, o);
}

// A corpus and pretrained core shared by runs that point at them.
void prepare(const RunConfig& cfg) {
  std::ostringstream log;
  run_synth(cfg, log);
  run_pretrain(cfg, log);
}

int run_cli(const std::string& args, const fs::path& capture) {
  const std::string cmd = std::string(FOVEAL_CLI) + " " + args + " > " + capture.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Pipeline, MicroCorpusEndToEnd) {
  TempDir dir;
  const RunConfig cfg = micro_config(dir.path);
  std::ostringstream log;
  prepare(cfg);
  run_train(cfg, log);
  const EvalReport report = run_eval(cfg, log);
  run_viz(cfg, log);
  EXPECT_EQ(report.n_evaluated, 12u);
  EXPECT_EQ(load_image_dir(dir.path / "data" / "train").size(), 24u);
  EXPECT_EQ(load_image_dir(dir.path / "data" / "pretrain").size(), 18u);
  for (const char* f : {"core.ckpt", "model.ckpt", "train_log.csv", "pretrain_log.csv", "eval_report.txt",
                        "synth_config.txt", "train_config.txt", "eval_config.txt", "viz/0001_overlay.ppm",
                        "viz/0001_glimpse2.ppm", "viz/0000_trace.csv"})
    EXPECT_TRUE(fs::exists(dir.path / f)) << f;
  EXPECT_EQ(parse_config(dir.path / "train_config.txt", {}), cfg);
  const std::string text = read_file(dir.path / "eval_report.txt");
  EXPECT_EQ(text.rfind("0,4,", 0), 0u);
  EXPECT_NE(text.find("\nmA,"), std::string::npos);
  std::istringstream lines(read_file(dir.path / "train_log.csv"));
  std::string line;
  std::size_t n = 0;
  while (std::getline(lines, line)) EXPECT_EQ(line.rfind(std::to_string(++n) + ",", 0), 0u) << line;
  EXPECT_EQ(n, 3u);
}

TEST(Pipeline, IdenticalConfigsGiveIdenticalBytes) {
  TempDir dir;
  const RunConfig a = micro_config(dir.path / "a");
  prepare(a);
  const RunConfig b = micro_config(dir.path / "b", {"data=" + (dir.path / "a" / "data").string(),
                                                    "core_checkpoint=" + (dir.path / "a" / "core.ckpt").string()});
  std::ostringstream log;
  run_train(a, log);
  run_train(b, log);
  EXPECT_EQ(read_file(dir.path / "a" / "model.ckpt"), read_file(dir.path / "b" / "model.ckpt"));
  run_eval(a, log);
  run_eval(b, log);
  EXPECT_EQ(read_file(dir.path / "a" / "eval_report.txt"), read_file(dir.path / "b" / "eval_report.txt"));
}

TEST(Pipeline, ResumeMatchesUninterruptedRun) {
  TempDir dir;
  const RunConfig full = micro_config(dir.path / "full");
  prepare(full);
  std::ostringstream log;
  run_train(full, log);
  const std::vector<std::string> shared = {"data=" + (dir.path / "full" / "data").string(),
                                           "core_checkpoint=" + (dir.path / "full" / "core.ckpt").string()};
  auto part = shared;
  part.push_back("epochs=1");
  run_train(micro_config(dir.path / "split", part), log);
  auto rest = shared;
  rest.push_back("resume=true");
  run_train(micro_config(dir.path / "split", rest), log);
  EXPECT_EQ(read_file(dir.path / "full" / "model.ckpt"), read_file(dir.path / "split" / "model.ckpt"));
  EXPECT_EQ(read_file(dir.path / "full" / "train_log.csv"), read_file(dir.path / "split" / "train_log.csv"));
}

TEST(Pipeline, ResumeRefusesChangedSettings) {
  TempDir dir;
  const RunConfig cfg = micro_config(dir.path, {"epochs=1"});
  prepare(cfg);
  std::ostringstream log;
  run_train(cfg, log);
  EXPECT_THROW(run_train(micro_config(dir.path, {"epochs=2", "resume=true", "lr=0.02"}), log), Error);
}

TEST(Pipeline, TrainingLeavesTheCoreUntouched) {
  TempDir dir;
  const RunConfig cfg = micro_config(dir.path);
  prepare(cfg);
  std::ostringstream log;
  run_train(cfg, log);
  const Checkpoint core = load_checkpoint(dir.path / "core.ckpt");
  const Checkpoint model = load_checkpoint(dir.path / "model.ckpt");
  const auto names = core.names_with_prefix("core.");
  ASSERT_FALSE(names.empty());
  for (const auto& n : names) {
    const auto a = core.get(n).data(), b = model.get(n).data();
    EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin(), b.end())) << n;
  }
}

TEST(Pipeline, MissingInputsNameTheFile) {
  TempDir dir;
  const RunConfig cfg = micro_config(dir.path);
  std::ostringstream log;
  try {
    run_eval(cfg, log);
    FAIL() << "eval without a checkpoint succeeded";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find((dir.path / "model.ckpt").string()), std::string::npos) << e.what();
  }
  run_synth(cfg, log);
  try {
    run_train(cfg, log);
    FAIL() << "train without a core checkpoint succeeded";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("core.ckpt"), std::string::npos) << e.what();
  }
  EXPECT_THROW(run_synth(micro_config(dir.path, {"idx_images=/x"}), log), Error);
}

TEST(Pipeline, InconsistentArchitectureRejected) {
  TempDir dir;
  const RunConfig cfg = micro_config(dir.path, {"epochs=1"});
  prepare(cfg);
  std::ostringstream log;
  EXPECT_THROW(run_train(micro_config(dir.path, {"feature_dim=9"}), log), Error);
  run_train(cfg, log);
  try {
    run_eval(micro_config(dir.path, {"resolutions=high"}), log);
    FAIL() << "eval with a different resolution set succeeded";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("resolutions"), std::string::npos) << e.what();
  }
}

TEST(Pipeline, ConfigTranslation) {
  const RunConfig cfg = parse_config({}, {"core_channels=4,6", "core_kernels=5,3", "patch_size=20", "sigma=0.3",
                                          "resolutions=high,low", "location_mode=fixed_center"});
  const CoreConfig core = core_config_from(cfg, 3);
  EXPECT_EQ(core.input_channels, 3u);
  EXPECT_EQ(core.convs[0].padding, 2u);
  EXPECT_EQ(core.convs[1].channels, 6u);
  const ModelConfig m = model_config_from(cfg, 5);
  EXPECT_EQ(m.ladder.resolutions, (std::vector<Resolution>{Resolution::high, Resolution::low}));
  EXPECT_EQ(m.location_mode, LocationMode::fixed_center);
  EXPECT_EQ(train_config_from(cfg).sample_std, 0.3);
  EXPECT_THROW(core_config_from(parse_config({}, {"core_kernels=4,3"}), 1), Error);
  EXPECT_THROW(core_config_from(parse_config({}, {"core_kernels=3"}), 1), Error);
}

TEST(Cli, ExitCodesAndDiagnostics) {
  TempDir dir;
  fs::create_directories(dir.path);
  const fs::path capture = dir.path / "out.txt";
  EXPECT_EQ(run_cli("eval out=" + dir.path.string(), capture), 1);
  const std::string msg = read_file(capture);
  EXPECT_NE(msg.find("model.ckpt"), std::string::npos) << msg;
  EXPECT_EQ(std::count(msg.begin(), msg.end(), '\n'), 1) << msg;
  EXPECT_EQ(run_cli("eval foo=1", capture), 1);
  EXPECT_NE(read_file(capture).find("'foo'"), std::string::npos);
  EXPECT_NE(run_cli("bogus", capture), 0);
  EXPECT_EQ(run_cli("--help", capture), 0);
  EXPECT_NE(read_file(capture).find("baseline_decay"), std::string::npos);
}

TEST(Cli, MicroPipelineThroughTheBinary) {
  TempDir dir;
  const fs::path capture = dir.path / "log.txt";
  fs::create_directories(dir.path);
  std::string args;
  const RunConfig cfg = micro_config(dir.path);
  for (const auto& [k, v] : cfg.values())
    if (!v.empty()) args += " '" + k + "=" + v + "'";
  for (const char* stage : {"synth", "pretrain", "train", "eval", "viz"})
    ASSERT_EQ(run_cli(std::string(stage) + args, capture), 0) << stage << ": " << read_file(capture);
  EXPECT_TRUE(fs::exists(dir.path / "eval_report.txt"));
  EXPECT_TRUE(fs::exists(dir.path / "viz" / "0000_composite.ppm"));
}
