#include <gtest/gtest.h>

#include <fstream>

#include "foveal/config.hpp"

using namespace foveal;

namespace {

struct TempFile {
  std::filesystem::path path;
  explicit TempFile(const std::string& text) {
    path = std::filesystem::temp_directory_path() /
           ("foveal_cfg_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()) + ".txt");
    std::ofstream(path) << text;
  }
  ~TempFile() { std::filesystem::remove(path); }
};

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Config, DefaultsCoverEveryKey) {
  RunConfig c;
  for (const auto& k : config_keys()) EXPECT_EQ(c.str(k.name), k.fallback) << k.name;
  EXPECT_EQ(c.real("lr"), 0.01);
  EXPECT_EQ(c.integer("glimpses"), 3u);
  EXPECT_EQ(c.resolutions("resolutions").size(), 3u);
  EXPECT_TRUE(c.boolean("mirror"));
}

TEST(Config, CommandLineOverridesWinOverFile) {
  TempFile f("lr = 0.01\nglimpses = 2\n");
  const RunConfig c = parse_config(f.path, {"lr=0.1"});
  EXPECT_EQ(c.real("lr"), 0.1);
  EXPECT_EQ(c.integer("glimpses"), 2u);
}

TEST(Config, CommentsAndBlankLinesIgnored) {
  TempFile f("# a comment\n\n  sigma = 0.2   # trailing\n\t\nresolutions = high\n");
  const RunConfig c = parse_config(f.path, {});
  EXPECT_EQ(c.real("sigma"), 0.2);
  EXPECT_EQ(c.resolutions("resolutions"), std::vector<Resolution>{Resolution::high});
}

TEST(Config, UnknownKeyIsNamed) {
  const std::string msg = error_of([] { parse_config({}, {"foo=1"}); });
  EXPECT_NE(msg.find("'foo'"), std::string::npos) << msg;
  TempFile f("lr = 0.1\nbar = 2\n");
  const std::string from_file = error_of([&] { parse_config(f.path, {}); });
  EXPECT_NE(from_file.find("'bar'"), std::string::npos) << from_file;
  EXPECT_NE(from_file.find(":2:"), std::string::npos) << from_file;
}

TEST(Config, UnparseableValuesRejected) {
  for (const char* bad : {"lr=abc", "lr=inf", "glimpses=-1", "glimpses=2.5", "mirror=yes", "resolutions=high,ultra",
                          "resolutions=", "location_mode=random", "seed=", "missing_equals"}) {
    EXPECT_THROW(parse_config({}, {bad}), Error) << bad;
  }
  TempFile f("lr 0.1\n");
  EXPECT_THROW(parse_config(f.path, {}), Error);
  EXPECT_THROW(parse_config("/nonexistent/foveal.cfg", {}), Error);
}

TEST(Config, IntegerListsValidated) {
  RunConfig c;
  EXPECT_EQ(c.integer_list("core_channels"), (std::vector<std::size_t>{16, 32}));
  c.set("core_channels", "4, 0");
  EXPECT_THROW(c.integer_list("core_channels"), Error);
}

TEST(Config, EchoedConfigIsAFixedPoint) {
  const RunConfig c = parse_config({}, {"lr=0.05", "resolutions=high,low", "out=/tmp/x y", "mirror=false",
                                        "location_mode=fixed_center", "core_channels=4,8"});
  TempFile f(c.resolved());
  const RunConfig back = parse_config(f.path, {});
  EXPECT_TRUE(back == c);
  EXPECT_EQ(back.resolved(), c.resolved());
}

TEST(Config, RecordedSnapshotLeavesOutPaths) {
  const RunConfig c = parse_config({}, {"out=/somewhere", "seed=9"});
  const auto snap = parse_snapshot(c.resolved(true));
  EXPECT_EQ(snap.count("out"), 0u);
  EXPECT_EQ(snap.count("resume"), 0u);
  EXPECT_EQ(snap.at("seed"), "9");
}

TEST(Config, HelpListsEveryKey) {
  const std::string help = config_help();
  for (const auto& k : config_keys()) EXPECT_NE(help.find(std::string("  ") + k.name + " ["), std::string::npos) << k.name;
}
