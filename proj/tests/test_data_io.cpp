#include <gtest/gtest.h>

#include <set>

#include "foveal/checkpoint.hpp"
#include "foveal/data.hpp"

using namespace foveal;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("foveal_test_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                        "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string be32(std::uint32_t v) {
  return {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8), static_cast<char>(v)};
}

// Byte values k / 255 survive a write/read round trip exactly.
Tensor byte_image(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = static_cast<double>(rng.below(256)) / 255.0;
  return t;
}

std::uint64_t set_hash(const LabeledImageSet& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (std::size_t i = 0; i < s.size(); ++i) {
    h = checksum(s.images[i], h);
    h = (h ^ static_cast<std::uint64_t>(s.labels[i])) * 1099511628211ULL;
  }
  return h;
}

}  // namespace

TEST(Idx, HandBuiltFixtureRecoversPixels) {
  std::string images = be32(0x803) + be32(2) + be32(2) + be32(3);
  for (int b : {0, 255, 17, 128, 3, 254, 9, 10, 11, 12, 13, 200}) images.push_back(static_cast<char>(b));
  std::string labels = be32(0x801) + be32(2) + std::string{7, 2};
  auto set = parse_idx(images, labels);
  ASSERT_EQ(set.size(), 2u);
  EXPECT_EQ(set.images[0].shape(), (Shape{1, 2, 3}));
  EXPECT_EQ(set.images[0](0, 0, 1), 1.0);
  EXPECT_EQ(set.images[0](0, 1, 0), 128.0 / 255.0);
  EXPECT_EQ(set.images[1](0, 1, 2), 200.0 / 255.0);
  EXPECT_EQ(set.labels, (std::vector<int>{7, 2}));
  EXPECT_EQ(set.class_count(), 8u);
}

TEST(Idx, CorruptMagicTruncationAndCountMismatch) {
  const std::string labels = be32(0x801) + be32(1) + std::string(1, 0);
  try {
    parse_idx(be32(0x804) + be32(1) + be32(1) + be32(1) + "x", labels);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("0x00000803"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("0x00000804"), std::string::npos);
  }
  EXPECT_THROW(parse_idx(be32(0x803) + be32(1) + be32(2) + be32(2) + "abc", labels), Error);
  EXPECT_THROW(parse_idx(be32(0x803) + be32(2) + be32(1) + be32(1) + "ab", labels), Error);
  EXPECT_THROW(parse_idx(be32(0x803), labels), Error);
}

TEST(Idx, LoadFromFiles) {
  TempDir dir;
  write_file(dir.path / "img", be32(0x803) + be32(1) + be32(1) + be32(2) + std::string{5, 6});
  write_file(dir.path / "lbl", be32(0x801) + be32(1) + std::string{1});
  auto set = load_idx(dir.path / "img", dir.path / "lbl");
  EXPECT_EQ(set.images[0](0, 0, 1), 6.0 / 255.0);
  EXPECT_THROW(load_idx(dir.path / "missing", dir.path / "lbl"), Error);
}

TEST(Pnm, RoundTripIsExact) {
  Rng rng(1);
  for (std::size_t C : {1u, 3u}) {
    Tensor img = byte_image({C, 7, 11}, rng);
    EXPECT_TRUE(decode_pnm(encode_pnm(img)).bit_equal(img));
  }
}

TEST(Pnm, HeaderIsWidthThenHeightWithComments) {
  std::string bytes = "P6\n# a comment\n400 500\n255\n" + std::string(400 * 500 * 3, '\x10');
  Tensor t = decode_pnm(bytes);
  EXPECT_EQ(t.shape(), (Shape{3, 500, 400}));
  EXPECT_EQ(t(2, 499, 399), 16.0 / 255.0);
}

TEST(Pnm, RejectsBadInput) {
  EXPECT_THROW(decode_pnm("P3\n1 1\n255\n1 1 1"), Error);
  EXPECT_THROW(decode_pnm("P5\n2 2\n65535\n"), Error);
  EXPECT_THROW(decode_pnm("P5\n2 x\n255\n"), Error);
  EXPECT_THROW(decode_pnm("P5\n2 2\n255\nab"), Error);
  EXPECT_THROW(decode_pnm("P5\n2"), Error);
}

TEST(Pnm, WriteRoundsHalfUp) {
  EXPECT_EQ(to_byte(0.5 / 255.0), 1);
  EXPECT_EQ(to_byte(1.49 / 255.0), 1);
  EXPECT_EQ(to_byte(-0.2), 0);
  EXPECT_EQ(to_byte(2.0), 255);
}

TEST(ImageDir, ClassesSortedAndSizesPreserved) {
  TempDir dir;
  Rng rng(2);
  fs::create_directories(dir.path / "beta");
  fs::create_directories(dir.path / "alpha");
  for (int i = 0; i < 5; ++i) write_pnm(dir.path / "beta" / ("b" + std::to_string(i) + ".pgm"), byte_image({1, 4 + i, 6}, rng));
  for (int i = 0; i < 3; ++i) write_pnm(dir.path / "alpha" / ("a" + std::to_string(i) + ".ppm"), byte_image({3, 5, 2}, rng));
  write_file(dir.path / "alpha" / "notes.txt", "ignored");
  auto set = load_image_dir(dir.path);
  EXPECT_EQ(set.size(), 8u);
  EXPECT_EQ(set.class_names, (std::vector<std::string>{"alpha", "beta"}));
  EXPECT_EQ(std::count(set.labels.begin(), set.labels.end(), 0), 3);
  EXPECT_EQ(std::count(set.labels.begin(), set.labels.end(), 1), 5);
  EXPECT_EQ(set.images[3].shape(), (Shape{1, 4, 6}));
  EXPECT_EQ(set.images[7].shape(), (Shape{1, 8, 6}));
}

TEST(ImageDir, SaveThenLoadRoundTrip) {
  TempDir dir;
  Rng rng(3);
  LabeledImageSet set;
  set.class_names = {"x", "y"};
  for (int i = 0; i < 6; ++i) set.push(byte_image({1, 5, 5}, rng), i % 2);
  save_image_dir(dir.path, set);
  auto back = load_image_dir(dir.path);
  ASSERT_EQ(back.size(), 6u);
  // Loaded class by class: the evens, then the odds.
  const std::size_t order[6] = {0, 2, 4, 1, 3, 5};
  for (std::size_t i = 0; i < 6; ++i) EXPECT_TRUE(back.images[i].bit_equal(set.images[order[i]]));
}

TEST(ImageDir, Errors) {
  TempDir dir;
  EXPECT_THROW(load_image_dir(dir.path / "nope"), Error);
  EXPECT_THROW(load_image_dir(dir.path), Error);
  fs::create_directories(dir.path / "empty");
  EXPECT_THROW(load_image_dir(dir.path), Error);
}

TEST(Digits, DrawnDigitsAreBoundedAndDistinct) {
  Rng rng(4);
  auto set = synth_digits(3, rng);
  EXPECT_EQ(set.size(), 30u);
  for (const auto& img : set.images) {
    EXPECT_EQ(img.shape(), (Shape{1, 28, 28}));
    double ink = 0;
    for (double v : img.data()) {
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
      ink += v;
    }
    EXPECT_GT(ink, 20.0);
    // A margin keeps strokes off the border rows.
    for (std::size_t c = 0; c < 28; ++c) EXPECT_EQ(img(0, 0, c), 0.0);
  }
  EXPECT_THROW(draw_digit(10, 28, rng), Error);
}

TEST(Clutter, DegenerateCaseReturnsDigit) {
  Rng rng(5);
  auto base = synth_digits(1, rng);
  ClutterConfig cfg;
  cfg.canvas = 28;
  cfg.clutter_count = 0;
  auto out = synth_cluttered(base, cfg, rng);
  for (std::size_t i = 0; i < base.size(); ++i) EXPECT_TRUE(out.images[i].bit_equal(base.images[i]));
  EXPECT_EQ(out.labels, base.labels);
}

TEST(Clutter, DigitFullyInsideAndIntact) {
  Rng rng(6);
  auto base = synth_digits(2, rng);
  ClutterConfig cfg;
  auto out = synth_cluttered(base, cfg, rng);
  for (std::size_t i = 0; i < out.size(); ++i) {
    EXPECT_EQ(out.images[i].shape(), (Shape{1, 100, 100}));
    // Every digit pixel survives max blending somewhere on the canvas.
    bool found = false;
    for (std::size_t t = 0; t <= 72 && !found; ++t)
      for (std::size_t l = 0; l <= 72 && !found; ++l) {
        bool ok = true;
        for (std::size_t r = 0; r < 28 && ok; ++r)
          for (std::size_t c = 0; c < 28 && ok; ++c) ok = out.images[i](0, t + r, l + c) >= base.images[i](0, r, c);
        found = ok;
      }
    EXPECT_TRUE(found) << i;
  }
}

TEST(Clutter, SeededCorpusIsReproducible) {
  auto make = [](std::uint64_t seed) {
    Rng rng(seed);
    auto base = synth_digits(2, rng);
    return set_hash(synth_cluttered(base, ClutterConfig{}, rng));
  };
  EXPECT_EQ(make(7), make(7));
  EXPECT_NE(make(7), make(8));
}

TEST(Clutter, Errors) {
  Rng rng(9);
  auto base = synth_digits(1, rng);
  ClutterConfig small;
  small.canvas = 20;
  EXPECT_THROW(synth_cluttered(base, small, rng), Error);
  LabeledImageSet one_class;
  one_class.class_names = {"a"};
  one_class.push(base.images[0], 0);
  EXPECT_THROW(synth_cluttered(one_class, ClutterConfig{}, rng), Error);
}

TEST(Split, EightyTwentyPerClassPartition) {
  Rng rng(10);
  LabeledImageSet set;
  set.class_names = numbered_classes(3);
  for (int i = 0; i < 300; ++i) set.push(Tensor({1, 1, 1}, {static_cast<double>(i)}), i % 3);
  auto [train, val] = split_train_val(set, 0.8, 42);
  for (int k = 0; k < 3; ++k) {
    EXPECT_EQ(std::count(train.labels.begin(), train.labels.end(), k), 80);
    EXPECT_EQ(std::count(val.labels.begin(), val.labels.end(), k), 20);
  }
  std::set<double> seen;
  for (const auto& img : train.images) seen.insert(img[0]);
  for (const auto& img : val.images) EXPECT_TRUE(seen.insert(img[0]).second);
  EXPECT_EQ(seen.size(), 300u);
  auto [train2, val2] = split_train_val(set, 0.8, 42);
  EXPECT_EQ(set_hash(train), set_hash(train2));
  EXPECT_EQ(set_hash(val), set_hash(val2));
}

TEST(Split, IndivisibleWithinOneAndErrors) {
  LabeledImageSet set;
  set.class_names = numbered_classes(2);
  for (int i = 0; i < 7; ++i) set.push(Tensor({1, 1, 1}), 0);
  set.push(Tensor({1, 1, 1}), 1);
  EXPECT_THROW(split_train_val(set, 0.8, 1), Error);
  set.push(Tensor({1, 1, 1}), 1);
  auto [train, val] = split_train_val(set, 0.8, 1);
  EXPECT_NEAR(std::count(train.labels.begin(), train.labels.end(), 0), 0.8 * 7, 1.0);
  EXPECT_THROW(split_train_val(set, 1.0, 1), Error);
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  TempDir dir;
  Rng rng(11);
  rng.normal();
  Checkpoint c;
  c.config = "lr = 0.1\nseed = 3\n";
  c.epoch = 7;
  c.rng_state = rng.state();
  Rng expected = rng;
  c.put("a.w", byte_image({2, 3}, rng));
  c.put("b", Tensor({1}, {-0.0}));
  c.put("c", Tensor({2, 1, 2}, {1e-300, std::numeric_limits<double>::max(), -3.5, 0.1}));
  save_checkpoint(dir.path / "x.ckpt", c);
  auto back = load_checkpoint(dir.path / "x.ckpt");
  EXPECT_EQ(back.config, c.config);
  EXPECT_EQ(back.epoch, 7u);
  EXPECT_EQ(back.rng_state, c.rng_state);
  ASSERT_EQ(back.tensors.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back.tensors[i].first, c.tensors[i].first);
    EXPECT_TRUE(back.tensors[i].second.bit_equal(c.tensors[i].second));
  }
  save_checkpoint(dir.path / "y.ckpt", back);
  EXPECT_EQ(read_file(dir.path / "x.ckpt"), read_file(dir.path / "y.ckpt"));
  EXPECT_FALSE(fs::exists(dir.path / "x.ckpt.tmp"));
  Rng restored;
  restored.set_state(back.rng_state);
  EXPECT_EQ(restored.uniform(), expected.uniform());
  EXPECT_EQ(restored.normal(), expected.normal());
}

TEST(Checkpoint, LittleEndianLayout) {
  Checkpoint c;
  c.epoch = 0x0102;
  c.put("t", Tensor({1}, {1.0}));
  const std::string b = serialize_checkpoint(c);
  EXPECT_EQ(b.substr(0, 8), "FOVCKPT1");
  EXPECT_EQ(b[8], 1);
  EXPECT_EQ(b[9], 0);
  // magic, version, empty config, epoch
  EXPECT_EQ(static_cast<unsigned char>(b[16]), 0x02);
  EXPECT_EQ(static_cast<unsigned char>(b[17]), 0x01);
  EXPECT_EQ(static_cast<unsigned char>(b[b.size() - 1]), 0x3F);
  EXPECT_EQ(static_cast<unsigned char>(b[b.size() - 2]), 0xF0);
}

TEST(Checkpoint, CorruptionIsRejected) {
  Checkpoint c;
  c.put("t", Tensor({3}, {1, 2, 3}));
  const std::string good = serialize_checkpoint(c);
  for (std::size_t cut = 0; cut < good.size(); ++cut) EXPECT_THROW(parse_checkpoint(good.substr(0, cut)), Error);
  std::string bad = good;
  bad[0] = 'X';
  EXPECT_THROW(parse_checkpoint(bad), Error);
  bad = good;
  bad[8] = 2;
  try {
    parse_checkpoint(bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
  EXPECT_THROW(parse_checkpoint(good + "x"), Error);
  EXPECT_THROW(load_checkpoint("/nonexistent/file.ckpt"), Error);
}

TEST(Checkpoint, RestoreValidatesBeforeWriting) {
  Rng rng(12);
  ParameterSet ps;
  ps.add("a", byte_image({2, 2}, rng));
  ps.add("b", byte_image({3}, rng));
  const auto before = ps.checksum();
  Checkpoint wrong_shape;
  wrong_shape.put("a", Tensor({2, 2}, {1, 2, 3, 4}));
  wrong_shape.put("b", Tensor({4}));
  EXPECT_THROW(restore_parameters(wrong_shape, ps), Error);
  EXPECT_EQ(ps.checksum(), before);
  Checkpoint missing;
  missing.put("a", Tensor({2, 2}, {1, 2, 3, 4}));
  EXPECT_THROW(restore_parameters(missing, ps), Error);
  EXPECT_EQ(ps.checksum(), before);
  Checkpoint ok;
  ok.put("a", Tensor({2, 2}, {1, 2, 3, 4}));
  ok.put("b", Tensor({3}, {5, 6, 7}));
  restore_parameters(ok, ps);
  EXPECT_EQ(ps.get("b")->value[2], 7.0);
}
