#include <gtest/gtest.h>

#include <cmath>

#include "foveal/glimpse.hpp"

using namespace foveal;

namespace {

Tensor random_image(std::size_t C, std::size_t H, std::size_t W, Rng& rng) {
  Tensor t({C, H, W});
  for (double& v : t.data()) v = rng.uniform();
  return t;
}

PatchLadder ladder_of(std::vector<Resolution> res, std::size_t out = 96) {
  PatchLadder l;
  l.resolutions = std::move(res);
  l.out_size = out;
  return l;
}

}  // namespace

TEST(PatchBoxes, LadderSidesForFourHundredByFiveHundred) {
  auto boxes = compute_patch_boxes(400, 500, {0.1, -0.3}, PatchLadder{});
  ASSERT_EQ(boxes.size(), 3u);
  EXPECT_EQ(boxes[0].side, 100.0);
  EXPECT_EQ(boxes[1].side, 200.0);
  EXPECT_EQ(boxes[2].side, 400.0);
}

TEST(PatchBoxes, CentreOfSquareImageLowBoxCoversImage) {
  for (std::size_t n : {7u, 64u, 101u}) {
    auto boxes = compute_patch_boxes(n, n, {0, 0}, PatchLadder{});
    EXPECT_EQ(boxes[2].top(), 0.0);
    EXPECT_EQ(boxes[2].left(), 0.0);
    EXPECT_EQ(boxes[2].side, double(n));
  }
}

TEST(PatchBoxes, TopLeftCornerLocation) {
  // Hand geometry: side 200/4 = 50, centred on the corner point (0,0).
  auto boxes = compute_patch_boxes(200, 200, {-1, -1}, ladder_of({Resolution::high}));
  ASSERT_EQ(boxes.size(), 1u);
  EXPECT_EQ(boxes[0].side, 50.0);
  EXPECT_EQ(boxes[0].center_row, 0.0);
  EXPECT_EQ(boxes[0].center_col, 0.0);
  EXPECT_EQ(boxes[0].top(), -25.0);
  EXPECT_EQ(boxes[0].left(), -25.0);
}

TEST(PatchBoxes, LadderIsGeometricAndConcentric) {
  Rng rng(123);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t H = 1 + rng.below(700), W = 1 + rng.below(700);
    const Location loc{rng.uniform(-1, 1), rng.uniform(-1, 1)};
    auto boxes = compute_patch_boxes(H, W, loc, PatchLadder{});
    EXPECT_EQ(boxes[1].side, 2.0 * boxes[0].side);
    EXPECT_EQ(boxes[2].side, 2.0 * boxes[1].side);
    EXPECT_EQ(boxes[2].side, double(std::min(H, W)));
    for (const Box& b : boxes) {
      EXPECT_EQ(b.center_row, boxes[0].center_row);
      EXPECT_EQ(b.center_col, boxes[0].center_col);
    }
  }
}

TEST(PatchBoxes, SubsetKeepsLadderLevels) {
  auto boxes = compute_patch_boxes(100, 100, {0, 0}, ladder_of({Resolution::medium, Resolution::low}));
  ASSERT_EQ(boxes.size(), 2u);
  EXPECT_EQ(boxes[0].side, 50.0);
  EXPECT_EQ(boxes[1].side, 100.0);
}

TEST(PatchLadder, RejectsInvalidConfigurations) {
  PatchLadder bad;
  bad.base_fraction = 0.0;
  EXPECT_THROW(bad.validate(), Error);
  bad = PatchLadder{};
  bad.scale_factor = 1.0;
  EXPECT_THROW(bad.validate(), Error);
  bad = PatchLadder{};
  bad.resolutions.clear();
  EXPECT_THROW(bad.validate(), Error);
}

TEST(Resize, ConstantImageStaysConstant) {
  Tensor gray({1, 40, 60}, 0.37);
  Rng rng(1);
  Tensor patch = extract_resize_patch(gray, Box::from_corner(5, 10, 25), 96, rng);
  for (double v : patch.data()) EXPECT_DOUBLE_EQ(v, 0.37);
  Tensor r = bilinear_resize(gray, 13, 7);
  for (double v : r.data()) EXPECT_DOUBLE_EQ(v, 0.37);
}

TEST(Resize, CheckerboardToFourByFour) {
  // Corner-aligned samples at 0, 1/3, 2/3, 1: v(y,x) = (1-y)x + y(1-x).
  Tensor board({1, 2, 2}, {0, 1, 1, 0});
  const double expected[4][4] = {{0, 1.0 / 3, 2.0 / 3, 1},
                                 {1.0 / 3, 4.0 / 9, 5.0 / 9, 2.0 / 3},
                                 {2.0 / 3, 5.0 / 9, 4.0 / 9, 1.0 / 3},
                                 {1, 2.0 / 3, 1.0 / 3, 0}};
  Tensor r = bilinear_resize(board, 4, 4);
  Rng rng(0);
  Tensor p = extract_resize_patch(board, Box::from_corner(0, 0, 2), 4, rng);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      EXPECT_NEAR(r(0, i, j), expected[i][j], 1e-15);
      EXPECT_NEAR(p(0, i, j), expected[i][j], 1e-15);
    }
}

TEST(Resize, IdentityWhenSizesMatch) {
  Rng rng(4);
  Tensor img = random_image(3, 24, 24, rng);
  EXPECT_TRUE(bilinear_resize(img, 24, 24).bit_equal(img));
  Tensor big = random_image(1, 50, 60, rng);
  Tensor crop = extract_resize_patch(big, Box::from_corner(10, 20, 24), 24, rng);
  for (std::size_t i = 0; i < 24; ++i)
    for (std::size_t j = 0; j < 24; ++j) EXPECT_EQ(crop(0, i, j), big(0, 10 + i, 20 + j));
}

TEST(Extract, HalfOffImageBoxFillsNoiseOnlyOutside) {
  Rng img_rng(8);
  Tensor img = random_image(1, 32, 32, img_rng);
  // Left half of the box is off-image: columns -16..-1 noise, 0..15 image.
  const Box box = Box::from_corner(0, -16, 32);
  Tensor a, b;
  {
    Rng r1(1);
    a = extract_resize_patch(img, box, 32, r1);
  }
  {
    Rng r2(2);
    b = extract_resize_patch(img, box, 32, r2);
  }
  double mean = 0.0, sq = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < 32; ++i) {
    for (std::size_t j = 16; j < 32; ++j) {
      EXPECT_EQ(a(0, i, j), img(0, i, j - 16));
      EXPECT_EQ(a(0, i, j), b(0, i, j));
    }
    for (std::size_t j = 0; j < 16; ++j) {
      const double d = a(0, i, j) - b(0, i, j);
      mean += d;
      sq += d * d;
      ++n;
    }
  }
  mean /= n;
  EXPECT_GT(sq / n - mean * mean, 1e-3);
}

TEST(Extract, DeterministicGivenSeed) {
  Rng img_rng(3);
  Tensor img = random_image(3, 50, 70, img_rng);
  const Box box = Box::from_corner(-10, 40, 45.5);
  Rng r1(99), r2(99);
  EXPECT_TRUE(extract_resize_patch(img, box, 96, r1).bit_equal(extract_resize_patch(img, box, 96, r2)));
}

TEST(Assemble, StripWidthsFollowResolutionCount) {
  Rng rng(5);
  Tensor img = random_image(1, 120, 160, rng);
  for (std::size_t R = 1; R <= 3; ++R) {
    std::vector<Resolution> res(kAllResolutions.begin(), kAllResolutions.begin() + R);
    auto bundle = extract_glimpse(img, {0.2, 0.1}, ladder_of(res), rng, value_range(img));
    Tensor strip = assemble_glimpse(bundle);
    EXPECT_EQ(strip.shape(), (Shape{1, 96, 96 * R}));
    if (R == 1) {
      EXPECT_TRUE(strip.bit_equal(bundle.patches[0]));
    }
    // Last block is the coarsest patch.
    EXPECT_EQ(strip(0, 40, 96 * (R - 1) + 7), bundle.patches[R - 1](0, 40, 7));
  }
}

TEST(Context, CenteredOnWideImage) {
  Tensor img({1, 400, 600}, 0.5);
  Rng rng(0);
  auto ctx = build_context(img, ContextMode::centered, 96, rng);
  EXPECT_EQ(ctx.box.top(), 0.0);
  EXPECT_EQ(ctx.box.bottom(), 400.0);
  EXPECT_EQ(ctx.box.left(), 100.0);
  EXPECT_EQ(ctx.box.right(), 500.0);
  EXPECT_EQ(ctx.patch.shape(), (Shape{1, 96, 96}));
}

TEST(Context, SquareImageEitherModeIsWholeImage) {
  Rng rng(6);
  Tensor img = random_image(1, 80, 80, rng);
  Tensor whole = bilinear_resize(img, 96, 96);
  for (auto mode : {ContextMode::centered, ContextMode::random}) {
    auto ctx = build_context(img, mode, 96, rng);
    EXPECT_EQ(ctx.box, Box::from_corner(0, 0, 80));
    EXPECT_TRUE(ctx.patch.bit_equal(whole));
  }
}

TEST(Context, RandomPlacementIsSeededAndInside) {
  Tensor img({1, 400, 600}, 0.5);
  Rng a(2024), b(2024);
  auto ca = build_context(img, ContextMode::random, 96, a);
  auto cb = build_context(img, ContextMode::random, 96, b);
  EXPECT_EQ(ca.box, cb.box);
  // Seeded trace: a row draw over [0,0], then a column draw over [0,200].
  Rng trace(2024);
  EXPECT_EQ(ca.box.top(), double(trace.between(0, 0)));
  EXPECT_EQ(ca.box.left(), double(trace.between(0, 200)));
  EXPECT_GE(ca.box.left(), 0.0);
  EXPECT_LE(ca.box.left(), 200.0);
  Rng c(7);
  bool moved = false;
  for (int i = 0; i < 20; ++i) moved = moved || build_context(img, ContextMode::random, 96, c).box.left() != ca.box.left();
  EXPECT_TRUE(moved);
}

TEST(Composite, SingleLowGlimpseIsResizeRoundTrip) {
  Rng rng(10);
  Tensor img = random_image(1, 60, 60, rng);
  auto bundle = extract_glimpse(img, {0, 0}, ladder_of({Resolution::low}), rng, value_range(img));
  auto comp = render_composite(1, 60, 60, {bundle}, rng);
  Tensor round_trip = bilinear_resize(bilinear_resize(img, 96, 96), 60, 60);
  for (std::size_t i = 0; i < comp.image.size(); ++i) EXPECT_NEAR(comp.image[i], round_trip[i], 1e-12);
  for (int m : comp.mask) EXPECT_EQ(m, int(Resolution::low));
}

TEST(Composite, HighResolutionWinsWhereBoxesOverlap) {
  Rng rng(11);
  Tensor img = random_image(1, 100, 100, rng);
  auto bundle = extract_glimpse(img, {0.3, -0.2}, PatchLadder{}, rng, value_range(img));
  auto comp = render_composite(1, 100, 100, {bundle}, rng);
  const Box& high = bundle.boxes[0];
  int inside = 0;
  for (std::size_t r = 0; r < 100; ++r)
    for (std::size_t c = 0; c < 100; ++c) {
      if (double(r) >= high.top() && double(r) <= high.bottom() - 1 && double(c) >= high.left() &&
          double(c) <= high.right() - 1) {
        EXPECT_EQ(comp.at(r, c), int(Resolution::high));
        ++inside;
      }
    }
  // Box of side 25 starting at a half-pixel offset: 24 covered pixel centres per axis.
  EXPECT_EQ(inside, 24 * 24);
}

TEST(Composite, PriorityFollowsBoxSideAcrossGlimpses) {
  Rng rng(12);
  Tensor img = random_image(1, 100, 100, rng);
  auto coarse = extract_glimpse(img, {0, 0}, ladder_of({Resolution::medium, Resolution::low}), rng, value_range(img));
  auto fine = extract_glimpse(img, {-0.5, 0.5}, ladder_of({Resolution::high}), rng, value_range(img));
  auto comp = render_composite(1, 100, 100, {coarse, fine}, rng);
  // Pixel (25,75) is inside the fine high box and the coarse low box.
  EXPECT_EQ(comp.at(25, 75), int(Resolution::high));
  EXPECT_EQ(comp.at(50, 50), int(Resolution::medium));
  EXPECT_EQ(comp.at(99, 0), int(Resolution::low));
}

TEST(Composite, NoGlimpsesIsAllNoise) {
  Rng rng(13);
  auto comp = render_composite(1, 20, 30, {}, rng);
  for (int m : comp.mask) EXPECT_EQ(m, kUncovered);
  double lo = 1, hi = 0;
  for (double v : comp.image.data()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  EXPECT_LT(lo, 0.1);
  EXPECT_GT(hi, 0.9);
}
