#pragma once

// Multi-resolution foveal glimpses.
//
// Coordinates: a Location is normalized to [-1,1]^2, (-1,-1) being the
// top-left image corner, (0,0) the centre and (+1,+1) the bottom-right corner.
// Boxes live in continuous edge coordinates where pixel i spans [i, i+1), so
// a box of side s centred on c covers [c - s/2, c + s/2). Box sides are real
// valued: the ladder doubles exactly and the coarsest level can equal the
// short image side for any image size.
//
// A patch of out_size samples a box at pixel-index positions
//   u_j = (c - s/2) + j * (s - 1) / (out_size - 1),
// i.e. the first and last samples sit on the centres of the first and last
// covered pixels (corner-aligned bilinear resampling).

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "foveal/rng.hpp"
#include "foveal/tensor.hpp"

namespace foveal {

enum class Resolution { high = 0, medium = 1, low = 2 };

inline constexpr std::array<Resolution, 3> kAllResolutions = {Resolution::high, Resolution::medium,
                                                              Resolution::low};

inline const char* to_string(Resolution r) {
  switch (r) {
    case Resolution::high: return "high";
    case Resolution::medium: return "medium";
    case Resolution::low: return "low";
  }
  return "?";
}

inline Resolution parse_resolution(const std::string& s) {
  for (Resolution r : kAllResolutions)
    if (s == to_string(r)) return r;
  throw Error("unknown resolution '" + s + "' (expected high, medium or low)");
}

struct Location {
  double row = 0.0;
  double col = 0.0;

  Location clamped() const { return {std::clamp(row, -1.0, 1.0), std::clamp(col, -1.0, 1.0)}; }
  bool in_bounds() const { return row >= -1.0 && row <= 1.0 && col >= -1.0 && col <= 1.0; }
  friend bool operator==(const Location&, const Location&) = default;
};

struct PatchLadder {
  double base_fraction = 0.25;
  double scale_factor = 2.0;
  std::vector<Resolution> resolutions{Resolution::high, Resolution::medium, Resolution::low};
  std::size_t out_size = 96;

  void validate() const {
    if (!(base_fraction > 0.0 && base_fraction <= 1.0))
      throw Error("patch ladder base_fraction must lie in (0, 1]");
    if (!(scale_factor > 1.0)) throw Error("patch ladder scale_factor must exceed 1");
    if (resolutions.empty()) throw Error("patch ladder needs at least one resolution");
    if (out_size < 1) throw Error("patch ladder out_size must be positive");
    for (std::size_t i = 1; i < resolutions.size(); ++i)
      if (static_cast<int>(resolutions[i]) <= static_cast<int>(resolutions[i - 1]))
        throw Error("resolutions must be distinct and ordered high, medium, low");
  }

  double side(std::size_t image_h, std::size_t image_w, Resolution r) const {
    double s = base_fraction * static_cast<double>(std::min(image_h, image_w));
    for (int k = 0; k < static_cast<int>(r); ++k) s *= scale_factor;
    return s;
  }
};

// Square box; the centre is stored so concentric boxes share it exactly.
struct Box {
  double center_row = 0.0;
  double center_col = 0.0;
  double side = 0.0;

  double top() const { return center_row - side / 2.0; }
  double left() const { return center_col - side / 2.0; }
  double bottom() const { return center_row + side / 2.0; }
  double right() const { return center_col + side / 2.0; }
  friend bool operator==(const Box&, const Box&) = default;

  static Box from_corner(double top, double left, double side) {
    return {top + side / 2.0, left + side / 2.0, side};
  }
};

inline Box centered_box(double center_row, double center_col, double side) {
  return {center_row, center_col, side};
}

// Edge-coordinate point addressed by a location.
inline std::pair<double, double> location_to_point(std::size_t image_h, std::size_t image_w,
                                                   Location loc) {
  const Location l = loc.clamped();
  return {(l.row + 1.0) / 2.0 * static_cast<double>(image_h),
          (l.col + 1.0) / 2.0 * static_cast<double>(image_w)};
}

inline Location point_to_location(std::size_t image_h, std::size_t image_w, double row, double col) {
  return Location{2.0 * row / static_cast<double>(image_h) - 1.0,
                  2.0 * col / static_cast<double>(image_w) - 1.0}
      .clamped();
}

// One box per selected resolution, in ladder order; boxes may leave the image.
inline std::vector<Box> compute_patch_boxes(std::size_t image_h, std::size_t image_w, Location loc,
                                            const PatchLadder& ladder) {
  if (image_h < 1 || image_w < 1) throw Error("image dimensions must be positive");
  ladder.validate();
  const auto [cr, cc] = location_to_point(image_h, image_w, loc);
  std::vector<Box> boxes;
  for (Resolution r : ladder.resolutions) boxes.push_back(centered_box(cr, cc, ladder.side(image_h, image_w, r)));
  return boxes;
}

struct ValueRange {
  double lo = 0.0;
  double hi = 1.0;
};

inline ValueRange value_range(const Tensor& image) {
  auto [lo, hi] = std::minmax_element(image.data().begin(), image.data().end());
  return {*lo, *hi};
}

namespace detail {

// Pixel-index sample positions of a box axis. The end points are stored
// exactly so a box flush with the image border never reads past it.
struct SampleAxis {
  double first = 0.0;
  double last = 0.0;
  double step = 0.0;
  std::size_t count = 1;

  double at(std::size_t j) const {
    return j + 1 == count ? last : first + static_cast<double>(j) * step;
  }
};

inline SampleAxis sample_axis(double start, double side, std::size_t out) {
  SampleAxis a;
  a.count = out;
  if (side >= 1.0 && out > 1) {
    a.first = start;
    a.last = start + (side - 1.0);
    a.step = (side - 1.0) / static_cast<double>(out - 1);
  } else {
    a.first = a.last = start + (side - 1.0) / 2.0;
  }
  return a;
}

// Bilinear read of plane[rows x cols] at fractional index (y, x) within range.
inline double bilinear(const double* plane, std::size_t rows, std::size_t cols, double y, double x) {
  y = std::clamp(y, 0.0, static_cast<double>(rows - 1));
  x = std::clamp(x, 0.0, static_cast<double>(cols - 1));
  const std::size_t y0 = static_cast<std::size_t>(std::floor(y));
  const std::size_t x0 = static_cast<std::size_t>(std::floor(x));
  const std::size_t y1 = std::min(y0 + 1, rows - 1);
  const std::size_t x1 = std::min(x0 + 1, cols - 1);
  const double fy = y - static_cast<double>(y0);
  const double fx = x - static_cast<double>(x0);
  const double top = (1.0 - fx) * plane[y0 * cols + x0] + fx * plane[y0 * cols + x1];
  const double bot = (1.0 - fx) * plane[y1 * cols + x0] + fx * plane[y1 * cols + x1];
  return (1.0 - fy) * top + fy * bot;
}

}  // namespace detail

// Corner-aligned bilinear resize of a C x H x W image.
inline Tensor bilinear_resize(const Tensor& image, std::size_t out_h, std::size_t out_w) {
  if (image.rank() != 3) throw Error("bilinear_resize expects C x H x W, got " + shape_str(image.shape()));
  const std::size_t C = image.dim(0), H = image.dim(1), W = image.dim(2);
  const auto ay = detail::sample_axis(0.0, static_cast<double>(H), out_h);
  const auto ax = detail::sample_axis(0.0, static_cast<double>(W), out_w);
  Tensor out({C, out_h, out_w});
  for (std::size_t c = 0; c < C; ++c) {
    const double* plane = image.raw() + c * H * W;
    for (std::size_t i = 0; i < out_h; ++i)
      for (std::size_t j = 0; j < out_w; ++j)
        out(c, i, j) = detail::bilinear(plane, H, W, ay.at(i), ax.at(j));
  }
  return out;
}

// Copies the box region into a buffer, fills off-image pixels with uniform
// noise over `range` (drawn in channel/row/column order), then resamples it
// to out_size x out_size.
inline Tensor extract_resize_patch(const Tensor& image, const Box& box, std::size_t out_size, Rng& rng,
                                   ValueRange range) {
  if (image.rank() != 3) throw Error("extract_resize_patch expects C x H x W, got " + shape_str(image.shape()));
  if (out_size < 1) throw Error("patch size must be positive");
  const std::size_t C = image.dim(0);
  const long H = static_cast<long>(image.dim(1)), W = static_cast<long>(image.dim(2));
  const auto ay = detail::sample_axis(box.top(), box.side, out_size);
  const auto ax = detail::sample_axis(box.left(), box.side, out_size);
  const long r0 = static_cast<long>(std::floor(ay.at(0)));
  const long r1 = static_cast<long>(std::ceil(ay.at(out_size - 1)));
  const long c0 = static_cast<long>(std::floor(ax.at(0)));
  const long c1 = static_cast<long>(std::ceil(ax.at(out_size - 1)));
  const std::size_t rows = static_cast<std::size_t>(r1 - r0 + 1);
  const std::size_t cols = static_cast<std::size_t>(c1 - c0 + 1);

  std::vector<double> buffer(rows * cols);
  Tensor out({C, out_size, out_size});
  for (std::size_t c = 0; c < C; ++c) {
    const double* plane = image.raw() + c * image.dim(1) * image.dim(2);
    for (long r = r0; r <= r1; ++r)
      for (long q = c0; q <= c1; ++q) {
        const bool inside = r >= 0 && r < H && q >= 0 && q < W;
        buffer[(r - r0) * cols + (q - c0)] = inside ? plane[r * W + q] : rng.uniform(range.lo, range.hi);
      }
    for (std::size_t i = 0; i < out_size; ++i)
      for (std::size_t j = 0; j < out_size; ++j)
        out(c, i, j) = detail::bilinear(buffer.data(), rows, cols, ay.at(i) - double(r0), ax.at(j) - double(c0));
  }
  return out;
}

inline Tensor extract_resize_patch(const Tensor& image, const Box& box, std::size_t out_size, Rng& rng) {
  return extract_resize_patch(image, box, out_size, rng, value_range(image));
}

struct GlimpseBundle {
  std::vector<Resolution> resolutions;
  std::vector<Tensor> patches;  // C x out x out each
  std::vector<Box> boxes;
  Location location;

  std::size_t size() const { return patches.size(); }
};

inline GlimpseBundle extract_glimpse(const Tensor& image, Location loc, const PatchLadder& ladder, Rng& rng,
                                     ValueRange range) {
  GlimpseBundle bundle;
  bundle.location = loc.clamped();
  bundle.resolutions = ladder.resolutions;
  bundle.boxes = compute_patch_boxes(image.dim(1), image.dim(2), loc, ladder);
  for (const Box& b : bundle.boxes) bundle.patches.push_back(extract_resize_patch(image, b, ladder.out_size, rng, range));
  return bundle;
}

// Side-by-side strip, high to low: C x out x (out * R).
inline Tensor assemble_glimpse(const GlimpseBundle& bundle) {
  if (bundle.patches.empty()) throw Error("glimpse bundle has no patches");
  const Tensor& first = bundle.patches.front();
  const std::size_t C = first.dim(0), S = first.dim(1), R = bundle.patches.size();
  Tensor strip({C, S, S * R});
  for (std::size_t k = 0; k < R; ++k) {
    const Tensor& p = bundle.patches[k];
    if (p.shape() != first.shape()) throw Error("glimpse patches differ in shape");
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < S; ++i)
        for (std::size_t j = 0; j < S; ++j) strip(c, i, k * S + j) = p(c, i, j);
  }
  return strip;
}

enum class ContextMode { centered, random };

struct ContextPatch {
  Tensor patch;
  Box box;
};

// Square of the short image side, centred or placed uniformly inside the image.
inline ContextPatch build_context(const Tensor& image, ContextMode mode, std::size_t out_size, Rng& rng) {
  const std::size_t H = image.dim(1), W = image.dim(2);
  const std::size_t side = std::min(H, W);
  double top, left;
  if (mode == ContextMode::centered) {
    top = static_cast<double>(H - side) / 2.0;
    left = static_cast<double>(W - side) / 2.0;
  } else {
    top = static_cast<double>(rng.between(0, static_cast<long long>(H - side)));
    left = static_cast<double>(rng.between(0, static_cast<long long>(W - side)));
  }
  const Box box = Box::from_corner(top, left, static_cast<double>(side));
  // Fully inside the image, so no noise is ever drawn.
  Rng unused(0);
  return {extract_resize_patch(image, box, out_size, unused, ValueRange{}), box};
}

inline constexpr int kUncovered = -1;

struct Composite {
  Tensor image;
  std::vector<int> mask;  // per pixel: Resolution index used, or kUncovered
  std::size_t height = 0, width = 0;

  int at(std::size_t r, std::size_t c) const { return mask[r * width + c]; }
};

// Shows, at each pixel, the finest glimpse sample covering it (upsampled from
// its patch); uncovered pixels get noise over `range`.
inline Composite render_composite(std::size_t channels, std::size_t height, std::size_t width,
                                  const std::vector<GlimpseBundle>& glimpses, Rng& rng,
                                  ValueRange range = {}) {
  Composite out;
  out.height = height;
  out.width = width;
  out.image = Tensor({channels, height, width});
  out.mask.assign(height * width, kUncovered);

  struct Source {
    const Tensor* patch;
    detail::SampleAxis ay, ax;
    double side;
    Resolution res;
  };
  std::vector<Source> sources;
  for (const auto& g : glimpses)
    for (std::size_t k = 0; k < g.patches.size(); ++k) {
      const std::size_t S = g.patches[k].dim(1);
      sources.push_back({&g.patches[k], detail::sample_axis(g.boxes[k].top(), g.boxes[k].side, S),
                         detail::sample_axis(g.boxes[k].left(), g.boxes[k].side, S), g.boxes[k].side,
                         g.resolutions[k]});
    }

  std::vector<const Source*> chosen(height * width, nullptr);
  for (std::size_t r = 0; r < height; ++r)
    for (std::size_t c = 0; c < width; ++c) {
      const Source* best = nullptr;
      for (const auto& s : sources) {
        const double y = static_cast<double>(r), x = static_cast<double>(c);
        if (y < s.ay.first || y > s.ay.last || x < s.ax.first || x > s.ax.last) continue;
        if (!best || s.side < best->side) best = &s;
      }
      chosen[r * width + c] = best;
      if (best) out.mask[r * width + c] = static_cast<int>(best->res);
    }

  for (std::size_t ch = 0; ch < channels; ++ch)
    for (std::size_t r = 0; r < height; ++r)
      for (std::size_t c = 0; c < width; ++c) {
        const Source* s = chosen[r * width + c];
        if (!s) {
          out.image(ch, r, c) = rng.uniform(range.lo, range.hi);
          continue;
        }
        const std::size_t S = s->patch->dim(1);
        const double py = s->ay.step > 0.0 ? (double(r) - s->ay.first) / s->ay.step : 0.0;
        const double px = s->ax.step > 0.0 ? (double(c) - s->ax.first) / s->ax.step : 0.0;
        const std::size_t pc = std::min(ch, s->patch->dim(0) - 1);
        out.image(ch, r, c) = detail::bilinear(s->patch->raw() + pc * S * S, S, S, py, px);
      }
  return out;
}

}  // namespace foveal
