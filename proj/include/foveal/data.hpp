#pragma once

// Dataset sources: IDX digit files, procedurally drawn digits, the cluttered
// canvas synthesizer and stratified splitting.

#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>

#include "foveal/image_io.hpp"
#include "foveal/rng.hpp"

namespace foveal {

namespace detail {

inline std::uint32_t read_be32(const std::string& b, std::size_t at, const std::string& what) {
  if (b.size() < at + 4) throw Error(what + ": truncated header");
  return (std::uint32_t(static_cast<unsigned char>(b[at])) << 24) |
         (std::uint32_t(static_cast<unsigned char>(b[at + 1])) << 16) |
         (std::uint32_t(static_cast<unsigned char>(b[at + 2])) << 8) | std::uint32_t(static_cast<unsigned char>(b[at + 3]));
}

inline std::string hex32(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08X", v);
  return buf;
}

}  // namespace detail

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

// Big-endian IDX images (n x rows x cols bytes) and labels (n bytes).
inline LabeledImageSet parse_idx(const std::string& images, const std::string& labels) {
  const std::uint32_t im = detail::read_be32(images, 0, "IDX images");
  if (im != kIdxImageMagic)
    throw Error("IDX images: expected magic " + detail::hex32(kIdxImageMagic) + ", found " + detail::hex32(im));
  const std::uint32_t lm = detail::read_be32(labels, 0, "IDX labels");
  if (lm != kIdxLabelMagic)
    throw Error("IDX labels: expected magic " + detail::hex32(kIdxLabelMagic) + ", found " + detail::hex32(lm));
  const std::size_t n = detail::read_be32(images, 4, "IDX images");
  const std::size_t rows = detail::read_be32(images, 8, "IDX images");
  const std::size_t cols = detail::read_be32(images, 12, "IDX images");
  const std::size_t nl = detail::read_be32(labels, 4, "IDX labels");
  if (n != nl) throw Error("IDX count mismatch: " + std::to_string(n) + " images, " + std::to_string(nl) + " labels");
  if (rows == 0 || cols == 0) throw Error("IDX images: zero image dimension");
  if (images.size() < 16 + n * rows * cols)
    throw Error("IDX images: truncated, expected " + std::to_string(16 + n * rows * cols) + " bytes, found " +
                std::to_string(images.size()));
  if (labels.size() < 8 + n)
    throw Error("IDX labels: truncated, expected " + std::to_string(8 + n) + " bytes, found " +
                std::to_string(labels.size()));
  LabeledImageSet set;
  int max_label = 0;
  for (std::size_t i = 0; i < n; ++i) {
    Tensor t({1, rows, cols});
    const std::size_t base = 16 + i * rows * cols;
    for (std::size_t p = 0; p < rows * cols; ++p) t[p] = static_cast<unsigned char>(images[base + p]) / 255.0;
    const int y = static_cast<unsigned char>(labels[8 + i]);
    max_label = std::max(max_label, y);
    set.push(std::move(t), y);
  }
  set.class_names = numbered_classes(static_cast<std::size_t>(max_label) + 1);
  return set;
}

inline LabeledImageSet load_idx(const fs::path& images, const fs::path& labels) {
  return parse_idx(read_file(images), read_file(labels));
}

// ---------------------------------------------------------------------------
// Procedural digits: per-class stroke skeletons in a unit box, drawn with a
// random affine warp, vertex jitter and stroke width.

namespace detail {

struct Pt {
  double x, y;
};
using Stroke = std::vector<Pt>;

inline Stroke ellipse(double cx, double cy, double rx, double ry, double from = 0.0, double to = 2 * std::numbers::pi,
                      int n = 14) {
  Stroke s;
  for (int i = 0; i <= n; ++i) {
    const double t = from + (to - from) * i / n;
    s.push_back({cx + rx * std::cos(t), cy + ry * std::sin(t)});
  }
  return s;
}

inline const std::array<std::vector<Stroke>, 10>& digit_skeletons() {
  static const std::array<std::vector<Stroke>, 10> k = [] {
    const double pi = std::numbers::pi;
    std::array<std::vector<Stroke>, 10> d;
    d[0] = {ellipse(0.5, 0.5, 0.26, 0.38)};
    d[1] = {{{0.36, 0.26}, {0.54, 0.1}, {0.54, 0.9}}};
    d[2] = {{{0.26, 0.3}, {0.36, 0.15}, {0.55, 0.1}, {0.72, 0.2}, {0.72, 0.38}, {0.26, 0.9}, {0.78, 0.9}}};
    d[3] = {{{0.26, 0.14}, {0.72, 0.14}, {0.46, 0.44}, {0.7, 0.58}, {0.72, 0.78}, {0.52, 0.92}, {0.26, 0.86}}};
    d[4] = {{{0.64, 0.9}, {0.64, 0.1}, {0.2, 0.64}, {0.8, 0.64}}};
    d[5] = {{{0.74, 0.1}, {0.32, 0.1}, {0.28, 0.46}, {0.56, 0.42}, {0.73, 0.58}, {0.7, 0.8}, {0.5, 0.92}, {0.26, 0.85}}};
    d[6] = {{{0.68, 0.12}, {0.42, 0.28}, {0.29, 0.58}}, ellipse(0.5, 0.7, 0.21, 0.2, pi, 3 * pi)};
    d[7] = {{{0.22, 0.12}, {0.78, 0.12}, {0.42, 0.9}}};
    d[8] = {ellipse(0.5, 0.29, 0.17, 0.18), ellipse(0.5, 0.7, 0.22, 0.21)};
    d[9] = {ellipse(0.5, 0.32, 0.2, 0.2), {{0.7, 0.32}, {0.64, 0.9}}};
    return d;
  }();
  return k;
}

inline double segment_distance(Pt p, Pt a, Pt b) {
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0 ? ((p.x - a.x) * vx + (p.y - a.y) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = p.x - (a.x + t * vx), dy = p.y - (a.y + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

}  // namespace detail

inline Tensor draw_digit(int digit, std::size_t size, Rng& rng) {
  if (digit < 0 || digit > 9) throw Error("digit " + std::to_string(digit) + " outside [0,9]");
  const double S = static_cast<double>(size);
  const double scale = rng.uniform(0.62, 0.78) * S, angle = rng.uniform(-0.2, 0.2), shear = rng.uniform(-0.2, 0.2);
  const double tx = rng.uniform(-0.06, 0.06) * S, ty = rng.uniform(-0.06, 0.06) * S;
  const double half_width = rng.uniform(0.035, 0.06) * S;
  const double ca = std::cos(angle), sa = std::sin(angle);
  std::vector<detail::Stroke> strokes;
  for (const auto& s : detail::digit_skeletons()[digit]) {
    detail::Stroke out;
    for (const auto& p : s) {
      const double x = p.x - 0.5 + rng.uniform(-0.03, 0.03), y = p.y - 0.5 + rng.uniform(-0.03, 0.03);
      const double xs = x + shear * y;
      out.push_back({S / 2 + tx + scale * (ca * xs - sa * y), S / 2 + ty + scale * (sa * xs + ca * y)});
    }
    strokes.push_back(std::move(out));
  }
  Tensor img({1, size, size});
  for (std::size_t r = 0; r < size; ++r)
    for (std::size_t c = 0; c < size; ++c) {
      const detail::Pt p{c + 0.5, r + 0.5};
      double d = 1e9;
      for (const auto& s : strokes)
        for (std::size_t i = 0; i + 1 < s.size(); ++i) d = std::min(d, detail::segment_distance(p, s[i], s[i + 1]));
      img(0, r, c) = std::clamp(half_width + 0.5 - d, 0.0, 1.0);
    }
  return img;
}

// `per_class` drawn digits for each of the first `classes` digits, classes interleaved.
inline LabeledImageSet synth_digits(std::size_t per_class, Rng& rng, std::size_t size = 28, std::size_t classes = 10) {
  if (classes < 1 || classes > 10) throw Error("digit classes must lie in [1, 10]");
  LabeledImageSet set;
  set.class_names = numbered_classes(classes);
  for (std::size_t i = 0; i < per_class; ++i)
    for (int k = 0; k < static_cast<int>(classes); ++k) set.push(draw_digit(k, size, rng), k);
  return set;
}

enum class Placement { random, center };

struct ClutterConfig {
  std::size_t canvas = 100;
  std::size_t clutter_count = 4;
  std::size_t clutter_size = 8;
  Placement placement = Placement::random;
};

// One canvas per base image: `clutter_count` crops from digits of other
// classes, then the whole source digit, all max-blended onto black.
inline LabeledImageSet synth_cluttered(const LabeledImageSet& base, const ClutterConfig& cfg, Rng& rng) {
  base.validate();
  LabeledImageSet out;
  out.class_names = base.class_names;
  const std::size_t cs = cfg.clutter_size;
  auto blend = [](Tensor& canvas, const Tensor& src, std::size_t sr, std::size_t sc, std::size_t h, std::size_t w,
                  std::size_t dr, std::size_t dc) {
    for (std::size_t k = 0; k < canvas.dim(0); ++k)
      for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) {
          double& dst = canvas(k, dr + r, dc + c);
          dst = std::max(dst, src(k % src.dim(0), sr + r, sc + c));
        }
  };
  for (std::size_t i = 0; i < base.size(); ++i) {
    const Tensor& digit = base.images[i];
    const std::size_t C = digit.dim(0), h = digit.dim(1), w = digit.dim(2);
    if (h > cfg.canvas || w > cfg.canvas)
      throw Error("canvas " + std::to_string(cfg.canvas) + " smaller than " + std::to_string(h) + "x" +
                  std::to_string(w) + " digit");
    Tensor canvas({C, cfg.canvas, cfg.canvas});
    for (std::size_t n = 0; n < cfg.clutter_count; ++n) {
      std::size_t j = 0;
      for (std::size_t tries = 0;; ++tries) {
        if (tries > 1000) throw Error("clutter needs digits from at least two classes");
        j = rng.below(base.size());
        if (base.labels[j] != base.labels[i]) break;
      }
      const Tensor& src = base.images[j];
      if (cs > src.dim(1) || cs > src.dim(2) || cs > cfg.canvas)
        throw Error("clutter size " + std::to_string(cs) + " exceeds its source or the canvas");
      const std::size_t sr = rng.below(src.dim(1) - cs + 1), sc = rng.below(src.dim(2) - cs + 1);
      const std::size_t dr = rng.below(cfg.canvas - cs + 1), dc = rng.below(cfg.canvas - cs + 1);
      blend(canvas, src, sr, sc, cs, cs, dr, dc);
    }
    std::size_t top, left;
    if (cfg.placement == Placement::center) {
      top = (cfg.canvas - h) / 2;
      left = (cfg.canvas - w) / 2;
    } else {
      top = rng.below(cfg.canvas - h + 1);
      left = rng.below(cfg.canvas - w + 1);
    }
    blend(canvas, digit, 0, 0, h, w, top, left);
    out.push(std::move(canvas), base.labels[i]);
  }
  return out;
}

// Per-class stratified split after a seeded shuffle; each part keeps the
// input order. Class k contributes round(fraction * n_k) training examples,
// at least one to each side.
inline std::pair<LabeledImageSet, LabeledImageSet> split_train_val(const LabeledImageSet& set, double fraction,
                                                                   std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw Error("split fraction must lie in (0, 1)");
  set.validate();
  Rng rng(seed);
  std::vector<std::vector<std::size_t>> by_class(set.class_count());
  for (std::size_t i = 0; i < set.size(); ++i) by_class[set.labels[i]].push_back(i);
  std::vector<char> in_train(set.size(), 0);
  for (std::size_t k = 0; k < by_class.size(); ++k) {
    auto& idx = by_class[k];
    if (idx.empty()) continue;
    if (idx.size() < 2)
      throw Error("class '" + set.class_names[k] + "' has " + std::to_string(idx.size()) +
                  " example; a split needs at least 2");
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
    std::size_t n_train = static_cast<std::size_t>(std::floor(fraction * idx.size() + 0.5));
    n_train = std::clamp<std::size_t>(n_train, 1, idx.size() - 1);
    for (std::size_t i = 0; i < n_train; ++i) in_train[idx[i]] = 1;
  }
  LabeledImageSet train, val;
  train.class_names = val.class_names = set.class_names;
  for (std::size_t i = 0; i < set.size(); ++i) (in_train[i] ? train : val).push(set.images[i], set.labels[i]);
  return {std::move(train), std::move(val)};
}

// Subset of `set` holding the listed indices, in order.
inline LabeledImageSet subset(const LabeledImageSet& set, const std::vector<std::size_t>& indices) {
  LabeledImageSet out;
  out.class_names = set.class_names;
  for (std::size_t i : indices) out.push(set.images.at(i), set.labels.at(i));
  return out;
}

// The first `per_class` examples of every class, input order kept.
inline LabeledImageSet take_per_class(const LabeledImageSet& set, std::size_t per_class) {
  std::vector<std::size_t> seen(set.class_count(), 0), keep;
  for (std::size_t i = 0; i < set.size(); ++i)
    if (seen[set.labels[i]]++ < per_class) keep.push_back(i);
  return subset(set, keep);
}

}  // namespace foveal
