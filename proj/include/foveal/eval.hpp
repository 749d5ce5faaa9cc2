#pragma once

// Greedy evaluation and fixation visualizations.

#include <array>
#include <filesystem>

#include "foveal/attention.hpp"
#include "foveal/dataset.hpp"
#include "foveal/image_io.hpp"
#include "foveal/metrics.hpp"

namespace foveal {

// Glimpse noise for image i comes from its own generator, so results do not
// depend on evaluation order or on anything else drawing random numbers.
inline Rng eval_rng(std::uint64_t seed, std::size_t index) { return Rng(seed * 0x100000001B3ULL + index); }

inline Episode evaluate_one(const AttentionModel& model, const Tensor& image, std::uint64_t seed, std::size_t index) {
  Rng rng = eval_rng(seed, index);
  return model.forward_episode(image, ContextMode::centered, LocationPolicy::greedy(), rng);
}

struct Evaluation {
  EvalReport report;
  std::vector<int> predictions;
};

// Greedy episodes with centred context over the whole set.
inline Evaluation evaluate(const AttentionModel& model, const LabeledImageSet& data, std::uint64_t seed = 0) {
  data.validate();
  if (data.class_count() != model.config().classes)
    throw Error("dataset has " + std::to_string(data.class_count()) + " classes, model has " +
                std::to_string(model.config().classes));
  Evaluation out;
  for (std::size_t i = 0; i < data.size(); ++i)
    out.predictions.push_back(evaluate_one(model, data.images[i], seed, i).scores.predicted());
  out.report = mean_accuracy(out.predictions, data.labels, model.config().classes);
  out.report.class_names = data.class_names;
  return out;
}

using Rgb = std::array<double, 3>;
inline constexpr Rgb kCorrectColor{0.0, 1.0, 0.0};
inline constexpr Rgb kWrongColor{1.0, 0.0, 0.0};
inline constexpr Rgb kDotColor{1.0, 1.0, 0.0};
inline constexpr Rgb kOutlineColor{0.0, 1.0, 1.0};

inline void set_pixel(Tensor& rgb, long r, long c, const Rgb& color) {
  if (r < 0 || c < 0 || r >= static_cast<long>(rgb.dim(1)) || c >= static_cast<long>(rgb.dim(2))) return;
  for (std::size_t k = 0; k < 3; ++k) rgb(k, r, c) = color[k];
}

inline std::size_t border_width(const Tensor& rgb) { return std::max<std::size_t>(1, std::min(rgb.dim(1), rgb.dim(2)) / 50); }

inline void draw_border(Tensor& rgb, const Rgb& color) {
  const long H = static_cast<long>(rgb.dim(1)), W = static_cast<long>(rgb.dim(2));
  const long b = static_cast<long>(border_width(rgb));
  for (long r = 0; r < H; ++r)
    for (long c = 0; c < W; ++c)
      if (r < b || c < b || r >= H - b || c >= W - b) set_pixel(rgb, r, c, color);
}

// Outline of the pixels a box touches, clipped to the image.
inline void draw_box(Tensor& rgb, const Box& box, const Rgb& color) {
  const long top = static_cast<long>(std::floor(box.top())), left = static_cast<long>(std::floor(box.left()));
  const long bottom = static_cast<long>(std::ceil(box.bottom())) - 1, right = static_cast<long>(std::ceil(box.right())) - 1;
  for (long c = left; c <= right; ++c) set_pixel(rgb, top, c, color), set_pixel(rgb, bottom, c, color);
  for (long r = top; r <= bottom; ++r) set_pixel(rgb, r, left, color), set_pixel(rgb, r, right, color);
}

// Pixel holding a box centre.
inline std::pair<long, long> center_pixel(const Box& box) {
  return {static_cast<long>(std::floor(box.center_row)), static_cast<long>(std::floor(box.center_col))};
}

inline void draw_dot(Tensor& rgb, const Box& box, const Rgb& color) {
  const auto [r, c] = center_pixel(box);
  const long rad = static_cast<long>(std::max<std::size_t>(1, std::min(rgb.dim(1), rgb.dim(2)) / 100));
  for (long dr = -rad; dr <= rad; ++dr)
    for (long dc = -rad; dc <= rad; ++dc) set_pixel(rgb, r + dr, c + dc, color);
}

// Writes <id>_overlay.ppm, <id>_composite.ppm and <id>_glimpse<n>.ppm for n = 1..N.
inline std::vector<fs::path> emit_visuals(const Tensor& image, const Episode& ep, bool correct, const fs::path& dir,
                                          const std::string& id) {
  if (ep.steps.empty()) throw Error("cannot visualize an empty trace");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (!fs::is_directory(dir)) throw Error("cannot create output directory " + dir.string());
  const Rgb border = correct ? kCorrectColor : kWrongColor;
  std::vector<fs::path> written;
  auto emit = [&](Tensor rgb, const std::string& suffix) {
    draw_border(rgb, border);
    const fs::path p = dir / (id + "_" + suffix + ".ppm");
    write_pnm(p, rgb);
    written.push_back(p);
  };

  Tensor overlay = to_rgb(image);
  for (const StepTrace& s : ep.steps) draw_box(overlay, s.glimpse.boxes.front(), kOutlineColor);
  for (const StepTrace& s : ep.steps) draw_dot(overlay, s.glimpse.boxes.front(), kDotColor);
  emit(std::move(overlay), "overlay");

  std::vector<GlimpseBundle> bundles;
  for (const StepTrace& s : ep.steps) bundles.push_back(s.glimpse);
  Rng noise(0);
  const Composite comp = render_composite(image.dim(0), image.dim(1), image.dim(2), bundles, noise, value_range(image));
  emit(to_rgb(comp.image), "composite");

  for (std::size_t n = 0; n < ep.steps.size(); ++n)
    emit(to_rgb(assemble_glimpse(ep.steps[n].glimpse)), "glimpse" + std::to_string(n + 1));
  return written;
}

}  // namespace foveal
