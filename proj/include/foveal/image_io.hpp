#pragma once

// Binary PGM (P5) / PPM (P6) with maxval 255, and class-per-directory image sets.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "foveal/dataset.hpp"

namespace foveal {

namespace fs = std::filesystem;

// v in [0, 1] -> byte, rounding half up; values outside are clipped.
inline unsigned char to_byte(double v) {
  const double x = std::floor(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5);
  return static_cast<unsigned char>(x);
}

inline Tensor decode_pnm(const std::string& bytes, const std::string& what = "image") {
  std::size_t pos = 0;
  auto fail = [&](const std::string& why) -> Error { return Error(what + ": " + why); };
  // Header tokens are separated by whitespace; '#' starts a comment to end of line.
  auto token = [&]() {
    for (;;) {
      while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (start == pos) throw fail("truncated header");
    return bytes.substr(start, pos - start);
  };
  auto number = [&](const char* field) {
    const std::string t = token();
    if (t.empty() || !std::all_of(t.begin(), t.end(), [](char c) { return c >= '0' && c <= '9'; }) ||
        t.size() > 9)
      throw fail(std::string("malformed ") + field + " '" + t + "'");
    return static_cast<std::size_t>(std::stoul(t));
  };
  const std::string magic = token();
  std::size_t channels;
  if (magic == "P5")
    channels = 1;
  else if (magic == "P6")
    channels = 3;
  else
    throw fail("unsupported magic '" + magic.substr(0, 8) + "' (only P5 and P6)");
  const std::size_t W = number("width"), H = number("height"), maxval = number("maxval");
  if (W == 0 || H == 0) throw fail("zero image dimension");
  if (maxval != 255) throw fail("maxval " + std::to_string(maxval) + " unsupported (only 255)");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) throw fail("truncated header");
  ++pos;
  const std::size_t n = W * H * channels;
  if (bytes.size() - pos < n)
    throw fail("expected " + std::to_string(n) + " pixel bytes, found " + std::to_string(bytes.size() - pos));
  Tensor t({channels, H, W});
  for (std::size_t r = 0; r < H; ++r)
    for (std::size_t c = 0; c < W; ++c)
      for (std::size_t k = 0; k < channels; ++k)
        t(k, r, c) = static_cast<unsigned char>(bytes[pos + (r * W + c) * channels + k]) / 255.0;
  return t;
}

inline std::string encode_pnm(const Tensor& img) {
  if (img.rank() != 3 || (img.dim(0) != 1 && img.dim(0) != 3))
    throw Error("PNM output needs 1 x H x W or 3 x H x W, got " + shape_str(img.shape()));
  const std::size_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
  std::string out = (C == 1 ? "P5\n" : "P6\n") + std::to_string(W) + " " + std::to_string(H) + "\n255\n";
  out.reserve(out.size() + C * H * W);
  for (std::size_t r = 0; r < H; ++r)
    for (std::size_t c = 0; c < W; ++c)
      for (std::size_t k = 0; k < C; ++k) out.push_back(static_cast<char>(to_byte(img(k, r, c))));
  return out;
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path.string());
}

inline Tensor read_pnm(const fs::path& path) { return decode_pnm(read_file(path), path.string()); }
inline void write_pnm(const fs::path& path, const Tensor& img) { write_file(path, encode_pnm(img)); }

// Grayscale images are replicated to three channels.
inline Tensor to_rgb(const Tensor& img) {
  if (img.dim(0) == 3) return img;
  if (img.dim(0) != 1) throw Error("cannot convert " + shape_str(img.shape()) + " to RGB");
  const std::size_t H = img.dim(1), W = img.dim(2);
  Tensor out({3, H, W});
  for (std::size_t k = 0; k < 3; ++k)
    for (std::size_t r = 0; r < H; ++r)
      for (std::size_t c = 0; c < W; ++c) out(k, r, c) = img(0, r, c);
  return out;
}

inline bool is_pnm_file(const fs::path& p) {
  const std::string ext = p.extension().string();
  return ext == ".pgm" || ext == ".ppm" || ext == ".pnm";
}

// One subdirectory per class, sorted by name; files sorted by name within.
inline LabeledImageSet load_image_dir(const fs::path& root) {
  if (!fs::is_directory(root)) throw Error("image directory " + root.string() + " does not exist");
  std::vector<fs::path> classes;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) classes.push_back(e.path());
  std::sort(classes.begin(), classes.end());
  if (classes.empty()) throw Error("image directory " + root.string() + " has no class subdirectories");
  LabeledImageSet set;
  for (std::size_t k = 0; k < classes.size(); ++k) {
    set.class_names.push_back(classes[k].filename().string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(classes[k]))
      if (e.is_regular_file() && is_pnm_file(e.path())) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) set.push(read_pnm(f), static_cast<int>(k));
  }
  if (set.size() == 0) throw Error("image directory " + root.string() + " contains no PGM/PPM images");
  return set;
}

inline void save_image_dir(const fs::path& root, const LabeledImageSet& set) {
  set.validate();
  for (const auto& name : set.class_names) fs::create_directories(root / name);
  std::vector<std::size_t> counter(set.class_count(), 0);
  for (std::size_t i = 0; i < set.size(); ++i) {
    const int y = set.labels[i];
    char name[32];
    std::snprintf(name, sizeof name, "%06zu", counter[y]++);
    const char* ext = set.images[i].dim(0) == 1 ? ".pgm" : ".ppm";
    write_pnm(root / set.class_names[y] / (std::string(name) + ext), set.images[i]);
  }
}

}  // namespace foveal
