#pragma once

// Checkpoint file layout, all integers little-endian:
//   "FOVCKPT1" | u32 version | str config | u64 epoch | str rng_state |
//   u32 count | count x (str name | u32 rank | rank x u64 dim | f64 values)
// where str is u32 length + bytes.

#include <bit>
#include <cstring>
#include <filesystem>
#include <map>

#include "foveal/graph.hpp"
#include "foveal/image_io.hpp"

namespace foveal {

inline constexpr char kCheckpointMagic[9] = "FOVCKPT1";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::string config;
  std::uint64_t epoch = 0;
  std::string rng_state;
  std::vector<std::pair<std::string, Tensor>> tensors;

  bool has(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return true;
    return false;
  }

  const Tensor& get(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return t;
    throw Error("checkpoint has no tensor '" + name + "'");
  }

  void put(std::string name, Tensor t) {
    if (has(name)) throw Error("duplicate checkpoint tensor '" + name + "'");
    tensors.emplace_back(std::move(name), std::move(t));
  }

  void put_all(const ParameterSet& params) {
    for (const auto& p : params.all()) put(p->name, p->value);
  }

  // Names starting with `prefix`.
  std::vector<std::string> names_with_prefix(const std::string& prefix) const {
    std::vector<std::string> out;
    for (const auto& [n, t] : tensors)
      if (n.starts_with(prefix)) out.push_back(n);
    return out;
  }
};

namespace detail {

class ByteWriter {
 public:
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v), 8); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_ += s;
  }
  void raw(const char* p, std::size_t n) { out_.append(p, n); }
  std::string take() { return std::move(out_); }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  std::string out_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::string& b) : b_(b) {}
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  double f64() { return std::bit_cast<double>(le(8)); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string raw(std::size_t n) {
    need(n);
    std::string s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return b_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (b_.size() - pos_ < n) throw Error("checkpoint truncated at byte " + std::to_string(pos_));
  }
  std::uint64_t le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= std::uint64_t(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  const std::string& b_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& c) {
  detail::ByteWriter w;
  w.raw(kCheckpointMagic, 8);
  w.u32(c.version);
  w.str(c.config);
  w.u64(c.epoch);
  w.str(c.rng_state);
  w.u32(static_cast<std::uint32_t>(c.tensors.size()));
  for (const auto& [name, t] : c.tensors) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) w.u64(d);
    for (double v : t.data()) w.f64(v);
  }
  return w.take();
}

inline Checkpoint parse_checkpoint(const std::string& bytes) {
  detail::ByteReader r(bytes);
  const std::string magic = r.raw(8);
  if (magic != std::string(kCheckpointMagic, 8)) throw Error("bad checkpoint magic (expected FOVCKPT1)");
  Checkpoint c;
  c.version = r.u32();
  if (c.version != kCheckpointVersion)
    throw Error("checkpoint version " + std::to_string(c.version) + " unsupported (expected " +
                std::to_string(kCheckpointVersion) + ")");
  c.config = r.str();
  c.epoch = r.u64();
  c.rng_state = r.str();
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str();
    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > 8) throw Error("checkpoint tensor '" + name + "' has invalid rank " + std::to_string(rank));
    Shape shape;
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape.push_back(static_cast<std::size_t>(r.u64()));
      if (shape.back() == 0 || shape.back() > r.remaining()) throw Error("checkpoint tensor '" + name + "' is corrupt");
      n *= shape.back();
    }
    if (n > r.remaining() / 8) throw Error("checkpoint truncated in tensor '" + name + "'");
    std::vector<double> values(n);
    for (double& v : values) v = r.f64();
    c.put(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  if (r.remaining() != 0) throw Error("checkpoint has " + std::to_string(r.remaining()) + " trailing bytes");
  return c;
}

// Written to a sibling temp file, then renamed over the target.
inline void save_checkpoint(const fs::path& path, const Checkpoint& c) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  write_file(tmp, serialize_checkpoint(c));
  fs::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const fs::path& path) {
  if (!fs::exists(path)) throw Error("checkpoint " + path.string() + " not found");
  return parse_checkpoint(read_file(path));
}

// Copies every parameter of `params` from the checkpoint. All names and
// shapes are checked before anything is written.
inline void restore_parameters(const Checkpoint& c, ParameterSet& params) {
  for (const auto& p : params.all()) {
    if (!c.has(p->name)) throw Error("checkpoint lacks parameter '" + p->name + "'");
    const Tensor& t = c.get(p->name);
    if (t.shape() != p->value.shape())
      throw Error("checkpoint parameter '" + p->name + "' has shape " + shape_str(t.shape()) + ", expected " +
                  shape_str(p->value.shape()));
  }
  for (const auto& p : params.all()) p->value = c.get(p->name);
}

}  // namespace foveal
