#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include "foveal/tensor.hpp"

namespace foveal {

// Seeded generator with platform-independent distributions. The standard
// library distributions are implementation-defined, so only the engine is
// borrowed from <random>.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw Error("Rng::below requires n > 0");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  // Uniform integer in [lo, hi].
  long long between(long long lo, long long hi) {
    return lo + static_cast<long long>(below(static_cast<std::uint64_t>(hi - lo) + 1));
  }

  // Standard normal via Box-Muller; both halves are kept.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  // Derives an independent generator; advances this one by one draw.
  Rng split() { return Rng(engine_() ^ 0x9E3779B97F4A7C15ULL); }

  std::string state() const {
    std::ostringstream oss;
    oss << engine_ << ' ' << (has_spare_ ? 1 : 0) << ' ';
    oss.precision(17);
    oss << std::hexfloat << spare_;
    return oss.str();
  }

  void set_state(const std::string& s) {
    std::istringstream iss(s);
    std::mt19937_64 engine;
    int spare_flag = 0;
    std::string spare_text;
    iss >> engine >> spare_flag >> spare_text;
    if (iss.fail()) throw Error("malformed RNG state");
    engine_ = engine;
    has_spare_ = spare_flag != 0;
    spare_ = std::strtod(spare_text.c_str(), nullptr);
  }

  friend bool operator==(const Rng& a, const Rng& b) { return a.state() == b.state(); }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace foveal
