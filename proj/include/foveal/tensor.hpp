#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace foveal {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& shape) {
  std::ostringstream oss;
  oss << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) oss << 'x';
    oss << shape[i];
  }
  oss << ']';
  return oss.str();
}

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

// Dense row-major array of doubles. Copying copies the data.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
    check_dims();
  }

  Tensor(Shape shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    check_dims();
    if (data_.size() != shape_size(shape_)) {
      throw Error("tensor data length " + std::to_string(data_.size()) +
                  " does not match shape " + shape_str(shape_));
    }
  }

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

  static Tensor vector(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor({n}, std::move(values));
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double* raw() { return data_.data(); }
  const double* raw() const { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  template <typename... Idx>
  double& operator()(Idx... idx) {
    return data_[offset(idx...)];
  }
  template <typename... Idx>
  double operator()(Idx... idx) const {
    return data_[offset(idx...)];
  }

  Tensor reshaped(Shape shape) const {
    if (shape_size(shape) != size()) {
      throw Error("cannot reshape " + shape_str(shape_) + " to " +
                  shape_str(shape));
    }
    return Tensor(std::move(shape), data_);
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  bool bit_equal(const Tensor& other) const {
    return shape_ == other.shape_ &&
           (data_.empty() ||
            std::memcmp(data_.data(), other.data_.data(),
                        data_.size() * sizeof(double)) == 0);
  }

  Tensor& operator+=(const Tensor& other) {
    require_same_shape(other, "+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
  }

  Tensor& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }

  void require_same_shape(const Tensor& other, const char* what) const {
    if (shape_ != other.shape_) {
      throw Error(std::string(what) + ": shape mismatch " + shape_str(shape_) +
                  " vs " + shape_str(other.shape_));
    }
  }

 private:
  void check_dims() const {
    for (std::size_t d : shape_)
      if (d == 0) throw Error("tensor dimensions must be positive, got " + shape_str(shape_));
  }

  template <typename... Idx>
  std::size_t offset(Idx... idx) const {
    const std::size_t index[] = {static_cast<std::size_t>(idx)...};
    std::size_t off = 0;
    for (std::size_t i = 0; i < sizeof...(Idx); ++i) off = off * shape_[i] + index[i];
    return off;
  }

  Shape shape_;
  std::vector<double> data_;
};

// FNV-1a over the raw bytes of the values; used to assert bit-identity.
inline std::uint64_t checksum(const Tensor& t, std::uint64_t seed = 1469598103934665603ULL) {
  std::uint64_t h = seed;
  const auto* bytes = reinterpret_cast<const unsigned char*>(t.raw());
  for (std::size_t i = 0; i < t.size() * sizeof(double); ++i) {
    h ^= bytes[i];
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace foveal
