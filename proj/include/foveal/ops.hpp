#pragma once

// Differentiable operations recorded on a Graph. Every op validates shapes
// eagerly and throws foveal::Error naming the offending shapes.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "foveal/graph.hpp"

namespace foveal {

enum class PoolKind { max, avg };
enum class Activation { relu, tanh };

namespace detail {

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw Error(msg);
}

// Output extent of a sliding window; throws when the window does not fit.
inline std::size_t window_out(std::size_t in, std::size_t window, std::size_t stride,
                              std::size_t pad, const char* what) {
  require(stride >= 1, std::string(what) + ": stride must be positive");
  require(window >= 1 && window <= in + 2 * pad,
          std::string(what) + ": window " + std::to_string(window) +
              " larger than padded input " + std::to_string(in + 2 * pad));
  return (in + 2 * pad - window) / stride + 1;
}

// Output indices o with 0 <= o*stride + k - pad < in, as a half-open range.
inline std::pair<long, long> valid_range(long in, long out, long k, long stride, long pad) {
  long lo = 0;
  while (lo < out && lo * stride + k - pad < 0) ++lo;
  long hi = out;
  while (hi > lo && (hi - 1) * stride + k - pad >= in) --hi;
  return {lo, hi};
}

}  // namespace detail

// out[b,o] = sum_i x[b,i] * w[i,o] (+ bias[o]).
inline NodeId fully_connected(Graph& g, NodeId x, NodeId w, std::optional<NodeId> bias = {}) {
  const Tensor& X = g.value(x);
  const Tensor& W = g.value(w);
  detail::require(X.rank() == 2 && W.rank() == 2 && X.dim(1) == W.dim(0),
                  "fully_connected: input " + shape_str(X.shape()) + " does not conform to weights " +
                      shape_str(W.shape()));
  const std::size_t B = X.dim(0), I = X.dim(1), O = W.dim(1);
  if (bias) {
    const Tensor& b = g.value(*bias);
    detail::require(b.rank() == 1 && b.dim(0) == O,
                    "fully_connected: bias " + shape_str(b.shape()) + " does not conform to weights " +
                        shape_str(W.shape()));
  }
  Tensor out({B, O});
  for (std::size_t bi = 0; bi < B; ++bi) {
    double* orow = out.raw() + bi * O;
    const double* xrow = X.raw() + bi * I;
    for (std::size_t i = 0; i < I; ++i) {
      const double a = xrow[i];
      if (a == 0.0) continue;
      const double* wrow = W.raw() + i * O;
      for (std::size_t o = 0; o < O; ++o) orow[o] += a * wrow[o];
    }
    if (bias) {
      const double* bv = g.value(*bias).raw();
      for (std::size_t o = 0; o < O; ++o) orow[o] += bv[o];
    }
  }
  std::vector<NodeId> inputs{x, w};
  if (bias) inputs.push_back(*bias);
  return g.record("fully_connected", std::move(out), inputs,
                  [x, w, bias, B, I, O](Graph& g, const Tensor& dy) {
                    const Tensor& X = g.value(x);
                    const Tensor& W = g.value(w);
                    if (g.requires_grad(x)) {
                      Tensor& dx = g.slot(x);
                      for (std::size_t bi = 0; bi < B; ++bi) {
                        const double* dyr = dy.raw() + bi * O;
                        for (std::size_t i = 0; i < I; ++i) {
                          const double* wrow = W.raw() + i * O;
                          double s = 0.0;
                          for (std::size_t o = 0; o < O; ++o) s += dyr[o] * wrow[o];
                          dx[bi * I + i] += s;
                        }
                      }
                    }
                    if (g.requires_grad(w)) {
                      Tensor& dw = g.slot(w);
                      for (std::size_t bi = 0; bi < B; ++bi) {
                        const double* dyr = dy.raw() + bi * O;
                        for (std::size_t i = 0; i < I; ++i) {
                          const double a = X[bi * I + i];
                          if (a == 0.0) continue;
                          double* dwrow = dw.raw() + i * O;
                          for (std::size_t o = 0; o < O; ++o) dwrow[o] += a * dyr[o];
                        }
                      }
                    }
                    if (bias && g.requires_grad(*bias)) {
                      Tensor& db = g.slot(*bias);
                      for (std::size_t bi = 0; bi < B; ++bi)
                        for (std::size_t o = 0; o < O; ++o) db[o] += dy[bi * O + o];
                    }
                  });
}

// Cross-correlation with zero padding. Each output sums its terms in
// (channel, ky, kx) order starting from 0, then adds the bias.
inline NodeId conv2d(Graph& g, NodeId x, NodeId k, std::size_t stride, std::size_t padding,
                     std::optional<NodeId> bias = {}) {
  const Tensor& X = g.value(x);
  const Tensor& K = g.value(k);
  detail::require(X.rank() == 4 && K.rank() == 4 && X.dim(1) == K.dim(1),
                  "conv2d: input " + shape_str(X.shape()) + " does not conform to kernels " +
                      shape_str(K.shape()));
  const std::size_t B = X.dim(0), C = X.dim(1), H = X.dim(2), W = X.dim(3);
  const std::size_t KO = K.dim(0), KH = K.dim(2), KW = K.dim(3);
  const std::size_t OH = detail::window_out(H, KH, stride, padding, "conv2d");
  const std::size_t OW = detail::window_out(W, KW, stride, padding, "conv2d");
  if (bias) {
    const Tensor& b = g.value(*bias);
    detail::require(b.rank() == 1 && b.dim(0) == KO,
                    "conv2d: bias " + shape_str(b.shape()) + " does not conform to kernels " +
                        shape_str(K.shape()));
  }
  const long s = static_cast<long>(stride), p = static_cast<long>(padding);

  struct Ranges {
    std::vector<std::pair<long, long>> rows, cols;
  } ranges;
  for (std::size_t ky = 0; ky < KH; ++ky)
    ranges.rows.push_back(detail::valid_range(long(H), long(OH), long(ky), s, p));
  for (std::size_t kx = 0; kx < KW; ++kx)
    ranges.cols.push_back(detail::valid_range(long(W), long(OW), long(kx), s, p));

  Tensor out({B, KO, OH, OW});
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t ko = 0; ko < KO; ++ko) {
      double* oplane = out.raw() + ((b * KO + ko) * OH) * OW;
      for (std::size_t c = 0; c < C; ++c) {
        const double* iplane = X.raw() + ((b * C + c) * H) * W;
        const double* kern = K.raw() + ((ko * C + c) * KH) * KW;
        for (std::size_t ky = 0; ky < KH; ++ky) {
          const auto [oy0, oy1] = ranges.rows[ky];
          for (std::size_t kx = 0; kx < KW; ++kx) {
            const double wv = kern[ky * KW + kx];
            const auto [ox0, ox1] = ranges.cols[kx];
            for (long oy = oy0; oy < oy1; ++oy) {
              const double* irow = iplane + (oy * s + long(ky) - p) * long(W) + long(kx) - p;
              double* orow = oplane + oy * long(OW);
              if (s == 1) {
                for (long ox = ox0; ox < ox1; ++ox) orow[ox] += wv * irow[ox];
              } else {
                for (long ox = ox0; ox < ox1; ++ox) orow[ox] += wv * irow[ox * s];
              }
            }
          }
        }
      }
      if (bias) {
        const double bv = g.value(*bias)[ko];
        for (std::size_t i = 0; i < OH * OW; ++i) oplane[i] += bv;
      }
    }
  }

  std::vector<NodeId> inputs{x, k};
  if (bias) inputs.push_back(*bias);
  return g.record(
      "conv2d", std::move(out), inputs,
      [=, ranges = std::move(ranges)](Graph& g, const Tensor& dy) {
        const bool need_x = g.requires_grad(x), need_k = g.requires_grad(k);
        const Tensor& X = g.value(x);
        const Tensor& K = g.value(k);
        Tensor* dx = need_x ? &g.slot(x) : nullptr;
        Tensor* dk = need_k ? &g.slot(k) : nullptr;
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t ko = 0; ko < KO; ++ko) {
            const double* gplane = dy.raw() + ((b * KO + ko) * OH) * OW;
            for (std::size_t c = 0; c < C; ++c) {
              const std::size_t ioff = ((b * C + c) * H) * W;
              const std::size_t koff = ((ko * C + c) * KH) * KW;
              for (std::size_t ky = 0; ky < KH; ++ky) {
                const auto [oy0, oy1] = ranges.rows[ky];
                for (std::size_t kx = 0; kx < KW; ++kx) {
                  const auto [ox0, ox1] = ranges.cols[kx];
                  const double wv = K[koff + ky * KW + kx];
                  double acc = 0.0;
                  for (long oy = oy0; oy < oy1; ++oy) {
                    const long rowoff = (oy * s + long(ky) - p) * long(W) + long(kx) - p;
                    const double* grow = gplane + oy * long(OW);
                    if (need_k) {
                      const double* irow = X.raw() + ioff + rowoff;
                      for (long ox = ox0; ox < ox1; ++ox) acc += grow[ox] * irow[ox * s];
                    }
                    if (need_x) {
                      double* drow = dx->raw() + ioff + rowoff;
                      for (long ox = ox0; ox < ox1; ++ox) drow[ox * s] += wv * grow[ox];
                    }
                  }
                  if (need_k) (*dk)[koff + ky * KW + kx] += acc;
                }
              }
            }
          }
        }
        if (bias && g.requires_grad(*bias)) {
          Tensor& db = g.slot(*bias);
          for (std::size_t b = 0; b < B; ++b)
            for (std::size_t ko = 0; ko < KO; ++ko) {
              const double* gplane = dy.raw() + ((b * KO + ko) * OH) * OW;
              double acc = 0.0;
              for (std::size_t i = 0; i < OH * OW; ++i) acc += gplane[i];
              db[ko] += acc;
            }
        }
      });
}

// Max or mean over square windows, no padding. Averages divide the
// in-order window sum by window*window.
inline NodeId pool(Graph& g, NodeId x, PoolKind kind, std::size_t window, std::size_t stride) {
  const Tensor& X = g.value(x);
  detail::require(X.rank() == 4, "pool: expected 4-d input, got " + shape_str(X.shape()));
  const std::size_t B = X.dim(0), C = X.dim(1), H = X.dim(2), W = X.dim(3);
  detail::require(window <= H && window <= W,
                  "pool: window " + std::to_string(window) + " larger than input " +
                      shape_str(X.shape()));
  const std::size_t OH = detail::window_out(H, window, stride, 0, "pool");
  const std::size_t OW = detail::window_out(W, window, stride, 0, "pool");
  Tensor out({B, C, OH, OW});
  std::vector<std::size_t> argmax;
  if (kind == PoolKind::max) argmax.resize(out.size());
  const double inv = 1.0 / static_cast<double>(window * window);
  for (std::size_t plane = 0; plane < B * C; ++plane) {
    const double* ip = X.raw() + plane * H * W;
    for (std::size_t oy = 0; oy < OH; ++oy)
      for (std::size_t ox = 0; ox < OW; ++ox) {
        const std::size_t oi = (plane * OH + oy) * OW + ox;
        if (kind == PoolKind::max) {
          double best = -std::numeric_limits<double>::infinity();
          std::size_t best_at = 0;
          for (std::size_t wy = 0; wy < window; ++wy)
            for (std::size_t wx = 0; wx < window; ++wx) {
              const std::size_t at = (oy * stride + wy) * W + ox * stride + wx;
              if (ip[at] > best) {
                best = ip[at];
                best_at = at;
              }
            }
          out[oi] = best;
          argmax[oi] = plane * H * W + best_at;
        } else {
          double sum = 0.0;
          for (std::size_t wy = 0; wy < window; ++wy)
            for (std::size_t wx = 0; wx < window; ++wx)
              sum += ip[(oy * stride + wy) * W + ox * stride + wx];
          out[oi] = sum / static_cast<double>(window * window);
        }
      }
  }
  return g.record(kind == PoolKind::max ? "max_pool" : "avg_pool", std::move(out), {x},
                  [=, argmax = std::move(argmax)](Graph& g, const Tensor& dy) {
                    if (!g.requires_grad(x)) return;
                    Tensor& dx = g.slot(x);
                    if (kind == PoolKind::max) {
                      for (std::size_t i = 0; i < dy.size(); ++i) dx[argmax[i]] += dy[i];
                      return;
                    }
                    for (std::size_t plane = 0; plane < B * C; ++plane)
                      for (std::size_t oy = 0; oy < OH; ++oy)
                        for (std::size_t ox = 0; ox < OW; ++ox) {
                          const double gv = dy[(plane * OH + oy) * OW + ox] * inv;
                          for (std::size_t wy = 0; wy < window; ++wy)
                            for (std::size_t wx = 0; wx < window; ++wx)
                              dx[plane * H * W + (oy * stride + wy) * W + ox * stride + wx] += gv;
                        }
                  });
}

inline NodeId activation(Graph& g, NodeId x, Activation kind) {
  Tensor out = g.value(x);
  if (kind == Activation::relu) {
    for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  } else {
    for (double& v : out.data()) v = std::tanh(v);
  }
  const NodeId self = g.size();
  return g.record(kind == Activation::relu ? "relu" : "tanh", std::move(out), {x},
                  [x, self, kind](Graph& g, const Tensor& dy) {
                    if (!g.requires_grad(x)) return;
                    Tensor& dx = g.slot(x);
                    const Tensor& y = g.value(self);
                    if (kind == Activation::relu) {
                      for (std::size_t i = 0; i < dy.size(); ++i)
                        if (y[i] > 0.0) dx[i] += dy[i];
                    } else {
                      for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * (1.0 - y[i] * y[i]);
                    }
                  });
}

namespace detail {

struct AxisSplit {
  std::size_t outer = 1, inner = 1;
};

inline AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace detail

inline NodeId concat(Graph& g, const std::vector<NodeId>& parts, std::size_t axis) {
  detail::require(!parts.empty(), "concat: no inputs");
  const Shape& first = g.value(parts[0]).shape();
  detail::require(axis < first.size(), "concat: axis " + std::to_string(axis) +
                                           " out of range for " + shape_str(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<std::size_t> widths;
  for (NodeId id : parts) {
    const Shape& s = g.value(id).shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i)
      if (i != axis && s[i] != first[i]) ok = false;
    detail::require(ok, "concat: shape " + shape_str(s) + " conflicts with " + shape_str(first) +
                            " on axis " + std::to_string(axis));
    out_shape[axis] += s[axis];
    widths.push_back(s[axis]);
  }
  const auto split = detail::split_at(out_shape, axis);
  Tensor out(out_shape);
  const std::size_t out_row = out_shape[axis] * split.inner;
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = g.value(parts[k]);
    const std::size_t chunk = widths[k] * split.inner;
    for (std::size_t o = 0; o < split.outer; ++o)
      std::copy_n(v.raw() + o * chunk, chunk, out.raw() + o * out_row + offset);
    offset += chunk;
  }
  return g.record("concat", std::move(out), parts,
                  [parts, widths, split, out_row](Graph& g, const Tensor& dy) {
                    std::size_t offset = 0;
                    for (std::size_t k = 0; k < parts.size(); ++k) {
                      const std::size_t chunk = widths[k] * split.inner;
                      if (g.requires_grad(parts[k])) {
                        Tensor& dx = g.slot(parts[k]);
                        for (std::size_t o = 0; o < split.outer; ++o)
                          for (std::size_t i = 0; i < chunk; ++i)
                            dx[o * chunk + i] += dy[o * out_row + offset + i];
                      }
                      offset += chunk;
                    }
                  });
}

// Entries [begin, end) along axis.
inline NodeId slice(Graph& g, NodeId x, std::size_t axis, std::size_t begin, std::size_t end) {
  const Shape& in_shape = g.value(x).shape();
  detail::require(axis < in_shape.size() && begin < end && end <= in_shape[axis],
                  "slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                      ") invalid for " + shape_str(in_shape) + " axis " + std::to_string(axis));
  Shape out_shape = in_shape;
  out_shape[axis] = end - begin;
  const auto split = detail::split_at(in_shape, axis);
  const std::size_t in_row = in_shape[axis] * split.inner;
  const std::size_t chunk = (end - begin) * split.inner;
  const std::size_t offset = begin * split.inner;
  Tensor out(out_shape);
  const Tensor& v = g.value(x);
  for (std::size_t o = 0; o < split.outer; ++o)
    std::copy_n(v.raw() + o * in_row + offset, chunk, out.raw() + o * chunk);
  return g.record("slice", std::move(out), {x},
                  [x, split, in_row, chunk, offset](Graph& g, const Tensor& dy) {
                    if (!g.requires_grad(x)) return;
                    Tensor& dx = g.slot(x);
                    for (std::size_t o = 0; o < split.outer; ++o)
                      for (std::size_t i = 0; i < chunk; ++i)
                        dx[o * in_row + offset + i] += dy[o * chunk + i];
                  });
}

inline NodeId reshape(Graph& g, NodeId x, Shape shape) {
  Tensor out = g.value(x).reshaped(std::move(shape));
  return g.record("reshape", std::move(out), {x}, [x](Graph& g, const Tensor& dy) {
    if (!g.requires_grad(x)) return;
    Tensor& dx = g.slot(x);
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
  });
}

inline NodeId add(Graph& g, NodeId a, NodeId b) {
  const Tensor& A = g.value(a);
  const Tensor& Bv = g.value(b);
  detail::require(A.shape() == Bv.shape(),
                  "add: shape " + shape_str(A.shape()) + " vs " + shape_str(Bv.shape()));
  Tensor out = A;
  out += Bv;
  return g.record("add", std::move(out), {a, b}, [a, b](Graph& g, const Tensor& dy) {
    if (g.requires_grad(a)) g.slot(a) += dy;
    if (g.requires_grad(b)) g.slot(b) += dy;
  });
}

inline NodeId scale(Graph& g, NodeId x, double factor) {
  Tensor out = g.value(x);
  out *= factor;
  return g.record("scale", std::move(out), {x}, [x, factor](Graph& g, const Tensor& dy) {
    if (!g.requires_grad(x)) return;
    Tensor& dx = g.slot(x);
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += factor * dy[i];
  });
}

// Elementwise clamp; the gradient passes only strictly inside (lo, hi).
inline NodeId clamp(Graph& g, NodeId x, double lo, double hi) {
  Tensor out = g.value(x);
  for (double& v : out.data()) v = std::clamp(v, lo, hi);
  return g.record("clamp", std::move(out), {x}, [x, lo, hi](Graph& g, const Tensor& dy) {
    if (!g.requires_grad(x)) return;
    const Tensor& v = g.value(x);
    Tensor& dx = g.slot(x);
    for (std::size_t i = 0; i < dy.size(); ++i)
      if (v[i] > lo && v[i] < hi) dx[i] += dy[i];
  });
}

struct CrossEntropy {
  NodeId loss;
  Tensor probs;
};

// Row softmax probabilities with max subtraction.
inline Tensor softmax_rows(const Tensor& logits) {
  detail::require(logits.rank() == 2, "softmax: expected B x K logits, got " + shape_str(logits.shape()));
  const std::size_t B = logits.dim(0), K = logits.dim(1);
  Tensor probs({B, K});
  for (std::size_t b = 0; b < B; ++b) {
    const double* row = logits.raw() + b * K;
    double m = row[0];
    for (std::size_t k = 1; k < K; ++k) m = std::max(m, row[k]);
    double z = 0.0;
    for (std::size_t k = 0; k < K; ++k) z += std::exp(row[k] - m);
    for (std::size_t k = 0; k < K; ++k) probs[b * K + k] = std::exp(row[k] - m) / z;
  }
  return probs;
}

// Mean over the batch of -log softmax(logits)[label].
inline CrossEntropy softmax_cross_entropy(Graph& g, NodeId logits, std::span<const int> labels) {
  const Tensor& L = g.value(logits);
  detail::require(L.rank() == 2 && L.dim(0) == labels.size(),
                  "softmax_cross_entropy: logits " + shape_str(L.shape()) + " vs " +
                      std::to_string(labels.size()) + " labels");
  const std::size_t B = L.dim(0), K = L.dim(1);
  for (int y : labels)
    detail::require(y >= 0 && static_cast<std::size_t>(y) < K,
                    "softmax_cross_entropy: label " + std::to_string(y) + " outside [0," +
                        std::to_string(K) + ")");
  Tensor probs = softmax_rows(L);
  double loss = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    const double* row = L.raw() + b * K;
    double m = row[0];
    for (std::size_t k = 1; k < K; ++k) m = std::max(m, row[k]);
    double z = 0.0;
    for (std::size_t k = 0; k < K; ++k) z += std::exp(row[k] - m);
    loss += (std::log(z) + m) - row[labels[b]];
  }
  loss /= static_cast<double>(B);
  std::vector<int> y(labels.begin(), labels.end());
  const NodeId id = g.record("softmax_cross_entropy", Tensor({1}, {loss}), {logits},
                             [logits, probs, y, B, K](Graph& g, const Tensor& dy) {
                               if (!g.requires_grad(logits)) return;
                               Tensor& dl = g.slot(logits);
                               const double s = dy[0] / static_cast<double>(B);
                               for (std::size_t b = 0; b < B; ++b)
                                 for (std::size_t k = 0; k < K; ++k) {
                                   const double t = static_cast<std::size_t>(y[b]) == k ? 1.0 : 0.0;
                                   dl[b * K + k] += s * (probs[b * K + k] - t);
                                 }
                             });
  return {id, std::move(probs)};
}

}  // namespace foveal
