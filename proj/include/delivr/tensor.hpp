#pragma once

#include <Eigen/Core>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "delivr/common.hpp"

namespace delivr {

/// Shape mismatch; message names the operation and both shapes.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

/// Persistent trainable parameter. Lives outside any graph; graphs reference
/// it through leaf nodes and the trainer accumulates into `grad`.
template <class S>
struct Param {
  std::string name;
  Shape shape;
  std::vector<S> value;
  std::vector<S> grad;

  Param() = default;
  Param(std::string n, Shape sh) : name(std::move(n)), shape(std::move(sh)) {
    value.assign(shape_numel(shape), S(0));
    grad.assign(value.size(), S(0));
  }
  std::size_t numel() const { return value.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), S(0)); }
};

template <class S>
class Graph;

/// Handle to a node in a Graph. Cheap to copy; invalidated when the graph dies.
template <class S>
class Tensor {
 public:
  Tensor() = default;
  const Shape& shape() const;
  const std::vector<S>& value() const;
  const std::vector<S>& grad() const;
  bool requires_grad() const;
  std::size_t numel() const { return shape_numel(shape()); }
  S item() const;
  bool valid() const { return g_ != nullptr; }
  Graph<S>* graph() const { return g_; }

 private:
  friend class Graph<S>;
  Tensor(Graph<S>* g, std::size_t i) : g_(g), i_(i) {}
  Graph<S>* g_ = nullptr;
  std::size_t i_ = 0;
};

/// Single-use reverse-mode tape. Records operations in execution order;
/// backward() traverses the tape once in reverse.
template <class S>
class Graph {
  using EMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MapM = Eigen::Map<EMat>;
  using MapC = Eigen::Map<const EMat>;

  struct Node {
    Shape shape;
    std::vector<S> val;
    std::vector<S> grad;  // allocated iff needs_grad
    bool needs_grad = false;
    std::function<void(Graph&)> back;  // empty for leaves
    Param<S>* leaf = nullptr;
  };

 public:
  using T = Tensor<S>;

  // ---- leaves ----

  T param(Param<S>& p) {
    T t = make(p.shape, true);
    node(t).val = p.value;
    node(t).leaf = &p;
    return t;
  }

  T constant(Shape shape, std::vector<S> data) {
    if (shape_numel(shape) != data.size())
      throw ShapeError("constant: shape " + shape_str(shape) + " does not match data length " +
                       std::to_string(data.size()));
    T t = make(std::move(shape), false);
    node(t).val = std::move(data);
    return t;
  }

  T constant_scalar(S v) { return constant({1}, {v}); }

  template <class D>
  T constant_cast(Shape shape, const std::vector<D>& data) {
    std::vector<S> cast(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) cast[i] = static_cast<S>(data[i]);
    return constant(std::move(shape), std::move(cast));
  }

  // ---- elementwise ----

  T add(T a, T b) { return binary("add", a, b, [](S x, S y) { return x + y; }, 1, 1); }
  T sub(T a, T b) { return binary("sub", a, b, [](S x, S y) { return x - y; }, 1, -1); }

  T mul(T a, T b) {
    check_owned(a), check_owned(b);
    if (shape(a) != shape(b))
      throw ShapeError("mul: shape mismatch " + shape_str(shape(a)) + " vs " +
                       shape_str(shape(b)));
    T out = make(shape(a), needs(a) || needs(b));
    auto& o = node(out).val;
    const auto &va = node(a).val, &vb = node(b).val;
    o.resize(va.size());
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = va[i] * vb[i];
    if (node(out).needs_grad)
      node(out).back = [ia = a.i_, ib = b.i_, io = out.i_](Graph& g) {
        const auto& go = g.nodes_[io].grad;
        const auto &va = g.nodes_[ia].val, &vb = g.nodes_[ib].val;
        if (g.nodes_[ia].needs_grad) {
          auto& ga = g.nodes_[ia].grad;
          for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * vb[i];
        }
        if (g.nodes_[ib].needs_grad) {
          auto& gb = g.nodes_[ib].grad;
          for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * va[i];
        }
      };
    return out;
  }

  T mul_scalar(T a, S c) {
    return unary("mul_scalar", a, [c](S x) { return c * x; },
                 [c](S, S) { return c; });
  }

  T add_scalar(T a, S c) {
    return unary("add_scalar", a, [c](S x) { return x + c; }, [](S, S) { return S(1); });
  }

  T tanh_(T a) {
    return unary("tanh", a, [](S x) { return std::tanh(x); },
                 [](S, S y) { return S(1) - y * y; });
  }
  T sin_(T a) {
    return unary("sin", a, [](S x) { return std::sin(x); },
                 [](S x, S) { return std::cos(x); });
  }
  T cos_(T a) {
    return unary("cos", a, [](S x) { return std::cos(x); },
                 [](S x, S) { return -std::sin(x); });
  }
  T exp_(T a) {
    return unary("exp", a, [](S x) { return std::exp(x); }, [](S, S y) { return y; });
  }
  T relu(T a) {
    return unary("relu", a, [](S x) { return x > S(0) ? x : S(0); },
                 [](S x, S) { return x > S(0) ? S(1) : S(0); });
  }
  /// |x| with subgradient 0 at the kink.
  T abs_(T a) {
    return unary("abs", a, [](S x) { return std::abs(x); },
                 [](S x, S) { return x > S(0) ? S(1) : (x < S(0) ? S(-1) : S(0)); });
  }
  /// Principal-branch angle wrap; derivative 1 almost everywhere.
  T wrap_angle(T a) {
    return unary("wrap_angle", a,
                 [](S x) { return static_cast<S>(wrap_pi(static_cast<double>(x))); },
                 [](S, S) { return S(1); });
  }

  // ---- linear algebra ----

  T matmul(T a, T b) {
    check_owned(a), check_owned(b);
    if (shape(a).size() != 2 || shape(b).size() != 2 || shape(a)[1] != shape(b)[0])
      throw ShapeError("matmul: incompatible shapes " + shape_str(shape(a)) + " vs " +
                       shape_str(shape(b)));
    const std::size_t m = shape(a)[0], k = shape(a)[1], n = shape(b)[1];
    T out = make({m, n}, needs(a) || needs(b));
    node(out).val.resize(m * n);
    MapM(node(out).val.data(), m, n).noalias() =
        MapC(node(a).val.data(), m, k) * MapC(node(b).val.data(), k, n);
    if (node(out).needs_grad)
      node(out).back = [ia = a.i_, ib = b.i_, io = out.i_, m, k, n](Graph& g) {
        MapC go(g.nodes_[io].grad.data(), m, n);
        if (g.nodes_[ia].needs_grad)
          MapM(g.nodes_[ia].grad.data(), m, k).noalias() +=
              go * MapC(g.nodes_[ib].val.data(), k, n).transpose();
        if (g.nodes_[ib].needs_grad)
          MapM(g.nodes_[ib].grad.data(), k, n).noalias() +=
              MapC(g.nodes_[ia].val.data(), m, k).transpose() * go;
      };
    return out;
  }

  T transpose(T a) {
    check_owned(a);
    if (shape(a).size() != 2)
      throw ShapeError("transpose: need rank-2, got " + shape_str(shape(a)));
    const std::size_t m = shape(a)[0], n = shape(a)[1];
    T out = make({n, m}, needs(a));
    node(out).val.resize(m * n);
    MapM(node(out).val.data(), n, m) = MapC(node(a).val.data(), m, n).transpose();
    if (node(out).needs_grad)
      node(out).back = [ia = a.i_, io = out.i_, m, n](Graph& g) {
        MapM(g.nodes_[ia].grad.data(), m, n) +=
            MapC(g.nodes_[io].grad.data(), n, m).transpose();
      };
    return out;
  }

  /// Row-wise softmax with max subtraction; last axis of rank-1 or rank-2 input.
  T softmax(T a) {
    check_owned(a);
    const auto [m, n] = rows_cols("softmax", a);
    T out = make(shape(a), needs(a));
    auto& o = node(out).val;
    const auto& v = node(a).val;
    o.resize(v.size());
    for (std::size_t r = 0; r < m; ++r) {
      const S* x = v.data() + r * n;
      S* y = o.data() + r * n;
      S mx = x[0];
      for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
      S sum = S(0);
      for (std::size_t j = 0; j < n; ++j) {
        y[j] = std::exp(x[j] - mx);
        sum += y[j];
      }
      for (std::size_t j = 0; j < n; ++j) y[j] /= sum;
    }
    if (node(out).needs_grad)
      node(out).back = [ia = a.i_, io = out.i_, m, n](Graph& g) {
        const auto& y = g.nodes_[io].val;
        const auto& gy = g.nodes_[io].grad;
        auto& gx = g.nodes_[ia].grad;
        for (std::size_t r = 0; r < m; ++r) {
          S dot = S(0);
          for (std::size_t j = 0; j < n; ++j) dot += gy[r * n + j] * y[r * n + j];
          for (std::size_t j = 0; j < n; ++j)
            gx[r * n + j] += y[r * n + j] * (gy[r * n + j] - dot);
        }
      };
    return out;
  }

  /// Layer norm over the last axis with learned gain/bias.
  T layer_norm(T x, T gamma, T beta, S eps = S(1e-5)) {
    check_owned(x), check_owned(gamma), check_owned(beta);
    const auto [m, d] = rows_cols("layer_norm", x);
    if (gamma.numel() != d || beta.numel() != d)
      throw ShapeError("layer_norm: gain/bias " + shape_str(shape(gamma)) + "/" +
                       shape_str(shape(beta)) + " do not match row width " + std::to_string(d));
    T out = make(shape(x), needs(x) || needs(gamma) || needs(beta));
    auto& o = node(out).val;
    const auto &v = node(x).val, &gm = node(gamma).val, &bt = node(beta).val;
    o.resize(v.size());
    std::vector<S> xhat(v.size()), inv_std(m);
    for (std::size_t r = 0; r < m; ++r) {
      const S* row = v.data() + r * d;
      S mu = S(0);
      for (std::size_t j = 0; j < d; ++j) mu += row[j];
      mu /= S(d);
      S var = S(0);
      for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
      var /= S(d);
      S is = S(1) / std::sqrt(var + eps);
      inv_std[r] = is;
      for (std::size_t j = 0; j < d; ++j) {
        xhat[r * d + j] = (row[j] - mu) * is;
        o[r * d + j] = gm[j] * xhat[r * d + j] + bt[j];
      }
    }
    if (node(out).needs_grad)
      node(out).back = [ix = x.i_, ig = gamma.i_, ib = beta.i_, io = out.i_, m, d,
                        xhat = std::move(xhat), inv_std = std::move(inv_std)](Graph& g) {
        const auto& gy = g.nodes_[io].grad;
        const auto& gm = g.nodes_[ig].val;
        for (std::size_t r = 0; r < m; ++r) {
          if (g.nodes_[ig].needs_grad || g.nodes_[ib].needs_grad) {
            for (std::size_t j = 0; j < d; ++j) {
              if (g.nodes_[ig].needs_grad)
                g.nodes_[ig].grad[j] += gy[r * d + j] * xhat[r * d + j];
              if (g.nodes_[ib].needs_grad) g.nodes_[ib].grad[j] += gy[r * d + j];
            }
          }
          if (g.nodes_[ix].needs_grad) {
            S mean_dxhat = S(0), mean_dxhat_xhat = S(0);
            for (std::size_t j = 0; j < d; ++j) {
              S dxh = gy[r * d + j] * gm[j];
              mean_dxhat += dxh;
              mean_dxhat_xhat += dxh * xhat[r * d + j];
            }
            mean_dxhat /= S(d);
            mean_dxhat_xhat /= S(d);
            for (std::size_t j = 0; j < d; ++j) {
              S dxh = gy[r * d + j] * gm[j];
              g.nodes_[ix].grad[r * d + j] +=
                  inv_std[r] * (dxh - mean_dxhat - xhat[r * d + j] * mean_dxhat_xhat);
            }
          }
        }
      };
    return out;
  }

  // ---- reductions ----

  T mean_all(T a) { return reduce_all(a, true); }
  T sum_all(T a) { return reduce_all(a, false); }

  // ---- structure ----

  T reshape(T a, Shape s) {
    check_owned(a);
    if (shape_numel(s) != a.numel())
      throw ShapeError("reshape: " + shape_str(shape(a)) + " to " + shape_str(s) +
                       " changes element count");
    T out = make(std::move(s), needs(a));
    node(out).val = node(a).val;
    if (node(out).needs_grad)
      node(out).back = [ia = a.i_, io = out.i_](Graph& g) {
        auto& ga = g.nodes_[ia].grad;
        const auto& go = g.nodes_[io].grad;
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
      };
    return out;
  }

  /// Contiguous row slice [r0, r0+len). Rank-1 tensors are treated as columns.
  T slice_rows(T a, std::size_t r0, std::size_t len) {
    check_owned(a);
    const auto [m, n] = rows_cols("slice_rows", a);
    if (r0 + len > m)
      throw ShapeError("slice_rows: range [" + std::to_string(r0) + "," +
                       std::to_string(r0 + len) + ") out of " + shape_str(shape(a)));
    Shape s = shape(a);
    s[0] = len;
    T out = make(std::move(s), needs(a));
    node(out).val.assign(node(a).val.begin() + r0 * n, node(a).val.begin() + (r0 + len) * n);
    if (node(out).needs_grad)
      node(out).back = [ia = a.i_, io = out.i_, r0, n](Graph& g) {
        auto& ga = g.nodes_[ia].grad;
        const auto& go = g.nodes_[io].grad;
        for (std::size_t i = 0; i < go.size(); ++i) ga[r0 * n + i] += go[i];
      };
    return out;
  }

  T slice_cols(T a, std::size_t c0, std::size_t len) {
    check_owned(a);
    if (shape(a).size() != 2)
      throw ShapeError("slice_cols: need rank-2, got " + shape_str(shape(a)));
    const std::size_t m = shape(a)[0], n = shape(a)[1];
    if (c0 + len > n)
      throw ShapeError("slice_cols: range [" + std::to_string(c0) + "," +
                       std::to_string(c0 + len) + ") out of " + shape_str(shape(a)));
    T out = make({m, len}, needs(a));
    auto& o = node(out).val;
    o.resize(m * len);
    const auto& v = node(a).val;
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t j = 0; j < len; ++j) o[r * len + j] = v[r * n + c0 + j];
    if (node(out).needs_grad)
      node(out).back = [ia = a.i_, io = out.i_, m, n, c0, len](Graph& g) {
        auto& ga = g.nodes_[ia].grad;
        const auto& go = g.nodes_[io].grad;
        for (std::size_t r = 0; r < m; ++r)
          for (std::size_t j = 0; j < len; ++j) ga[r * n + c0 + j] += go[r * len + j];
      };
    return out;
  }

  T concat_rows(const std::vector<T>& parts) { return concat(parts, /*axis=*/0); }
  T concat_cols(const std::vector<T>& parts) { return concat(parts, /*axis=*/1); }

  /// Mean over blocks of `rows/blocks` consecutive rows: [B*k, d] -> [B, d].
  T block_mean_rows(T a, std::size_t blocks) {
    check_owned(a);
    const auto [m, d] = rows_cols("block_mean_rows", a);
    if (blocks == 0 || m % blocks != 0)
      throw ShapeError("block_mean_rows: " + std::to_string(blocks) +
                       " blocks do not divide " + shape_str(shape(a)));
    const std::size_t bs = m / blocks;
    T out = make({blocks, d}, needs(a));
    auto& o = node(out).val;
    o.assign(blocks * d, S(0));
    const auto& v = node(a).val;
    for (std::size_t b = 0; b < blocks; ++b) {
      for (std::size_t r = 0; r < bs; ++r)
        for (std::size_t j = 0; j < d; ++j) o[b * d + j] += v[(b * bs + r) * d + j];
      for (std::size_t j = 0; j < d; ++j) o[b * d + j] /= S(bs);
    }
    if (node(out).needs_grad)
      node(out).back = [ia = a.i_, io = out.i_, blocks, bs, d](Graph& g) {
        auto& ga = g.nodes_[ia].grad;
        const auto& go = g.nodes_[io].grad;
        for (std::size_t b = 0; b < blocks; ++b)
          for (std::size_t r = 0; r < bs; ++r)
            for (std::size_t j = 0; j < d; ++j)
              ga[(b * bs + r) * d + j] += go[b * d + j] / S(bs);
      };
    return out;
  }

  /// Frame-to-token broadcast: [T] -> [T*n], repeating each entry n times.
  T broadcast_frames(T v, std::size_t n) {
    check_owned(v);
    if (shape(v).size() != 1)
      throw ShapeError("broadcast_frames: need rank-1, got " + shape_str(shape(v)));
    const std::size_t t = shape(v)[0];
    T out = make({t * n}, needs(v));
    auto& o = node(out).val;
    o.resize(t * n);
    const auto& val = node(v).val;
    for (std::size_t f = 0; f < t; ++f)
      for (std::size_t i = 0; i < n; ++i) o[f * n + i] = val[f];
    if (node(out).needs_grad)
      node(out).back = [iv = v.i_, io = out.i_, t, n](Graph& g) {
        auto& gv = g.nodes_[iv].grad;
        const auto& go = g.nodes_[io].grad;
        for (std::size_t f = 0; f < t; ++f)
          for (std::size_t i = 0; i < n; ++i) gv[f] += go[f * n + i];
      };
    return out;
  }

  /// Frame-pair to token-pair broadcast: [T,T] -> [T*n, T*n] by N x N blocks.
  T broadcast_frame_matrix(T m, std::size_t n) {
    check_owned(m);
    if (shape(m).size() != 2 || shape(m)[0] != shape(m)[1])
      throw ShapeError("broadcast_frame_matrix: need square rank-2, got " +
                       shape_str(shape(m)));
    const std::size_t t = shape(m)[0], tn = t * n;
    T out = make({tn, tn}, needs(m));
    auto& o = node(out).val;
    o.resize(tn * tn);
    const auto& v = node(m).val;
    for (std::size_t tf = 0; tf < t; ++tf)
      for (std::size_t sf = 0; sf < t; ++sf) {
        S x = v[tf * t + sf];
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < n; ++j) o[(tf * n + i) * tn + sf * n + j] = x;
      }
    if (node(out).needs_grad)
      node(out).back = [im = m.i_, io = out.i_, t, n, tn](Graph& g) {
        auto& gm = g.nodes_[im].grad;
        const auto& go = g.nodes_[io].grad;
        for (std::size_t tf = 0; tf < t; ++tf)
          for (std::size_t sf = 0; sf < t; ++sf) {
            S acc = S(0);
            for (std::size_t i = 0; i < n; ++i)
              for (std::size_t j = 0; j < n; ++j) acc += go[(tf * n + i) * tn + sf * n + j];
            gm[tf * t + sf] += acc;
          }
      };
    return out;
  }

  /// y = x + row vector b broadcast over rows.
  T add_rowvec(T x, T b) {
    check_owned(x), check_owned(b);
    const auto [m, n] = rows_cols("add_rowvec", x);
    if (b.numel() != n)
      throw ShapeError("add_rowvec: bias " + shape_str(shape(b)) + " does not match " +
                       shape_str(shape(x)));
    T out = make(shape(x), needs(x) || needs(b));
    auto& o = node(out).val;
    const auto &vx = node(x).val, &vb = node(b).val;
    o.resize(vx.size());
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t j = 0; j < n; ++j) o[r * n + j] = vx[r * n + j] + vb[j];
    if (node(out).needs_grad)
      node(out).back = [ix = x.i_, ib = b.i_, io = out.i_, m, n](Graph& g) {
        const auto& go = g.nodes_[io].grad;
        if (g.nodes_[ix].needs_grad) {
          auto& gx = g.nodes_[ix].grad;
          for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
        }
        if (g.nodes_[ib].needs_grad) {
          auto& gb = g.nodes_[ib].grad;
          for (std::size_t r = 0; r < m; ++r)
            for (std::size_t j = 0; j < n; ++j) gb[j] += go[r * n + j];
        }
      };
    return out;
  }

  /// Replace entries where mask != 0 with `fill`. Mask is a constant; no
  /// gradient flows through filled positions.
  T mask_fill(T x, std::shared_ptr<const std::vector<std::uint8_t>> mask, S fill) {
    check_owned(x);
    if (!mask || mask->size() != x.numel())
      throw ShapeError("mask_fill: mask length does not match " + shape_str(shape(x)));
    T out = make(shape(x), needs(x));
    auto& o = node(out).val;
    const auto& v = node(x).val;
    o.resize(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) o[i] = (*mask)[i] ? fill : v[i];
    if (node(out).needs_grad)
      node(out).back = [ix = x.i_, io = out.i_, mask](Graph& g) {
        auto& gx = g.nodes_[ix].grad;
        const auto& go = g.nodes_[io].grad;
        for (std::size_t i = 0; i < go.size(); ++i)
          if (!(*mask)[i]) gx[i] += go[i];
      };
    return out;
  }

  // ---- autodiff driver ----

  /// Populate gradients of every grad-requiring node reachable from `loss`.
  /// The tape is traversed exactly once, in reverse execution order.
  void backward(T loss) {
    check_owned(loss);
    if (loss.numel() != 1)
      throw ShapeError("backward: loss must be scalar, got " + shape_str(shape(loss)));
    if (backward_done_)
      throw std::logic_error("backward: tape already consumed; build a fresh graph");
    backward_done_ = true;
    if (!node(loss).needs_grad) return;  // nothing depends on parameters
    node(loss).grad.assign(1, S(1));
    for (std::size_t k = loss.i_ + 1; k-- > 0;) {
      if (nodes_[k].back && !nodes_[k].grad.empty()) nodes_[k].back(*this);
    }
  }

  /// Accumulate leaf gradients into their Params (caller controls ordering).
  void accumulate_param_grads(S scale = S(1)) {
    if (!backward_done_) throw std::logic_error("accumulate_param_grads: run backward first");
    for (auto& nd : nodes_) {
      if (nd.leaf && !nd.grad.empty()) {
        for (std::size_t i = 0; i < nd.grad.size(); ++i) nd.leaf->grad[i] += scale * nd.grad[i];
      }
    }
  }

  std::size_t size() const { return nodes_.size(); }
  bool backward_done() const { return backward_done_; }

 private:
  friend class Tensor<S>;

  T make(Shape shape, bool needs_grad) {
    Node nd;
    nd.shape = std::move(shape);
    nd.needs_grad = needs_grad;
    if (needs_grad) nd.grad.assign(shape_numel(nd.shape), S(0));
    nodes_.push_back(std::move(nd));
    return T(this, nodes_.size() - 1);
  }

  Node& node(T t) { return nodes_[t.i_]; }
  const Node& node(T t) const { return nodes_[t.i_]; }
  const Shape& shape(T t) const { return nodes_[t.i_].shape; }
  bool needs(T t) const { return nodes_[t.i_].needs_grad; }

  void check_owned(T t) const {
    if (t.g_ != this) throw std::logic_error("tensor belongs to a different (or no) graph");
  }

  std::pair<std::size_t, std::size_t> rows_cols(const char* op, T a) const {
    const Shape& s = shape(a);
    if (s.empty() || s.size() > 2)
      throw ShapeError(std::string(op) + ": need rank-1 or rank-2, got " + shape_str(s));
    std::size_t m = s[0];
    std::size_t n = s.size() == 2 ? s[1] : 1;
    if (s.size() == 1) return {1, m};  // a vector is one row
    return {m, n};
  }

  template <class F>
  T binary(const char* name, T a, T b, F f, S da, S db) {
    check_owned(a), check_owned(b);
    if (shape(a) != shape(b))
      throw ShapeError(std::string(name) + ": shape mismatch " + shape_str(shape(a)) +
                       " vs " + shape_str(shape(b)));
    T out = make(shape(a), needs(a) || needs(b));
    auto& o = node(out).val;
    const auto &va = node(a).val, &vb = node(b).val;
    o.resize(va.size());
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = f(va[i], vb[i]);
    if (node(out).needs_grad)
      node(out).back = [ia = a.i_, ib = b.i_, io = out.i_, da, db](Graph& g) {
        const auto& go = g.nodes_[io].grad;
        if (g.nodes_[ia].needs_grad) {
          auto& ga = g.nodes_[ia].grad;
          for (std::size_t i = 0; i < go.size(); ++i) ga[i] += da * go[i];
        }
        if (g.nodes_[ib].needs_grad) {
          auto& gb = g.nodes_[ib].grad;
          for (std::size_t i = 0; i < go.size(); ++i) gb[i] += db * go[i];
        }
      };
    return out;
  }

  template <class F, class DF>
  T unary(const char* name, T a, F f, DF df) {
    check_owned(a);
    (void)name;
    T out = make(shape(a), needs(a));
    auto& o = node(out).val;
    const auto& v = node(a).val;
    o.resize(v.size());
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = f(v[i]);
    if (node(out).needs_grad)
      node(out).back = [ia = a.i_, io = out.i_, df](Graph& g) {
        auto& ga = g.nodes_[ia].grad;
        const auto &go = g.nodes_[io].grad, &vi = g.nodes_[ia].val, &vo = g.nodes_[io].val;
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += df(vi[i], vo[i]) * go[i];
      };
    return out;
  }

  T reduce_all(T a, bool mean) {
    check_owned(a);
    T out = make({1}, needs(a));
    const auto& v = node(a).val;
    S acc = S(0);
    for (S x : v) acc += x;
    const S scale = mean ? S(1) / S(v.size()) : S(1);
    node(out).val.assign(1, acc * scale);
    if (node(out).needs_grad)
      node(out).back = [ia = a.i_, io = out.i_, scale](Graph& g) {
        auto& ga = g.nodes_[ia].grad;
        const S go = g.nodes_[io].grad[0];
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += scale * go;
      };
    return out;
  }

  T concat(const std::vector<T>& parts, int axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    for (T p : parts) check_owned(p);
    bool rank1 = shape(parts[0]).size() == 1;
    if (rank1 && axis == 0) {
      std::size_t total = 0;
      bool ng = false;
      for (T p : parts) {
        if (shape(p).size() != 1)
          throw ShapeError("concat: mixed ranks, got " + shape_str(shape(p)));
        total += p.numel();
        ng = ng || needs(p);
      }
      T out = make({total}, ng);
      auto& o = node(out).val;
      o.reserve(total);
      for (T p : parts) o.insert(o.end(), node(p).val.begin(), node(p).val.end());
      if (ng) {
        std::vector<std::size_t> idx;
        for (T p : parts) idx.push_back(p.i_);
        node(out).back = [idx, io = out.i_](Graph& g) {
          const auto& go = g.nodes_[io].grad;
          std::size_t off = 0;
          for (std::size_t pi : idx) {
            auto& nd = g.nodes_[pi];
            if (nd.needs_grad)
              for (std::size_t i = 0; i < nd.val.size(); ++i) nd.grad[i] += go[off + i];
            off += nd.val.size();
          }
        };
      }
      return out;
    }
    // rank-2
    std::size_t m = shape(parts[0])[0], ncols = 0, nrows = 0;
    bool ng = false;
    for (T p : parts) {
      if (shape(p).size() != 2) throw ShapeError("concat: need rank-2, got " + shape_str(shape(p)));
      ng = ng || needs(p);
      if (axis == 1) {
        if (shape(p)[0] != m)
          throw ShapeError("concat_cols: row mismatch " + shape_str(shape(parts[0])) + " vs " +
                           shape_str(shape(p)));
        ncols += shape(p)[1];
      } else {
        if (shape(p)[1] != shape(parts[0])[1])
          throw ShapeError("concat_rows: col mismatch " + shape_str(shape(parts[0])) + " vs " +
                           shape_str(shape(p)));
        nrows += shape(p)[0];
      }
    }
    std::vector<std::size_t> idx;
    for (T p : parts) idx.push_back(p.i_);
    if (axis == 0) {
      std::size_t n = shape(parts[0])[1];
      T out = make({nrows, n}, ng);
      auto& o = node(out).val;
      o.reserve(nrows * n);
      for (T p : parts) o.insert(o.end(), node(p).val.begin(), node(p).val.end());
      if (ng)
        node(out).back = [idx, io = out.i_](Graph& g) {
          const auto& go = g.nodes_[io].grad;
          std::size_t off = 0;
          for (std::size_t pi : idx) {
            auto& nd = g.nodes_[pi];
            if (nd.needs_grad)
              for (std::size_t i = 0; i < nd.val.size(); ++i) nd.grad[i] += go[off + i];
            off += nd.val.size();
          }
        };
      return out;
    }
    T out = make({m, ncols}, ng);
    auto& o = node(out).val;
    o.resize(m * ncols);
    std::size_t coff = 0;
    for (T p : parts) {
      std::size_t pn = shape(p)[1];
      const auto& v = node(p).val;
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t j = 0; j < pn; ++j) o[r * ncols + coff + j] = v[r * pn + j];
      coff += pn;
    }
    if (ng)
      node(out).back = [idx, io = out.i_, m, ncols](Graph& g) {
        const auto& go = g.nodes_[io].grad;
        std::size_t coff = 0;
        for (std::size_t pi : idx) {
          auto& nd = g.nodes_[pi];
          std::size_t pn = nd.shape[1];
          if (nd.needs_grad)
            for (std::size_t r = 0; r < m; ++r)
              for (std::size_t j = 0; j < pn; ++j) nd.grad[r * pn + j] += go[r * ncols + coff + j];
          coff += pn;
        }
      };
    return out;
  }

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

template <class S>
const Shape& Tensor<S>::shape() const {
  return g_->node(*this).shape;
}
template <class S>
const std::vector<S>& Tensor<S>::value() const {
  return g_->node(*this).val;
}
template <class S>
const std::vector<S>& Tensor<S>::grad() const {
  return g_->node(*this).grad;
}
template <class S>
bool Tensor<S>::requires_grad() const {
  return g_->node(*this).needs_grad;
}
template <class S>
S Tensor<S>::item() const {
  if (numel() != 1) throw ShapeError("item: tensor is not scalar, " + shape_str(shape()));
  return value()[0];
}

}  // namespace delivr
