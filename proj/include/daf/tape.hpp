#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "daf/params.hpp"
#include "daf/tensor.hpp"

namespace daf {

/// Reverse-mode autodiff tape. Every differentiable operation appends one
/// node holding its forward value and a backward closure; backward() replays
/// the closures in exact reverse execution order, accumulating gradients
/// additively across fan-out. Parameters are deduplicated so each one owns
/// exactly one leaf (and hence one accumulated gradient slot) per tape.
///
/// A tape is built per training step and discarded. It is single-threaded;
/// tensors themselves are plain values and may be shared across threads.
template <typename T>
class TapeT {
 public:
  using Tensor = TensorT<T>;

  struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
  };

  TapeT() = default;
  TapeT(const TapeT&) = delete;
  TapeT& operator=(const TapeT&) = delete;

  std::size_t size() const { return nodes_.size(); }

  const Tensor& value(Var v) const { return nodes_[check(v)].value; }

  /// Gradient of the last backward() target w.r.t. this node. Zero tensor if
  /// the node was not on the path.
  Tensor grad(Var v) const {
    const Node& n = nodes_[check(v)];
    if (n.grad.data.empty()) return Tensor::zeros(n.value.shape);
    return n.grad;
  }

  // ---------------- leaves ----------------

  Var input(Tensor v) { return mk(std::move(v), nullptr); }

  Var scalar(T v) { return input(Tensor::scalar(v)); }

  Var param(ParamT<T>& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return Var{it->second};
    Var v = mk(p.value, nullptr);
    nodes_[v.id].param = &p;
    param_nodes_[&p] = v.id;
    return v;
  }

  // ---------------- elementwise ----------------

  Var add(Var a, Var b) { return binary_pointwise(a, b, "add",
      [](T x, T y) { return x + y; },
      [](T, T, T g, T& dx, T& dy) { dx = g; dy = g; }); }

  Var sub(Var a, Var b) { return binary_pointwise(a, b, "sub",
      [](T x, T y) { return x - y; },
      [](T, T, T g, T& dx, T& dy) { dx = g; dy = -g; }); }

  Var mul(Var a, Var b) { return binary_pointwise(a, b, "mul",
      [](T x, T y) { return x * y; },
      [](T x, T y, T g, T& dx, T& dy) { dx = g * y; dy = g * x; }); }

  Var div(Var a, Var b) { return binary_pointwise(a, b, "div",
      [](T x, T y) { return x / y; },
      [](T x, T y, T g, T& dx, T& dy) { dx = g / y; dy = -g * x / (y * y); }); }

  /// Elementwise min; gradient routes to the smaller operand, ties to a.
  Var min2(Var a, Var b) { return binary_pointwise(a, b, "min2",
      [](T x, T y) { return x <= y ? x : y; },
      [](T x, T y, T g, T& dx, T& dy) { if (x <= y) { dx = g; dy = T(0); } else { dx = T(0); dy = g; } }); }

  /// Elementwise max; gradient routes to the larger operand, ties to a.
  Var max2(Var a, Var b) { return binary_pointwise(a, b, "max2",
      [](T x, T y) { return x >= y ? x : y; },
      [](T x, T y, T g, T& dx, T& dy) { if (x >= y) { dx = g; dy = T(0); } else { dx = T(0); dy = g; } }); }

  Var scale(Var a, T c) { return unary_pointwise(a,
      [c](T x) { return c * x; },
      [c](T, T g) { return c * g; }); }

  Var add_const(Var a, T c) { return unary_pointwise(a,
      [c](T x) { return x + c; },
      [](T, T g) { return g; }); }

  Var relu(Var a) { return unary_pointwise(a,
      [](T x) { return x > T(0) ? x : T(0); },
      [](T x, T g) { return x > T(0) ? g : T(0); }); }

  /// |x| with subgradient 0 at the kink.
  Var abs_(Var a) { return unary_pointwise(a,
      [](T x) { return x < T(0) ? -x : x; },
      [](T x, T g) { return x > T(0) ? g : (x < T(0) ? -g : T(0)); }); }

  Var exp_(Var a) { return unary_pointwise(a,
      [](T x) { return std::exp(x); },
      [](T x, T g) { return g * std::exp(x); }); }

  /// Clamp to [lo, hi]; zero gradient where saturated.
  Var clamp(Var a, T lo, T hi) { return unary_pointwise(a,
      [lo, hi](T x) { return x < lo ? lo : (x > hi ? hi : x); },
      [lo, hi](T x, T g) { return (x > lo && x < hi) ? g : T(0); }); }

  // ---------------- structure ----------------

  /// Concatenate rank-1 vectors into one rank-1 vector.
  Var concat(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat of zero vectors");
    int total = 0;
    for (Var p : parts) {
      const Tensor& t = value(p);
      if (t.rank() != 1) throw std::invalid_argument("concat expects rank-1 operands, got " + shape_to_string(t.shape));
      total += t.extent(0);
    }
    Tensor out(Shape{total});
    int off = 0;
    std::vector<std::pair<int, int>> spans;  // (node id, offset)
    for (Var p : parts) {
      const Tensor& t = value(p);
      std::copy(t.data.begin(), t.data.end(), out.data.begin() + off);
      spans.emplace_back(p.id, off);
      off += t.extent(0);
    }
    return mk(std::move(out), [spans](TapeT& t, const Tensor& g) {
      for (auto [id, o] : spans) {
        Tensor& pg = t.grad_slot(id);
        for (std::size_t i = 0; i < pg.data.size(); ++i) pg.data[i] += g.data[o + i];
      }
    });
  }

  /// Pick elements by flat index into a rank-1 result.
  Var gather(Var a, std::vector<int> idx) {
    const Tensor& x = value(a);
    Tensor out(Shape{static_cast<int>(idx.size())});
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (idx[i] < 0 || idx[i] >= static_cast<int>(x.size()))
        throw std::invalid_argument("gather index out of range: " + std::to_string(idx[i]));
      out.data[i] = x.data[idx[i]];
    }
    const int ia = a.id;
    return mk(std::move(out), [ia, idx = std::move(idx)](TapeT& t, const Tensor& g) {
      Tensor& ga = t.grad_slot(ia);
      for (std::size_t i = 0; i < idx.size(); ++i) ga.data[idx[i]] += g.data[i];
    });
  }

  // ---------------- reductions ----------------

  /// Reduce over the given axes; an empty axis set reduces everything to a
  /// scalar of shape [1].
  Var reduce_sum(Var a, std::vector<int> axes = {}) { return reduce(a, std::move(axes), ReduceKind::Sum); }
  Var reduce_mean(Var a, std::vector<int> axes = {}) { return reduce(a, std::move(axes), ReduceKind::Mean); }
  Var reduce_max(Var a, std::vector<int> axes = {}) { return reduce(a, std::move(axes), ReduceKind::Max); }

  // ---------------- neural net ops ----------------

  /// 2-D convolution, input [h,w,c_in], kernel [k,k,c_in,c_out].
  Var conv2d(Var x, Var k, int stride, int pad) {
    const Tensor& xi = value(x);
    const Tensor& ki = value(k);
    if (xi.rank() != 3) throw std::invalid_argument("conv2d input must be rank 3, got " + shape_to_string(xi.shape));
    if (ki.rank() != 4) throw std::invalid_argument("conv2d kernel must be rank 4, got " + shape_to_string(ki.shape));
    const int h = xi.extent(0), w = xi.extent(1), ci = xi.extent(2);
    const int kh = ki.extent(0), kw = ki.extent(1), kci = ki.extent(2), co = ki.extent(3);
    if (kh != kw) throw std::invalid_argument("conv2d kernel must be square, got " + shape_to_string(ki.shape));
    if (kh % 2 == 0) throw std::invalid_argument("conv2d kernel size must be odd, got " + std::to_string(kh));
    if (kci != ci)
      throw std::invalid_argument("conv2d channel mismatch: input " + shape_to_string(xi.shape) +
                                  " vs kernel " + shape_to_string(ki.shape));
    if (stride < 1) throw std::invalid_argument("conv2d stride must be >= 1");
    if (pad < 0) throw std::invalid_argument("conv2d pad must be >= 0");
    const int ho = (h + 2 * pad - kh) / stride + 1;
    const int wo = (w + 2 * pad - kw) / stride + 1;
    if (ho <= 0 || wo <= 0) throw std::invalid_argument("conv2d output would be empty");

    Tensor out(Shape{ho, wo, co});
    for (int i = 0; i < ho; ++i) {
      for (int j = 0; j < wo; ++j) {
        for (int r = 0; r < kh; ++r) {
          const int yi = i * stride - pad + r;
          if (yi < 0 || yi >= h) continue;
          for (int s = 0; s < kw; ++s) {
            const int xj = j * stride - pad + s;
            if (xj < 0 || xj >= w) continue;
            const T* xrow = &xi.at3(yi, xj, 0);
            const T* krow = &ki.at4(r, s, 0, 0);
            T* orow = &out.at3(i, j, 0);
            for (int c = 0; c < ci; ++c) {
              const T xv = xrow[c];
              const T* kk = krow + static_cast<std::size_t>(c) * co;
              for (int o = 0; o < co; ++o) orow[o] += xv * kk[o];
            }
          }
        }
      }
    }
    const int ix = x.id, ik = k.id;
    return mk(std::move(out), [ix, ik, stride, pad](TapeT& t, const Tensor& g) {
      const Tensor& xi = t.nodes_[ix].value;
      const Tensor& ki = t.nodes_[ik].value;
      Tensor& gx = t.grad_slot(ix);
      Tensor& gk = t.grad_slot(ik);
      const int h = xi.extent(0), w = xi.extent(1), ci = xi.extent(2);
      const int kh = ki.extent(0), kw = ki.extent(1), co = ki.extent(3);
      const int ho = g.extent(0), wo = g.extent(1);
      for (int i = 0; i < ho; ++i) {
        for (int j = 0; j < wo; ++j) {
          for (int r = 0; r < kh; ++r) {
            const int yi = i * stride - pad + r;
            if (yi < 0 || yi >= h) continue;
            for (int s = 0; s < kw; ++s) {
              const int xj = j * stride - pad + s;
              if (xj < 0 || xj >= w) continue;
              const T* grow = &g.at3(i, j, 0);
              for (int c = 0; c < ci; ++c) {
                const T xv = xi.at3(yi, xj, c);
                const T* kk = &ki.at4(r, s, c, 0);
                T* gkk = &gk.at4(r, s, c, 0);
                T acc = T(0);
                for (int o = 0; o < co; ++o) {
                  const T go = grow[o];
                  gkk[o] += xv * go;
                  acc += kk[o] * go;
                }
                gx.at3(yi, xj, c) += acc;
              }
            }
          }
        }
      }
    });
  }

  /// Add a per-channel bias [c] to a feature map [h,w,c].
  Var bias_add(Var x, Var b) {
    const Tensor& xi = value(x);
    const Tensor& bi = value(b);
    if (xi.rank() != 3 || bi.rank() != 1 || bi.extent(0) != xi.extent(2))
      throw std::invalid_argument("bias_add shape mismatch: " + shape_to_string(xi.shape) + " + " +
                                  shape_to_string(bi.shape));
    Tensor out = xi;
    const int c = xi.extent(2);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += bi.data[i % c];
    const int ix = x.id, ib = b.id;
    return mk(std::move(out), [ix, ib, c](TapeT& t, const Tensor& g) {
      Tensor& gx = t.grad_slot(ix);
      Tensor& gb = t.grad_slot(ib);
      for (std::size_t i = 0; i < g.data.size(); ++i) {
        gx.data[i] += g.data[i];
        gb.data[i % c] += g.data[i];
      }
    });
  }

  /// 2x2 max pooling with stride 2; spatial extents must be even.
  Var maxpool2(Var x) {
    const Tensor& xi = value(x);
    if (xi.rank() != 3) throw std::invalid_argument("maxpool2 input must be rank 3");
    const int h = xi.extent(0), w = xi.extent(1), c = xi.extent(2);
    if (h % 2 || w % 2) throw std::invalid_argument("maxpool2 needs even extents, got " + shape_to_string(xi.shape));
    Tensor out(Shape{h / 2, w / 2, c});
    std::vector<int> arg(out.size());
    for (int i = 0; i < h / 2; ++i) {
      for (int j = 0; j < w / 2; ++j) {
        for (int k = 0; k < c; ++k) {
          T best = -std::numeric_limits<T>::infinity();
          int besti = 0;
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              const int fi = ((2 * i + dy) * w + (2 * j + dx)) * c + k;
              if (xi.data[fi] > best) {
                best = xi.data[fi];
                besti = fi;
              }
            }
          }
          const std::size_t oi = (static_cast<std::size_t>(i) * (w / 2) + j) * c + k;
          out.data[oi] = best;
          arg[oi] = besti;
        }
      }
    }
    const int ix = x.id;
    return mk(std::move(out), [ix, arg = std::move(arg)](TapeT& t, const Tensor& g) {
      Tensor& gx = t.grad_slot(ix);
      for (std::size_t i = 0; i < g.data.size(); ++i) gx.data[arg[i]] += g.data[i];
    });
  }

  /// Matrix-vector product: W [m,n] times x [n] -> [m].
  Var matvec(Var w, Var x) {
    const Tensor& wi = value(w);
    const Tensor& xi = value(x);
    if (wi.rank() != 2 || xi.rank() != 1 || wi.extent(1) != xi.extent(0))
      throw std::invalid_argument("matvec shape mismatch: " + shape_to_string(wi.shape) + " x " +
                                  shape_to_string(xi.shape));
    const int m = wi.extent(0), n = wi.extent(1);
    Tensor out(Shape{m});
    for (int i = 0; i < m; ++i) {
      T acc = T(0);
      const T* row = &wi.at2(i, 0);
      for (int j = 0; j < n; ++j) acc += row[j] * xi.data[j];
      out.data[i] = acc;
    }
    const int iw = w.id, ix = x.id;
    return mk(std::move(out), [iw, ix, m, n](TapeT& t, const Tensor& g) {
      const Tensor& wi = t.nodes_[iw].value;
      const Tensor& xi = t.nodes_[ix].value;
      Tensor& gw = t.grad_slot(iw);
      Tensor& gx = t.grad_slot(ix);
      for (int i = 0; i < m; ++i) {
        const T gi = g.data[i];
        T* gwr = &gw.at2(i, 0);
        const T* wr = &wi.at2(i, 0);
        for (int j = 0; j < n; ++j) {
          gwr[j] += gi * xi.data[j];
          gx.data[j] += gi * wr[j];
        }
      }
    });
  }

  /// Cross-entropy of softmax(logits) against a hard class index.
  Var softmax_xent(Var logits, int target) {
    const Tensor& li = value(logits);
    if (li.rank() != 1 || li.extent(0) < 2)
      throw std::invalid_argument("softmax_xent needs a rank-1 logit vector of length >= 2");
    if (target < 0 || target >= li.extent(0))
      throw std::invalid_argument("softmax_xent target " + std::to_string(target) + " out of range for " +
                                  shape_to_string(li.shape));
    const int n = li.extent(0);
    const T m = li.max_value();
    double se = 0.0;
    for (int i = 0; i < n; ++i) se += std::exp(static_cast<double>(li.data[i] - m));
    const double lse = static_cast<double>(m) + std::log(se);
    Tensor out = Tensor::scalar(static_cast<T>(lse - static_cast<double>(li.data[target])));
    const int il = logits.id;
    return mk(std::move(out), [il, target, n](TapeT& t, const Tensor& g) {
      const Tensor& li = t.nodes_[il].value;
      Tensor& gl = t.grad_slot(il);
      const T m = li.max_value();
      double se = 0.0;
      for (int i = 0; i < n; ++i) se += std::exp(static_cast<double>(li.data[i] - m));
      for (int i = 0; i < n; ++i) {
        double p = std::exp(static_cast<double>(li.data[i] - m)) / se;
        if (i == target) p -= 1.0;
        gl.data[i] += static_cast<T>(p) * g.data[0];
      }
    });
  }

  /// Cross-entropy of softmax(logits) against a fixed soft distribution.
  Var softmax_xent_soft(Var logits, Tensor target_dist) {
    const Tensor& li = value(logits);
    if (li.rank() != 1 || li.extent(0) < 2)
      throw std::invalid_argument("softmax_xent_soft needs a rank-1 logit vector of length >= 2");
    if (!target_dist.same_shape(li))
      throw std::invalid_argument("soft target shape " + shape_to_string(target_dist.shape) +
                                  " does not match logits " + shape_to_string(li.shape));
    double qs = 0.0;
    for (T q : target_dist.data) {
      if (q < T(0)) throw std::invalid_argument("soft target has negative mass");
      qs += static_cast<double>(q);
    }
    if (std::abs(qs - 1.0) > 1e-3)
      throw std::invalid_argument("soft target must sum to 1, got " + std::to_string(qs));
    const int n = li.extent(0);
    const T m = li.max_value();
    double se = 0.0;
    for (int i = 0; i < n; ++i) se += std::exp(static_cast<double>(li.data[i] - m));
    const double lse = static_cast<double>(m) + std::log(se);
    double loss = 0.0;
    for (int i = 0; i < n; ++i)
      loss += static_cast<double>(target_dist.data[i]) * (lse - static_cast<double>(li.data[i]));
    Tensor out = Tensor::scalar(static_cast<T>(loss));
    const int il = logits.id;
    return mk(std::move(out), [il, q = std::move(target_dist), n](TapeT& t, const Tensor& g) {
      const Tensor& li = t.nodes_[il].value;
      Tensor& gl = t.grad_slot(il);
      const T m = li.max_value();
      double se = 0.0;
      for (int i = 0; i < n; ++i) se += std::exp(static_cast<double>(li.data[i] - m));
      for (int i = 0; i < n; ++i) {
        const double p = std::exp(static_cast<double>(li.data[i] - m)) / se;
        gl.data[i] += static_cast<T>(p - static_cast<double>(q.data[i])) * g.data[0];
      }
    });
  }

  /// v / ||v||_2; the all-zero vector maps to zeros (and a zero gradient).
  Var l2_normalize(Var v) {
    const Tensor& vi = value(v);
    double ss = 0.0;
    for (T x : vi.data) ss += static_cast<double>(x) * static_cast<double>(x);
    const double norm = std::sqrt(ss);
    Tensor out = vi;
    if (norm > 0.0) {
      for (auto& x : out.data) x = static_cast<T>(static_cast<double>(x) / norm);
    } else {
      std::fill(out.data.begin(), out.data.end(), T(0));
    }
    const int iv = v.id;
    return mk(std::move(out), [iv, norm](TapeT& t, const Tensor& g) {
      if (norm <= 0.0) return;
      const Tensor& vi = t.nodes_[iv].value;
      Tensor& gv = t.grad_slot(iv);
      double dot = 0.0;
      for (std::size_t i = 0; i < g.data.size(); ++i)
        dot += static_cast<double>(g.data[i]) * static_cast<double>(vi.data[i]);
      const double n3 = norm * norm * norm;
      for (std::size_t i = 0; i < g.data.size(); ++i) {
        gv.data[i] += static_cast<T>(static_cast<double>(g.data[i]) / norm -
                                     static_cast<double>(vi.data[i]) * dot / n3);
      }
    });
  }

  /// Upper triangle (including diagonal) of the outer product v v^T,
  /// flattened row-major: for d inputs the output has d(d+1)/2 entries.
  Var triangle_outer(Var v) {
    const Tensor& vi = value(v);
    if (vi.rank() != 1) throw std::invalid_argument("triangle_outer expects a rank-1 vector");
    const int d = vi.extent(0);
    Tensor out(Shape{d * (d + 1) / 2});
    int t = 0;
    for (int i = 0; i < d; ++i)
      for (int j = i; j < d; ++j) out.data[t++] = vi.data[i] * vi.data[j];
    const int iv = v.id;
    return mk(std::move(out), [iv, d](TapeT& tp, const Tensor& g) {
      const Tensor& vi = tp.nodes_[iv].value;
      Tensor& gv = tp.grad_slot(iv);
      int t = 0;
      for (int i = 0; i < d; ++i) {
        for (int j = i; j < d; ++j) {
          const T gt = g.data[t++];
          // v_i^2 on the diagonal contributes 2*v_i, off-diagonal v_i*v_j
          // contributes v_j and v_i to the two slots.
          gv.data[i] += gt * vi.data[j];
          gv.data[j] += gt * vi.data[i];
        }
      }
    });
  }

  /// Multiply a feature map [h,w,c] by a spatial mask [h,w], broadcast over
  /// channels.
  Var mul_spatial(Var f, Var m) {
    const Tensor& fi = value(f);
    const Tensor& mi = value(m);
    if (fi.rank() != 3 || mi.rank() != 2 || fi.extent(0) != mi.extent(0) || fi.extent(1) != mi.extent(1))
      throw std::invalid_argument("mul_spatial shape mismatch: " + shape_to_string(fi.shape) + " * " +
                                  shape_to_string(mi.shape));
    const int c = fi.extent(2);
    Tensor out = fi;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= mi.data[i / c];
    const int iff = f.id, im = m.id;
    return mk(std::move(out), [iff, im, c](TapeT& t, const Tensor& g) {
      const Tensor& fi = t.nodes_[iff].value;
      const Tensor& mi = t.nodes_[im].value;
      Tensor& gf = t.grad_slot(iff);
      Tensor& gm = t.grad_slot(im);
      for (std::size_t i = 0; i < g.data.size(); ++i) {
        gf.data[i] += g.data[i] * mi.data[i / c];
        gm.data[i / c] += g.data[i] * fi.data[i];
      }
    });
  }

  /// Area-average downsampling of a rank-2 map to (oh, ow). Blocks follow
  /// floor(i*h/oh) boundaries, so any oh <= h works.
  Var avg_downsample(Var m, int oh, int ow) {
    const Tensor& mi = value(m);
    if (mi.rank() != 2) throw std::invalid_argument("avg_downsample expects a rank-2 map");
    const int h = mi.extent(0), w = mi.extent(1);
    if (oh < 1 || ow < 1 || oh > h || ow > w)
      throw std::invalid_argument("avg_downsample target (" + std::to_string(oh) + "," + std::to_string(ow) +
                                  ") invalid for source " + shape_to_string(mi.shape));
    Tensor out(Shape{oh, ow});
    for (int i = 0; i < oh; ++i) {
      const int r0 = i * h / oh, r1 = (i + 1) * h / oh;
      for (int j = 0; j < ow; ++j) {
        const int c0 = j * w / ow, c1 = (j + 1) * w / ow;
        double acc = 0.0;
        for (int r = r0; r < r1; ++r)
          for (int c = c0; c < c1; ++c) acc += static_cast<double>(mi.at2(r, c));
        out.at2(i, j) = static_cast<T>(acc / ((r1 - r0) * (c1 - c0)));
      }
    }
    const int im = m.id;
    return mk(std::move(out), [im, h, w, oh, ow](TapeT& t, const Tensor& g) {
      Tensor& gm = t.grad_slot(im);
      for (int i = 0; i < oh; ++i) {
        const int r0 = i * h / oh, r1 = (i + 1) * h / oh;
        for (int j = 0; j < ow; ++j) {
          const int c0 = j * w / ow, c1 = (j + 1) * w / ow;
          const T share = g.at2(i, j) / static_cast<T>((r1 - r0) * (c1 - c0));
          for (int r = r0; r < r1; ++r)
            for (int c = c0; c < c1; ++c) gm.at2(r, c) += share;
        }
      }
    });
  }

  /// Softmax across each row of a [d, g] matrix.
  Var row_softmax(Var a) {
    const Tensor& ai = value(a);
    if (ai.rank() != 2) throw std::invalid_argument("row_softmax expects a rank-2 matrix");
    const int d = ai.extent(0), gcols = ai.extent(1);
    Tensor out(ai.shape);
    for (int i = 0; i < d; ++i) {
      T m = ai.at2(i, 0);
      for (int j = 1; j < gcols; ++j) m = std::max(m, ai.at2(i, j));
      double se = 0.0;
      for (int j = 0; j < gcols; ++j) se += std::exp(static_cast<double>(ai.at2(i, j) - m));
      for (int j = 0; j < gcols; ++j)
        out.at2(i, j) = static_cast<T>(std::exp(static_cast<double>(ai.at2(i, j) - m)) / se);
    }
    const int ia = a.id;
    const int oid = static_cast<int>(nodes_.size());
    return mk(std::move(out), [ia, oid, d, gcols](TapeT& t, const Tensor& g) {
      const Tensor& p = t.nodes_[oid].value;
      Tensor& ga = t.grad_slot(ia);
      for (int i = 0; i < d; ++i) {
        double dot = 0.0;
        for (int j = 0; j < gcols; ++j)
          dot += static_cast<double>(g.at2(i, j)) * static_cast<double>(p.at2(i, j));
        for (int j = 0; j < gcols; ++j) {
          ga.at2(i, j) += static_cast<T>(static_cast<double>(p.at2(i, j)) *
                                         (static_cast<double>(g.at2(i, j)) - dot));
        }
      }
    });
  }

  // ---------------- backward ----------------

  /// Reverse pass from a scalar loss. Gradients of previous backward calls on
  /// the same tape are discarded; parameter grads accumulate into the store.
  void backward(Var loss) {
    const Node& ln = nodes_[check(loss)];
    if (ln.value.size() != 1)
      throw std::invalid_argument("backward target must be scalar, got " + shape_to_string(ln.value.shape));
    for (auto& n : nodes_) n.grad = Tensor();
    grad_slot(loss.id).data[0] = T(1);
    for (int id = loss.id; id >= 0; --id) {
      Node& n = nodes_[id];
      if (n.grad.data.empty()) continue;
      if (n.back) n.back(*this, n.grad);
      if (n.param) {
        for (std::size_t i = 0; i < n.grad.data.size(); ++i) n.param->grad.data[i] += n.grad.data[i];
      }
    }
  }

 private:
  enum class ReduceKind { Sum, Mean, Max };

  struct Node {
    Tensor value;
    Tensor grad;
    std::function<void(TapeT&, const Tensor&)> back;
    ParamT<T>* param = nullptr;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const ParamT<T>*, int> param_nodes_;

  int check(Var v) const {
    if (!v.valid() || v.id >= static_cast<int>(nodes_.size()))
      throw std::invalid_argument("invalid tape variable");
    return v.id;
  }

  Var mk(Tensor value, std::function<void(TapeT&, const Tensor&)> back) {
    Node n;
    n.value = std::move(value);
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  Tensor& grad_slot(int id) {
    Node& n = nodes_[id];
    if (n.grad.data.empty()) n.grad = Tensor::zeros(n.value.shape);
    return n.grad;
  }

  template <typename FwdF, typename BwdF>
  Var unary_pointwise(Var a, FwdF fwd, BwdF bwd) {
    const Tensor& x = value(a);
    Tensor out(x.shape);
    for (std::size_t i = 0; i < x.data.size(); ++i) out.data[i] = fwd(x.data[i]);
    const int ia = a.id;
    return mk(std::move(out), [ia, bwd](TapeT& t, const Tensor& g) {
      const Tensor& x = t.nodes_[ia].value;
      Tensor& gx = t.grad_slot(ia);
      for (std::size_t i = 0; i < g.data.size(); ++i) gx.data[i] += bwd(x.data[i], g.data[i]);
    });
  }

  /// Shapes must match exactly, or b may be a scalar broadcast over a.
  template <typename FwdF, typename BwdF>
  Var binary_pointwise(Var a, Var b, const char* opname, FwdF fwd, BwdF bwd) {
    const Tensor& x = value(a);
    const Tensor& y = value(b);
    const bool bscalar = y.size() == 1 && x.size() != 1;
    if (!bscalar && !x.same_shape(y))
      throw std::invalid_argument(std::string(opname) + " shape mismatch: " + shape_to_string(x.shape) +
                                  " vs " + shape_to_string(y.shape));
    Tensor out(x.shape);
    for (std::size_t i = 0; i < x.data.size(); ++i)
      out.data[i] = fwd(x.data[i], bscalar ? y.data[0] : y.data[i]);
    const int ia = a.id, ib = b.id;
    return mk(std::move(out), [ia, ib, bscalar, bwd](TapeT& t, const Tensor& g) {
      const Tensor& x = t.nodes_[ia].value;
      const Tensor& y = t.nodes_[ib].value;
      Tensor& gx = t.grad_slot(ia);
      Tensor& gy = t.grad_slot(ib);
      for (std::size_t i = 0; i < g.data.size(); ++i) {
        T dx = T(0), dy = T(0);
        bwd(x.data[i], bscalar ? y.data[0] : y.data[i], g.data[i], dx, dy);
        gx.data[i] += dx;
        gy.data[bscalar ? 0 : i] += dy;
      }
    });
  }

  Var reduce(Var a, std::vector<int> axes, ReduceKind kind) {
    const Tensor& x = value(a);
    const int r = x.rank();
    std::vector<bool> reduced(r, false);
    if (axes.empty()) {
      std::fill(reduced.begin(), reduced.end(), true);
    } else {
      for (int ax : axes) {
        if (ax < 0 || ax >= r)
          throw std::invalid_argument("reduce axis " + std::to_string(ax) + " invalid for " +
                                      shape_to_string(x.shape));
        reduced[ax] = true;
      }
    }
    Shape oshape;
    for (int i = 0; i < r; ++i)
      if (!reduced[i]) oshape.push_back(x.extent(i));
    if (oshape.empty()) oshape.push_back(1);

    // Map each input flat index to its output flat index.
    std::vector<std::int64_t> istrides(r, 1), map_stride(r, 0);
    for (int i = r - 2; i >= 0; --i) istrides[i] = istrides[i + 1] * x.extent(i + 1);
    {
      std::int64_t os = 1;
      for (int i = r - 1; i >= 0; --i) {
        if (!reduced[i]) {
          map_stride[i] = os;
          os *= x.extent(i);
        }
      }
    }
    const std::int64_t on = shape_numel(oshape);
    std::int64_t count = static_cast<std::int64_t>(x.size()) / on;

    auto out_index = [&](std::size_t flat) {
      std::int64_t o = 0;
      for (int i = 0; i < r; ++i) {
        const std::int64_t coord = (static_cast<std::int64_t>(flat) / istrides[i]) % x.extent(i);
        o += coord * map_stride[i];
      }
      return o;
    };

    Tensor out(oshape);
    std::vector<int> arg;
    if (kind == ReduceKind::Max) {
      arg.assign(static_cast<std::size_t>(on), -1);
      std::fill(out.data.begin(), out.data.end(), -std::numeric_limits<T>::infinity());
      for (std::size_t i = 0; i < x.data.size(); ++i) {
        const std::int64_t o = out_index(i);
        if (x.data[i] > out.data[o]) {
          out.data[o] = x.data[i];
          arg[o] = static_cast<int>(i);
        }
      }
    } else {
      for (std::size_t i = 0; i < x.data.size(); ++i) out.data[out_index(i)] += x.data[i];
      if (kind == ReduceKind::Mean)
        for (auto& v : out.data) v /= static_cast<T>(count);
    }

    const int ia = a.id;
    if (kind == ReduceKind::Max) {
      return mk(std::move(out), [ia, arg = std::move(arg)](TapeT& t, const Tensor& g) {
        Tensor& gx = t.grad_slot(ia);
        for (std::size_t o = 0; o < g.data.size(); ++o)
          if (arg[o] >= 0) gx.data[arg[o]] += g.data[o];
      });
    }
    const T inv = kind == ReduceKind::Mean ? T(1) / static_cast<T>(count) : T(1);
    return mk(std::move(out),
              [ia, istrides, map_stride, inv, r](TapeT& t, const Tensor& g) {
                const Tensor& x = t.nodes_[ia].value;
                Tensor& gx = t.grad_slot(ia);
                for (std::size_t i = 0; i < x.data.size(); ++i) {
                  std::int64_t o = 0;
                  for (int ax = 0; ax < r; ++ax) {
                    const std::int64_t coord = (static_cast<std::int64_t>(i) / istrides[ax]) % x.extent(ax);
                    o += coord * map_stride[ax];
                  }
                  gx.data[i] += g.data[o] * inv;
                }
              });
  }
};

using Tape = TapeT<float>;
using TapeD = TapeT<double>;

}  // namespace daf
