#pragma once

// Differentiable operations over Tape-recorded values.
//
// Each op computes its forward value eagerly and, when the tape records,
// attaches a closure that accumulates input gradients from its own.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "fgcn/tensor.hpp"

namespace fgcn {

namespace detail {

template <typename T>
Var<T> record(Tape<T>& tape, std::string op, std::vector<std::size_t> inputs, Shape shape,
              std::vector<T> value, typename Tape<T>::BackwardFn fn, std::vector<T> saved = {}) {
  typename Tape<T>::Entry e;
  e.op = std::move(op);
  e.inputs = std::move(inputs);
  e.shape = std::move(shape);
  e.value = std::move(value);
  e.backward = std::move(fn);
  e.saved = std::move(saved);
  return tape.push(std::move(e));
}

template <typename T>
void same_tape(const Var<T>& a, const Var<T>& b) {
  if (a.tape != b.tape) throw Error("operands recorded on different tapes");
}

inline void require_rank(const Shape& s, std::size_t rank, const char* op) {
  if (s.size() != rank)
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_string(s));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and linear algebra

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  detail::same_tape(a, b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0])
    throw ShapeError("matmul: incompatible shapes " + shape_string(sa) + " and " +
                     shape_string(sb));
  const std::size_t n = sa[0], k = sa[1], m = sb[1];
  const auto& av = a.value();
  const auto& bv = b.value();
  std::vector<T> out(n * m, T(0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = av[i * k + p];
      for (std::size_t j = 0; j < m; ++j) out[i * m + j] += aip * bv[p * m + j];
    }
  const std::size_t ia = a.id, ib = b.id;
  return detail::record<T>(*a.tape, "matmul", {ia, ib}, {n, m}, std::move(out),
                           [ia, ib, n, k, m](Tape<T>& tape, std::size_t self) {
                             const auto& g = tape.entry(self).grad;
                             const auto& av = tape.entry(ia).value;
                             const auto& bv = tape.entry(ib).value;
                             auto& ga = tape.grad(ia);
                             for (std::size_t i = 0; i < n; ++i)
                               for (std::size_t p = 0; p < k; ++p) {
                                 T s = 0;
                                 for (std::size_t j = 0; j < m; ++j)
                                   s += g[i * m + j] * bv[p * m + j];
                                 ga[i * k + p] += s;
                               }
                             auto& gb = tape.grad(ib);
                             for (std::size_t i = 0; i < n; ++i)
                               for (std::size_t p = 0; p < k; ++p) {
                                 const T aip = av[i * k + p];
                                 for (std::size_t j = 0; j < m; ++j)
                                   gb[p * m + j] += aip * g[i * m + j];
                               }
                           });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  detail::same_tape(a, b);
  if (a.shape() != b.shape())
    throw ShapeError("add: shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  std::vector<T> out(a.value());
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const std::size_t ia = a.id, ib = b.id;
  return detail::record<T>(*a.tape, "add", {ia, ib}, a.shape(), std::move(out),
                           [ia, ib](Tape<T>& tape, std::size_t self) {
                             const auto& g = tape.entry(self).grad;
                             auto& ga = tape.grad(ia);
                             for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                             auto& gb = tape.grad(ib);
                             for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
                           });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  detail::same_tape(a, b);
  if (a.shape() != b.shape())
    throw ShapeError("mul: shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  std::vector<T> out(a.value());
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const std::size_t ia = a.id, ib = b.id;
  return detail::record<T>(*a.tape, "mul", {ia, ib}, a.shape(), std::move(out),
                           [ia, ib](Tape<T>& tape, std::size_t self) {
                             const auto& g = tape.entry(self).grad;
                             const auto& av = tape.entry(ia).value;
                             const auto& bv = tape.entry(ib).value;
                             auto& ga = tape.grad(ia);
                             for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
                             auto& gb = tape.grad(ib);
                             for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
                           });
}

template <typename T>
Var<T> scale(Var<T> a, T s) {
  std::vector<T> out(a.value());
  for (auto& x : out) x *= s;
  const std::size_t ia = a.id;
  return detail::record<T>(*a.tape, "scale", {ia}, a.shape(), std::move(out),
                           [ia, s](Tape<T>& tape, std::size_t self) {
                             const auto& g = tape.entry(self).grad;
                             auto& ga = tape.grad(ia);
                             for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
                           });
}

template <typename T>
Var<T> relu(Var<T> a) {
  std::vector<T> out(a.value());
  for (auto& x : out) x = x > T(0) ? x : T(0);
  const std::size_t ia = a.id;
  return detail::record<T>(*a.tape, "relu", {ia}, a.shape(), std::move(out),
                           [ia](Tape<T>& tape, std::size_t self) {
                             const auto& e = tape.entry(self);
                             auto& ga = tape.grad(ia);
                             for (std::size_t i = 0; i < e.grad.size(); ++i)
                               if (e.value[i] > T(0)) ga[i] += e.grad[i];
                           });
}

template <typename T>
Var<T> sum(Var<T> a) {
  T s = 0;
  for (const T& x : a.value()) s += x;
  const std::size_t ia = a.id;
  return detail::record<T>(*a.tape, "sum", {ia}, {1}, {s},
                           [ia](Tape<T>& tape, std::size_t self) {
                             const T g = tape.entry(self).grad[0];
                             for (auto& x : tape.grad(ia)) x += g;
                           });
}

// ---------------------------------------------------------------------------
// Channel concatenation: parts agree on every dimension except dim 1.

template <typename T>
Var<T> concat_channels(std::span<const Var<T>> parts) {
  if (parts.empty()) throw ShapeError("concat_channels: empty input list");
  const Shape& first = parts[0].shape();
  if (first.size() < 2) throw ShapeError("concat_channels: rank must be at least 2");
  std::size_t channels = 0;
  for (const auto& p : parts) {
    detail::same_tape(parts[0], p);
    const Shape& s = p.shape();
    bool ok = s.size() == first.size() && s[0] == first[0];
    for (std::size_t d = 2; ok && d < s.size(); ++d) ok = s[d] == first[d];
    if (!ok)
      throw ShapeError("concat_channels: incompatible shapes " + shape_string(first) + " and " +
                       shape_string(s));
    channels += s[1];
  }
  const std::size_t outer = first[0];
  std::size_t inner = 1;
  for (std::size_t d = 2; d < first.size(); ++d) inner *= first[d];

  Shape shape = first;
  shape[1] = channels;
  std::vector<T> out(numel(shape));
  std::vector<std::size_t> ids, widths;
  for (const auto& p : parts) {
    ids.push_back(p.id);
    widths.push_back(p.shape()[1]);
  }
  for (std::size_t b = 0; b < outer; ++b) {
    std::size_t offset = 0;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      const auto& v = parts[i].value();
      const std::size_t block = widths[i] * inner;
      std::copy_n(v.begin() + b * block, block, out.begin() + (b * channels + offset) * inner);
      offset += widths[i];
    }
  }
  return detail::record<T>(
      *parts[0].tape, "concat_channels", ids, shape, std::move(out),
      [ids, widths, outer, inner, channels](Tape<T>& tape, std::size_t self) {
        const auto& g = tape.entry(self).grad;
        for (std::size_t b = 0; b < outer; ++b) {
          std::size_t offset = 0;
          for (std::size_t i = 0; i < ids.size(); ++i) {
            auto& gi = tape.grad(ids[i]);
            const std::size_t block = widths[i] * inner;
            const T* src = g.data() + (b * channels + offset) * inner;
            T* dst = gi.data() + b * block;
            for (std::size_t j = 0; j < block; ++j) dst[j] += src[j];
            offset += widths[i];
          }
        }
      });
}

template <typename T>
Var<T> concat_channels(std::initializer_list<Var<T>> parts) {
  std::vector<Var<T>> v(parts);
  return concat_channels<T>(std::span<const Var<T>>(v));
}

// ---------------------------------------------------------------------------
// Temporal convolution: per-vertex 1-D convolution along time with weights
// (out_channels, in_channels, k_t) shared across vertices, symmetric zero
// padding (k_t - 1) / 2, output length ceil(T / stride).

template <typename T>
Var<T> temporal_conv(Var<T> x, Var<T> w, std::size_t stride = 1) {
  detail::same_tape(x, w);
  detail::require_rank(x.shape(), 4, "temporal_conv input");
  detail::require_rank(w.shape(), 3, "temporal_conv weight");
  const std::size_t B = x.dim(0), C = x.dim(1), L = x.dim(2), V = x.dim(3);
  const std::size_t O = w.dim(0), K = w.dim(2);
  if (w.dim(1) != C)
    throw ShapeError("temporal_conv: weight " + shape_string(w.shape()) +
                     " does not match input " + shape_string(x.shape()));
  if (K % 2 == 0) throw ShapeError("temporal_conv: kernel size must be odd, got " + std::to_string(K));
  if (stride == 0) throw ShapeError("temporal_conv: stride must be positive");
  if (L == 0) throw ShapeError("temporal_conv: empty time axis");
  const std::size_t pad = (K - 1) / 2;
  const std::size_t Lo = (L + stride - 1) / stride;
  const auto& xv = x.value();
  const auto& wv = w.value();
  std::vector<T> out(B * O * Lo * V, T(0));
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t j = 0; j < K; ++j) {
          const T wk = wv[(o * C + c) * K + j];
          if (wk == T(0)) continue;
          for (std::size_t t = 0; t < Lo; ++t) {
            const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t * stride + j) -
                                       static_cast<std::ptrdiff_t>(pad);
            if (src < 0 || src >= static_cast<std::ptrdiff_t>(L)) continue;
            const T* xi = xv.data() + ((b * C + c) * L + static_cast<std::size_t>(src)) * V;
            T* yo = out.data() + ((b * O + o) * Lo + t) * V;
            for (std::size_t v = 0; v < V; ++v) yo[v] += wk * xi[v];
          }
        }
  const std::size_t ix = x.id, iw = w.id;
  return detail::record<T>(
      *x.tape, "temporal_conv", {ix, iw}, {B, O, Lo, V}, std::move(out),
      [=](Tape<T>& tape, std::size_t self) {
        const auto& g = tape.entry(self).grad;
        const auto& xv = tape.entry(ix).value;
        const auto& wv = tape.entry(iw).value;
        auto& gx = tape.grad(ix);
        auto& gw = tape.grad(iw);
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t o = 0; o < O; ++o)
            for (std::size_t c = 0; c < C; ++c)
              for (std::size_t j = 0; j < K; ++j) {
                const T wk = wv[(o * C + c) * K + j];
                T acc = 0;
                for (std::size_t t = 0; t < Lo; ++t) {
                  const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t * stride + j) -
                                             static_cast<std::ptrdiff_t>(pad);
                  if (src < 0 || src >= static_cast<std::ptrdiff_t>(L)) continue;
                  const std::size_t xo = ((b * C + c) * L + static_cast<std::size_t>(src)) * V;
                  const T* go = g.data() + ((b * O + o) * Lo + t) * V;
                  for (std::size_t v = 0; v < V; ++v) {
                    acc += go[v] * xv[xo + v];
                    gx[xo + v] += wk * go[v];
                  }
                }
                gw[(o * C + c) * K + j] += acc;
              }
      });
}

// ---------------------------------------------------------------------------
// Spatial graph convolution:
//   out[b,o,t,v] = sum_k sum_c W[k,o,c] sum_u (A_k ⊙ M_k)[v,u] x[b,c,t,u]
// where A_k is the normalized subset adjacency (constant) and M_k the
// learnable attention mask.

template <typename T>
Var<T> graph_conv(Var<T> x, const Tensor<T>& adjacency, Var<T> mask, Var<T> weight) {
  detail::same_tape(x, mask);
  detail::same_tape(x, weight);
  detail::require_rank(x.shape(), 4, "graph_conv input");
  detail::require_rank(adjacency.shape, 3, "graph_conv adjacency");
  detail::require_rank(mask.shape(), 3, "graph_conv mask");
  detail::require_rank(weight.shape(), 3, "graph_conv weight");
  const std::size_t B = x.dim(0), C = x.dim(1), L = x.dim(2), V = x.dim(3);
  const std::size_t K = adjacency.shape[0];
  if (mask.dim(0) != K || weight.dim(0) != K)
    throw ShapeError("graph_conv: subset count mismatch: adjacency " +
                     shape_string(adjacency.shape) + ", mask " + shape_string(mask.shape()) +
                     ", weight " + shape_string(weight.shape()));
  if (adjacency.shape[1] != V || adjacency.shape[2] != V || mask.dim(1) != V || mask.dim(2) != V)
    throw ShapeError("graph_conv: vertex count " + std::to_string(V) +
                     " does not match adjacency " + shape_string(adjacency.shape));
  if (weight.dim(2) != C)
    throw ShapeError("graph_conv: weight " + shape_string(weight.shape()) +
                     " does not match input channels of " + shape_string(x.shape()));
  const std::size_t O = weight.dim(1);
  const auto& xv = x.value();
  const auto& mv = mask.value();
  const auto& wv = weight.value();

  // Nonzero pattern of each normalized adjacency; A ⊙ M vanishes elsewhere.
  std::vector<std::vector<std::size_t>> nz(K);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t i = 0; i < V * V; ++i)
      if (adjacency.data[k * V * V + i] != T(0)) nz[k].push_back(i);
  const std::size_t rows = B * C * L;
  std::vector<T> agg(K * rows * V, T(0));
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t i : nz[k]) {
      const T a = adjacency.data[k * V * V + i] * mv[k * V * V + i];
      const std::size_t v = i / V, u = i % V;
      for (std::size_t r = 0; r < rows; ++r) agg[(k * rows + r) * V + v] += a * xv[r * V + u];
    }
  }
  const std::size_t plane = L * V;
  std::vector<T> out(B * O * plane, T(0));
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t o = 0; o < O; ++o) {
        T* yo = out.data() + (b * O + o) * plane;
        for (std::size_t c = 0; c < C; ++c) {
          const T wk = wv[(k * O + o) * C + c];
          if (wk == T(0)) continue;
          const T* ai = agg.data() + (k * rows + b * C * L + c * L) * V;
          for (std::size_t i = 0; i < plane; ++i) yo[i] += wk * ai[i];
        }
      }

  const std::size_t ix = x.id, im = mask.id, iw = weight.id;
  Tensor<T> adj = adjacency;
  return detail::record<T>(
      *x.tape, "graph_conv", {ix, im, iw}, {B, O, L, V}, std::move(out),
      [=, adj = std::move(adj)](Tape<T>& tape, std::size_t self) {
        const auto& e = tape.entry(self);
        const auto& g = e.grad;
        const auto& ag = e.saved;
        const auto& xs = tape.entry(ix).value;
        const auto& ms = tape.entry(im).value;
        const auto& ws = tape.entry(iw).value;
        auto& gx = tape.grad(ix);
        auto& gm = tape.grad(im);
        auto& gw = tape.grad(iw);
        std::vector<T> dagg(rows * V);
        for (std::size_t k = 0; k < K; ++k) {
          // Weight gradient and gradient w.r.t. the aggregated features.
          std::fill(dagg.begin(), dagg.end(), T(0));
          for (std::size_t b = 0; b < B; ++b)
            for (std::size_t o = 0; o < O; ++o) {
              const T* go = g.data() + (b * O + o) * plane;
              for (std::size_t c = 0; c < C; ++c) {
                const T* ai = ag.data() + (k * rows + b * C * L + c * L) * V;
                T* di = dagg.data() + (b * C * L + c * L) * V;
                const T wk = ws[(k * O + o) * C + c];
                T acc = 0;
                for (std::size_t i = 0; i < plane; ++i) {
                  acc += go[i] * ai[i];
                  di[i] += wk * go[i];
                }
                gw[(k * O + o) * C + c] += acc;
              }
            }
          // Back through the vertex aggregation.
          const T* a = adj.data.data() + k * V * V;
          const T* m = ms.data() + k * V * V;
          for (std::size_t i : nz[k]) {
            const std::size_t v = i / V, u = i % V;
            const T am = a[i] * m[i];
            T deff = 0;
            for (std::size_t r = 0; r < rows; ++r) {
              const T d = dagg[r * V + v];
              gx[r * V + u] += am * d;
              deff += d * xs[r * V + u];
            }
            gm[k * V * V + i] += deff * a[i];
          }
        }
      },
      std::move(agg));
}

// ---------------------------------------------------------------------------
// Per-channel standardization over (B, T, V) with learnable scale and shift.

enum class Mode { train, eval };

template <typename T>
struct NormState {
  Parameter<T>* running_mean = nullptr;
  Parameter<T>* running_var = nullptr;
  T momentum = T(0.1);
  T eps = T(1e-5);
  bool update_running = true;
};

template <typename T>
Var<T> channel_norm(Var<T> x, Var<T> gamma, Var<T> beta, NormState<T> state, Mode mode) {
  detail::same_tape(x, gamma);
  detail::same_tape(x, beta);
  detail::require_rank(x.shape(), 4, "channel_norm input");
  const std::size_t B = x.dim(0), C = x.dim(1), L = x.dim(2), V = x.dim(3);
  if (gamma.size() != C || beta.size() != C)
    throw ShapeError("channel_norm: scale/shift length does not match " + shape_string(x.shape()));
  if (mode == Mode::train && B == 0) throw ShapeError("channel_norm: empty batch in train mode");
  const std::size_t plane = L * V;
  const std::size_t count = B * plane;
  const auto& xv = x.value();
  const auto& gv = gamma.value();
  const auto& bv = beta.value();

  std::vector<T> mean(C, T(0)), inv_std(C, T(1));
  if (mode == Mode::train) {
    for (std::size_t c = 0; c < C; ++c) {
      T s = 0;
      for (std::size_t b = 0; b < B; ++b) {
        const T* p = xv.data() + (b * C + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) s += p[i];
      }
      const T mu = s / static_cast<T>(count);
      T ss = 0;
      for (std::size_t b = 0; b < B; ++b) {
        const T* p = xv.data() + (b * C + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) ss += (p[i] - mu) * (p[i] - mu);
      }
      const T var = ss / static_cast<T>(count);
      mean[c] = mu;
      inv_std[c] = T(1) / std::sqrt(var + state.eps);
      if (state.update_running && state.running_mean && state.running_var) {
        const T unbiased = count > 1 ? ss / static_cast<T>(count - 1) : var;
        T& rm = state.running_mean->value.data[c];
        T& rv = state.running_var->value.data[c];
        rm = (T(1) - state.momentum) * rm + state.momentum * mu;
        rv = (T(1) - state.momentum) * rv + state.momentum * unbiased;
      }
    }
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      const T rm = state.running_mean ? state.running_mean->value.data[c] : T(0);
      const T rv = state.running_var ? state.running_var->value.data[c] : T(1);
      mean[c] = rm;
      inv_std[c] = T(1) / std::sqrt(rv + state.eps);
    }
  }

  std::vector<T> xhat(xv.size());
  std::vector<T> out(xv.size());
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t o = (b * C + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const T h = (xv[o + i] - mean[c]) * inv_std[c];
        xhat[o + i] = h;
        out[o + i] = gv[c] * h + bv[c];
      }
    }
  const std::size_t ix = x.id, ig = gamma.id, ib = beta.id;
  const bool batch_stats = mode == Mode::train;
  return detail::record<T>(
      *x.tape, "channel_norm", {ix, ig, ib}, x.shape(), std::move(out),
      [=](Tape<T>& tape, std::size_t self) {
        const auto& e = tape.entry(self);
        const auto& g = e.grad;
        const auto& xh = e.saved;
        const auto& gs = tape.entry(ig).value;
        auto& gx = tape.grad(ix);
        auto& gg = tape.grad(ig);
        auto& gb = tape.grad(ib);
        for (std::size_t c = 0; c < C; ++c) {
          T sg = 0, sgh = 0;
          for (std::size_t b = 0; b < B; ++b) {
            const std::size_t o = (b * C + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              sg += g[o + i];
              sgh += g[o + i] * xh[o + i];
            }
          }
          gg[c] += sgh;
          gb[c] += sg;
          const T k = gs[c] * inv_std[c];
          const T n = static_cast<T>(count);
          for (std::size_t b = 0; b < B; ++b) {
            const std::size_t o = (b * C + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              if (batch_stats)
                gx[o + i] += k * (g[o + i] - sg / n - xh[o + i] * sgh / n);
              else
                gx[o + i] += k * g[o + i];
            }
          }
        }
      },
      std::move(xhat));
}

// ---------------------------------------------------------------------------
// Mean over time, vertices and groups of `group` consecutive batch rows:
// (B * group, C, T, V) -> (B, C).

template <typename T>
Var<T> global_average_pool(Var<T> x, std::size_t group = 1) {
  detail::require_rank(x.shape(), 4, "global_average_pool input");
  const std::size_t BG = x.dim(0), C = x.dim(1), plane = x.dim(2) * x.dim(3);
  if (group == 0 || BG % group != 0)
    throw ShapeError("global_average_pool: batch " + std::to_string(BG) +
                     " is not a multiple of group " + std::to_string(group));
  const std::size_t B = BG / group;
  const T denom = static_cast<T>(group * plane);
  const auto& xv = x.value();
  std::vector<T> out(B * C, T(0));
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c) {
      T s = 0;
      for (std::size_t m = 0; m < group; ++m) {
        const T* p = xv.data() + ((b * group + m) * C + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) s += p[i];
      }
      out[b * C + c] = s / denom;
    }
  const std::size_t ix = x.id;
  return detail::record<T>(*x.tape, "global_average_pool", {ix}, {B, C}, std::move(out),
                           [=](Tape<T>& tape, std::size_t self) {
                             const auto& g = tape.entry(self).grad;
                             auto& gx = tape.grad(ix);
                             for (std::size_t b = 0; b < B; ++b)
                               for (std::size_t c = 0; c < C; ++c) {
                                 const T d = g[b * C + c] / denom;
                                 for (std::size_t m = 0; m < group; ++m) {
                                   T* p = gx.data() + ((b * group + m) * C + c) * plane;
                                   for (std::size_t i = 0; i < plane; ++i) p[i] += d;
                                 }
                               }
                           });
}

// Affine map (B, C) -> (B, O) with weight (O, C) and bias (O).
template <typename T>
Var<T> linear(Var<T> x, Var<T> w, Var<T> bias) {
  detail::same_tape(x, w);
  detail::same_tape(x, bias);
  detail::require_rank(x.shape(), 2, "linear input");
  detail::require_rank(w.shape(), 2, "linear weight");
  const std::size_t B = x.dim(0), C = x.dim(1), O = w.dim(0);
  if (w.dim(1) != C || bias.size() != O)
    throw ShapeError("linear: weight " + shape_string(w.shape()) + " / bias " +
                     shape_string(bias.shape()) + " incompatible with input " +
                     shape_string(x.shape()));
  const auto& xv = x.value();
  const auto& wv = w.value();
  const auto& bv = bias.value();
  std::vector<T> out(B * O);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t o = 0; o < O; ++o) {
      T s = bv[o];
      for (std::size_t c = 0; c < C; ++c) s += wv[o * C + c] * xv[b * C + c];
      out[b * O + o] = s;
    }
  const std::size_t ix = x.id, iw = w.id, ib = bias.id;
  return detail::record<T>(*x.tape, "linear", {ix, iw, ib}, {B, O}, std::move(out),
                           [=](Tape<T>& tape, std::size_t self) {
                             const auto& g = tape.entry(self).grad;
                             const auto& xv = tape.entry(ix).value;
                             const auto& wv = tape.entry(iw).value;
                             auto& gx = tape.grad(ix);
                             auto& gw = tape.grad(iw);
                             auto& gb = tape.grad(ib);
                             for (std::size_t b = 0; b < B; ++b)
                               for (std::size_t o = 0; o < O; ++o) {
                                 const T d = g[b * O + o];
                                 gb[o] += d;
                                 for (std::size_t c = 0; c < C; ++c) {
                                   gw[o * C + c] += d * xv[b * C + c];
                                   gx[b * C + c] += d * wv[o * C + c];
                                 }
                               }
                           });
}

// Row-wise softmax of a (B, C) matrix, max-subtracted.
template <typename T>
Var<T> softmax(Var<T> x) {
  detail::require_rank(x.shape(), 2, "softmax input");
  const std::size_t B = x.dim(0), C = x.dim(1);
  const auto& xv = x.value();
  std::vector<T> out(B * C);
  for (std::size_t b = 0; b < B; ++b) {
    const T* row = xv.data() + b * C;
    const T mx = *std::max_element(row, row + C);
    T s = 0;
    for (std::size_t c = 0; c < C; ++c) {
      out[b * C + c] = std::exp(row[c] - mx);
      s += out[b * C + c];
    }
    for (std::size_t c = 0; c < C; ++c) out[b * C + c] /= s;
  }
  const std::size_t ix = x.id;
  return detail::record<T>(*x.tape, "softmax", {ix}, {B, C}, std::move(out),
                           [=](Tape<T>& tape, std::size_t self) {
                             const auto& e = tape.entry(self);
                             auto& gx = tape.grad(ix);
                             for (std::size_t b = 0; b < B; ++b) {
                               T dot = 0;
                               for (std::size_t c = 0; c < C; ++c)
                                 dot += e.grad[b * C + c] * e.value[b * C + c];
                               for (std::size_t c = 0; c < C; ++c)
                                 gx[b * C + c] += e.value[b * C + c] * (e.grad[b * C + c] - dot);
                             }
                           });
}

// Σ_i w_i x_i over same-shaped inputs with constant weights.
template <typename T>
Var<T> weighted_sum(std::span<const Var<T>> xs, std::span<const T> weights) {
  if (xs.empty()) throw ShapeError("weighted_sum: empty input list");
  if (xs.size() != weights.size())
    throw ShapeError("weighted_sum: " + std::to_string(xs.size()) + " inputs but " +
                     std::to_string(weights.size()) + " weights");
  std::vector<T> out(xs[0].size(), T(0));
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    detail::same_tape(xs[0], xs[i]);
    if (xs[i].shape() != xs[0].shape())
      throw ShapeError("weighted_sum: shape mismatch " + shape_string(xs[0].shape()) + " vs " +
                       shape_string(xs[i].shape()));
    const auto& v = xs[i].value();
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += weights[i] * v[j];
    ids.push_back(xs[i].id);
  }
  std::vector<T> w(weights.begin(), weights.end());
  return detail::record<T>(*xs[0].tape, "weighted_sum", ids, xs[0].shape(), std::move(out),
                           [ids, w](Tape<T>& tape, std::size_t self) {
                             const auto& g = tape.entry(self).grad;
                             for (std::size_t i = 0; i < ids.size(); ++i) {
                               auto& gi = tape.grad(ids[i]);
                               for (std::size_t j = 0; j < g.size(); ++j) gi[j] += w[i] * g[j];
                             }
                           });
}

// Mean over rows of -log(max(P[b, y_b], clamp)); P is a (B, C) distribution.
template <typename T>
Var<T> cross_entropy(Var<T> probs, std::span<const std::size_t> labels, T clamp = T(1e-12)) {
  detail::require_rank(probs.shape(), 2, "cross_entropy input");
  const std::size_t B = probs.dim(0), C = probs.dim(1);
  if (labels.size() != B)
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch " +
                     std::to_string(B));
  std::vector<std::size_t> y(labels.begin(), labels.end());
  for (std::size_t l : y)
    if (l >= C) throw ShapeError("cross_entropy: label " + std::to_string(l) + " out of range");
  const auto& pv = probs.value();
  T loss = 0;
  for (std::size_t b = 0; b < B; ++b) loss -= std::log(std::max(pv[b * C + y[b]], clamp));
  loss /= static_cast<T>(B);
  const std::size_t ip = probs.id;
  return detail::record<T>(*probs.tape, "cross_entropy", {ip}, {1}, {loss},
                           [=](Tape<T>& tape, std::size_t self) {
                             const T g = tape.entry(self).grad[0];
                             const auto& pv = tape.entry(ip).value;
                             auto& gp = tape.grad(ip);
                             for (std::size_t b = 0; b < B; ++b) {
                               const T p = pv[b * C + y[b]];
                               if (p > clamp) gp[b * C + y[b]] -= g / (static_cast<T>(B) * p);
                             }
                           });
}

}  // namespace fgcn
