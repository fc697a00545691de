#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "topokd/layers.hpp"

namespace topokd::nn {

enum class Mode { train, eval };

/// Activations a layer keeps for its backward pass.
struct LayerCache {
  Tensor input;
  Tensor normalized;            // BatchNorm x-hat
  std::vector<double> inv_std;  // BatchNorm 1/sqrt(var + eps) per channel
  std::vector<LayerCache> inner;
  std::vector<LayerCache> shortcut;  // one entry for a projecting residual block
  std::size_t param_offset = 0;
  std::size_t buffer_offset = 0;
};

struct ForwardCache {
  Mode mode = Mode::train;
  std::vector<LayerCache> layers;
};

struct ForwardResult {
  Tensor logits;
  ForwardCache cache;
};

namespace detail {

inline Shape sample_shape(const Tensor& x) { return Shape(x.shape().begin() + 1, x.shape().end()); }

// Output positions o in [lo, hi) whose input index o*stride + k - pad falls inside [0, in).
inline std::pair<std::size_t, std::size_t> valid_outputs(std::size_t k, std::size_t stride, std::size_t pad,
                                                         std::size_t in, std::size_t out) {
  const auto s = static_cast<long long>(stride);
  const long long shift = static_cast<long long>(k) - static_cast<long long>(pad);
  long long lo = shift >= 0 ? 0 : (-shift + s - 1) / s;
  long long top = static_cast<long long>(in) - 1 - shift;
  if (top < 0) return {0, 0};
  long long hi = std::min<long long>(top / s + 1, static_cast<long long>(out));
  if (lo >= hi) return {0, 0};
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

struct Engine {
  const Parameters& params;
  std::vector<Tensor>* running;  // non-null: update BatchNorm running stats
  Mode mode;

  Tensor conv1d(const Conv1D& l, const Tensor& x, std::size_t p) const {
    const auto n = x.dim(0), cin = l.in_ch, len = x.dim(2);
    const auto lout = (len + 2 * l.pad - l.kernel) / l.stride + 1;
    const Tensor& w = params.tensors[p];
    const Tensor& b = params.tensors[p + 1];
    Tensor y({n, l.out_ch, lout});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t co = 0; co < l.out_ch; ++co) {
        double* yr = y.data() + (i * l.out_ch + co) * lout;
        std::fill(yr, yr + lout, b[co]);
        for (std::size_t ci = 0; ci < cin; ++ci) {
          const double* xr = x.data() + (i * cin + ci) * len;
          for (std::size_t k = 0; k < l.kernel; ++k) {
            const double wv = w[(co * cin + ci) * l.kernel + k];
            const auto [lo, hi] = valid_outputs(k, l.stride, l.pad, len, lout);
            for (std::size_t o = lo; o < hi; ++o) yr[o] += wv * xr[o * l.stride + k - l.pad];
          }
        }
      }
    return y;
  }

  Tensor conv1d_back(const Conv1D& l, const LayerCache& c, const Tensor& dy, Gradients& g) const {
    const Tensor& x = c.input;
    const auto n = x.dim(0), cin = l.in_ch, len = x.dim(2), lout = dy.dim(2);
    const Tensor& w = params.tensors[c.param_offset];
    Tensor& dw = g[c.param_offset];
    Tensor& db = g[c.param_offset + 1];
    Tensor dx(x.shape());
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t co = 0; co < l.out_ch; ++co) {
        const double* dyr = dy.data() + (i * l.out_ch + co) * lout;
        for (std::size_t o = 0; o < lout; ++o) db[co] += dyr[o];
        for (std::size_t ci = 0; ci < cin; ++ci) {
          const double* xr = x.data() + (i * cin + ci) * len;
          double* dxr = dx.data() + (i * cin + ci) * len;
          for (std::size_t k = 0; k < l.kernel; ++k) {
            const std::size_t wi = (co * cin + ci) * l.kernel + k;
            const double wv = w[wi];
            const auto [lo, hi] = valid_outputs(k, l.stride, l.pad, len, lout);
            double acc = 0.0;
            for (std::size_t o = lo; o < hi; ++o) {
              const std::size_t t = o * l.stride + k - l.pad;
              acc += dyr[o] * xr[t];
              dxr[t] += dyr[o] * wv;
            }
            dw[wi] += acc;
          }
        }
      }
    return dx;
  }

  Tensor conv2d(const Conv2D& l, const Tensor& x, std::size_t p) const {
    const auto n = x.dim(0), cin = l.in_ch, h = x.dim(2), wd = x.dim(3);
    const auto ho = (h + 2 * l.pad - l.kernel) / l.stride + 1;
    const auto wo = (wd + 2 * l.pad - l.kernel) / l.stride + 1;
    const Tensor& w = params.tensors[p];
    const Tensor& b = params.tensors[p + 1];
    Tensor y({n, l.out_ch, ho, wo});
    const std::size_t k = l.kernel;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t co = 0; co < l.out_ch; ++co) {
        double* yp = y.data() + (i * l.out_ch + co) * ho * wo;
        std::fill(yp, yp + ho * wo, b[co]);
        for (std::size_t ci = 0; ci < cin; ++ci) {
          const double* xp = x.data() + (i * cin + ci) * h * wd;
          for (std::size_t kh = 0; kh < k; ++kh) {
            const auto [rlo, rhi] = valid_outputs(kh, l.stride, l.pad, h, ho);
            for (std::size_t kw = 0; kw < k; ++kw) {
              const double wv = w[((co * cin + ci) * k + kh) * k + kw];
              const auto [clo, chi] = valid_outputs(kw, l.stride, l.pad, wd, wo);
              for (std::size_t r = rlo; r < rhi; ++r) {
                const double* xr = xp + (r * l.stride + kh - l.pad) * wd + kw - l.pad;
                double* yr = yp + r * wo;
                for (std::size_t cc = clo; cc < chi; ++cc) yr[cc] += wv * xr[cc * l.stride];
              }
            }
          }
        }
      }
    return y;
  }

  Tensor conv2d_back(const Conv2D& l, const LayerCache& c, const Tensor& dy, Gradients& g) const {
    const Tensor& x = c.input;
    const auto n = x.dim(0), cin = l.in_ch, h = x.dim(2), wd = x.dim(3);
    const auto ho = dy.dim(2), wo = dy.dim(3);
    const std::size_t k = l.kernel;
    const Tensor& w = params.tensors[c.param_offset];
    Tensor& dw = g[c.param_offset];
    Tensor& db = g[c.param_offset + 1];
    Tensor dx(x.shape());
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t co = 0; co < l.out_ch; ++co) {
        const double* dyp = dy.data() + (i * l.out_ch + co) * ho * wo;
        for (std::size_t o = 0; o < ho * wo; ++o) db[co] += dyp[o];
        for (std::size_t ci = 0; ci < cin; ++ci) {
          const double* xp = x.data() + (i * cin + ci) * h * wd;
          double* dxp = dx.data() + (i * cin + ci) * h * wd;
          for (std::size_t kh = 0; kh < k; ++kh) {
            const auto [rlo, rhi] = valid_outputs(kh, l.stride, l.pad, h, ho);
            for (std::size_t kw = 0; kw < k; ++kw) {
              const std::size_t wi = ((co * cin + ci) * k + kh) * k + kw;
              const double wv = w[wi];
              const auto [clo, chi] = valid_outputs(kw, l.stride, l.pad, wd, wo);
              double acc = 0.0;
              for (std::size_t r = rlo; r < rhi; ++r) {
                const std::size_t off = (r * l.stride + kh - l.pad) * wd + kw - l.pad;
                const double* xr = xp + off;
                double* dxr = dxp + off;
                const double* dyr = dyp + r * wo;
                for (std::size_t cc = clo; cc < chi; ++cc) {
                  acc += dyr[cc] * xr[cc * l.stride];
                  dxr[cc * l.stride] += dyr[cc] * wv;
                }
              }
              dw[wi] += acc;
            }
          }
        }
      }
    return dx;
  }

  Tensor batchnorm(const BatchNorm& l, const Tensor& x, std::size_t p, std::size_t b, LayerCache* cache) const {
    const std::size_t n = x.dim(0), ch = l.channels, s = x.row_size() / ch, m = n * s;
    const Tensor& gamma = params.tensors[p];
    const Tensor& beta = params.tensors[p + 1];
    Tensor y(x.shape());
    Tensor xhat(x.shape());
    std::vector<double> inv_std(ch);
    for (std::size_t c = 0; c < ch; ++c) {
      double mean, var;
      if (mode == Mode::train) {
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t t = 0; t < s; ++t) sum += x[(i * ch + c) * s + t];
        mean = sum / static_cast<double>(m);
        double sq = 0.0;
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t t = 0; t < s; ++t) {
            const double d = x[(i * ch + c) * s + t] - mean;
            sq += d * d;
          }
        var = sq / static_cast<double>(m);
        if (running) {
          auto& rm = (*running)[b];
          auto& rv = (*running)[b + 1];
          const double unbiased = m > 1 ? sq / static_cast<double>(m - 1) : var;
          rm[c] = (1.0 - l.momentum) * rm[c] + l.momentum * mean;
          rv[c] = (1.0 - l.momentum) * rv[c] + l.momentum * unbiased;
        }
      } else {
        mean = params.buffers[b][c];
        var = params.buffers[b + 1][c];
      }
      inv_std[c] = 1.0 / std::sqrt(var + l.eps);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t t = 0; t < s; ++t) {
          const std::size_t idx = (i * ch + c) * s + t;
          xhat[idx] = (x[idx] - mean) * inv_std[c];
          y[idx] = gamma[c] * xhat[idx] + beta[c];
        }
    }
    if (cache) {
      cache->normalized = std::move(xhat);
      cache->inv_std = std::move(inv_std);
    }
    return y;
  }

  Tensor batchnorm_back(const BatchNorm& l, const LayerCache& c, const Tensor& dy, Gradients& g, Mode cache_mode) const {
    const Tensor& xhat = c.normalized;
    const std::size_t n = xhat.dim(0), ch = l.channels, s = xhat.row_size() / ch;
    const double m = static_cast<double>(n * s);
    const Tensor& gamma = params.tensors[c.param_offset];
    Tensor& dgamma = g[c.param_offset];
    Tensor& dbeta = g[c.param_offset + 1];
    Tensor dx(xhat.shape());
    for (std::size_t k = 0; k < ch; ++k) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t t = 0; t < s; ++t) {
          const std::size_t idx = (i * ch + k) * s + t;
          sum_dy += dy[idx];
          sum_dy_xhat += dy[idx] * xhat[idx];
        }
      dgamma[k] += sum_dy_xhat;
      dbeta[k] += sum_dy;
      const double scale = gamma[k] * c.inv_std[k];
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t t = 0; t < s; ++t) {
          const std::size_t idx = (i * ch + k) * s + t;
          if (cache_mode == Mode::train)
            dx[idx] = scale * (dy[idx] - sum_dy / m - xhat[idx] * sum_dy_xhat / m);
          else
            dx[idx] = scale * dy[idx];
        }
    }
    return dx;
  }

  Tensor dense(const Dense& l, const Tensor& x, std::size_t p) const {
    const std::size_t n = x.dim(0);
    const Tensor& w = params.tensors[p];
    const Tensor& b = params.tensors[p + 1];
    Tensor y({n, l.out});
    for (std::size_t i = 0; i < n; ++i) {
      const double* xr = x.data() + i * l.in;
      for (std::size_t o = 0; o < l.out; ++o) {
        const double* wr = w.data() + o * l.in;
        double acc = b[o];
        for (std::size_t j = 0; j < l.in; ++j) acc += wr[j] * xr[j];
        y[i * l.out + o] = acc;
      }
    }
    return y;
  }

  Tensor dense_back(const Dense& l, const LayerCache& c, const Tensor& dy, Gradients& g) const {
    const Tensor& x = c.input;
    const std::size_t n = x.dim(0);
    const Tensor& w = params.tensors[c.param_offset];
    Tensor& dw = g[c.param_offset];
    Tensor& db = g[c.param_offset + 1];
    Tensor dx(x.shape());
    for (std::size_t i = 0; i < n; ++i) {
      const double* xr = x.data() + i * l.in;
      double* dxr = dx.data() + i * l.in;
      for (std::size_t o = 0; o < l.out; ++o) {
        const double d = dy[i * l.out + o];
        db[o] += d;
        const double* wr = w.data() + o * l.in;
        double* dwr = dw.data() + o * l.in;
        for (std::size_t j = 0; j < l.in; ++j) {
          dwr[j] += d * xr[j];
          dxr[j] += d * wr[j];
        }
      }
    }
    return dx;
  }

  Tensor forward_layer(const LayerSpec& spec, const Tensor& x, std::size_t& p, std::size_t& b, LayerCache* cache,
                       const std::string& where) const {
    infer_shape(spec, sample_shape(x), where);
    if (cache) {
      cache->input = x;
      cache->param_offset = p;
      cache->buffer_offset = b;
    }
    return std::visit(
        [&](const auto& l) -> Tensor {
          using L = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<L, Conv1D>) {
            auto y = conv1d(l, x, p);
            p += 2;
            return y;
          } else if constexpr (std::is_same_v<L, Conv2D>) {
            auto y = conv2d(l, x, p);
            p += 2;
            return y;
          } else if constexpr (std::is_same_v<L, BatchNorm>) {
            auto y = batchnorm(l, x, p, b, cache);
            p += 2;
            b += 2;
            return y;
          } else if constexpr (std::is_same_v<L, ReLU>) {
            Tensor y = x;
            for (double& v : y.storage()) v = v > 0.0 ? v : 0.0;
            return y;
          } else if constexpr (std::is_same_v<L, Dense>) {
            auto y = dense(l, x, p);
            p += 2;
            return y;
          } else if constexpr (std::is_same_v<L, GlobalAvgPool>) {
            const std::size_t n = x.dim(0), ch = x.dim(1), s = x.row_size() / ch;
            Tensor y({n, ch});
            for (std::size_t i = 0; i < n * ch; ++i) {
              double sum = 0.0;
              for (std::size_t t = 0; t < s; ++t) sum += x[i * s + t];
              y[i] = sum / static_cast<double>(s);
            }
            return y;
          } else {
            Tensor h = x;
            if (cache) cache->inner.resize(l.inner.size());
            for (std::size_t i = 0; i < l.inner.size(); ++i)
              h = forward_layer(l.inner[i], h, p, b, cache ? &cache->inner[i] : nullptr, where + "." + std::to_string(i));
            if (l.projection) {
              if (cache) cache->shortcut.resize(1);
              const Tensor s = forward_layer(projection_of(l), x, p, b, cache ? &cache->shortcut[0] : nullptr,
                                             where + ".projection");
              for (std::size_t i = 0; i < h.size(); ++i) h[i] += s[i];
            } else {
              for (std::size_t i = 0; i < h.size(); ++i) h[i] += x[i];
            }
            return h;
          }
        },
        spec.kind);
  }

  Tensor backward_layer(const LayerSpec& spec, const LayerCache& c, const Tensor& dy, Gradients& g, Mode cache_mode) const {
    return std::visit(
        [&](const auto& l) -> Tensor {
          using L = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<L, Conv1D>) {
            return conv1d_back(l, c, dy, g);
          } else if constexpr (std::is_same_v<L, Conv2D>) {
            return conv2d_back(l, c, dy, g);
          } else if constexpr (std::is_same_v<L, BatchNorm>) {
            return batchnorm_back(l, c, dy, g, cache_mode);
          } else if constexpr (std::is_same_v<L, ReLU>) {
            Tensor dx = dy;
            for (std::size_t i = 0; i < dx.size(); ++i)
              if (!(c.input[i] > 0.0)) dx[i] = 0.0;
            return dx;
          } else if constexpr (std::is_same_v<L, Dense>) {
            return dense_back(l, c, dy, g);
          } else if constexpr (std::is_same_v<L, GlobalAvgPool>) {
            Tensor dx(c.input.shape());
            const std::size_t rows = dy.size(), s = c.input.size() / rows;
            for (std::size_t i = 0; i < rows; ++i)
              for (std::size_t t = 0; t < s; ++t) dx[i * s + t] = dy[i] / static_cast<double>(s);
            return dx;
          } else {
            if (c.inner.size() != l.inner.size()) throw ShapeError("backward: residual cache does not match block");
            Tensor d = dy;
            for (std::size_t i = l.inner.size(); i-- > 0;) d = backward_layer(l.inner[i], c.inner[i], d, g, cache_mode);
            if (l.projection) {
              const Tensor ds = backward_layer(projection_of(l), c.shortcut.at(0), dy, g, cache_mode);
              for (std::size_t i = 0; i < d.size(); ++i) d[i] += ds[i];
            } else {
              for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i];
            }
            return d;
          }
        },
        spec.kind);
  }
};

inline void check_input(const Architecture& arch, const Tensor& x) {
  if (x.rank() != arch.input_shape.size() + 1 || sample_shape(x) != arch.input_shape)
    throw ShapeError("input batch " + shape_str(x.shape()) + " does not match network input " +
                     shape_str(arch.input_shape));
}

inline Tensor run(const Architecture& arch, const Parameters& params, std::vector<Tensor>* running, const Tensor& x,
                  Mode mode, ForwardCache* cache, std::size_t stop_after = static_cast<std::size_t>(-1)) {
  check_input(arch, x);
  Engine e{params, running, mode};
  if (cache) {
    cache->mode = mode;
    cache->layers.assign(arch.layers.size(), {});
  }
  std::size_t p = 0, b = 0;
  Tensor h = x;
  for (std::size_t i = 0; i < arch.layers.size() && i <= stop_after; ++i)
    h = e.forward_layer(arch.layers[i], h, p, b, cache ? &cache->layers[i] : nullptr, "layer " + std::to_string(i));
  return h;
}

}  // namespace detail

/// Forward pass with a cache for `backward`. In train mode BatchNorm uses batch
/// statistics and folds them into the running statistics held in `net`.
inline ForwardResult forward(Network& net, const Tensor& x, Mode mode) {
  ForwardResult r;
  r.logits = detail::run(net.arch, net.params, mode == Mode::train ? &net.params.buffers : nullptr, x, mode, &r.cache);
  return r;
}

/// Forward pass that leaves `net` untouched (running statistics are not updated).
inline ForwardResult forward(const Network& net, const Tensor& x, Mode mode) {
  ForwardResult r;
  r.logits = detail::run(net.arch, net.params, nullptr, x, mode, &r.cache);
  return r;
}

/// Eval-mode logits without a cache.
inline Tensor predict(const Network& net, const Tensor& x) {
  return detail::run(net.arch, net.params, nullptr, x, Mode::eval, nullptr);
}

/// Eval-mode activations after the last GlobalAvgPool layer.
inline Tensor penultimate_features(const Network& net, const Tensor& x) {
  std::size_t last = static_cast<std::size_t>(-1);
  for (std::size_t i = 0; i < net.arch.layers.size(); ++i)
    if (net.arch.layers[i].is<GlobalAvgPool>()) last = i;
  if (last == static_cast<std::size_t>(-1)) throw ShapeError("network has no GlobalAvgPool layer");
  return detail::run(net.arch, net.params, nullptr, x, Mode::eval, nullptr, last);
}

/// Parameter gradients of sum(dlogits * logits) for the forward pass in `cache`.
inline Gradients backward(const Network& net, const ForwardCache& cache, const Tensor& dlogits) {
  if (cache.layers.size() != net.arch.layers.size()) throw ShapeError("backward: cache was produced by a different network");
  if (cache.layers.empty()) return {};
  const Shape expected{cache.layers.front().input.dim(0), net.arch.classes};
  if (dlogits.shape() != expected)
    throw ShapeError("backward: dlogits " + shape_str(dlogits.shape()) + " does not match logits " + shape_str(expected));
  detail::Engine e{net.params, nullptr, cache.mode};
  Gradients g = zeros_like(net.params);
  Tensor d = dlogits;
  for (std::size_t i = net.arch.layers.size(); i-- > 0;) d = e.backward_layer(net.arch.layers[i], cache.layers[i], d, g, cache.mode);
  return g;
}

}  // namespace topokd::nn
