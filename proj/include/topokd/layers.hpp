#pragma once

#include <cmath>
#include <algorithm>
#include <cstdint>
#include <random>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "topokd/digest.hpp"
#include "topokd/error.hpp"
#include "topokd/tensor.hpp"

namespace topokd::nn {

struct Conv1D {
  std::size_t in_ch = 1, out_ch = 1, kernel = 1, stride = 1, pad = 0;
  friend bool operator==(const Conv1D&, const Conv1D&) = default;
};

/// Square kernel, same stride and padding on both spatial axes.
struct Conv2D {
  std::size_t in_ch = 1, out_ch = 1, kernel = 1, stride = 1, pad = 0;
  friend bool operator==(const Conv2D&, const Conv2D&) = default;
};

/// Normalises over the batch and every spatial position of each channel.
struct BatchNorm {
  std::size_t channels = 1;
  double eps = 1e-5;
  double momentum = 0.1;
  friend bool operator==(const BatchNorm&, const BatchNorm&) = default;
};

struct ReLU {
  friend bool operator==(const ReLU&, const ReLU&) = default;
};

struct Dense {
  std::size_t in = 1, out = 1;
  friend bool operator==(const Dense&, const Dense&) = default;
};

/// [N, C, spatial...] -> [N, C].
struct GlobalAvgPool {
  friend bool operator==(const GlobalAvgPool&, const GlobalAvgPool&) = default;
};

struct LayerSpec;

/// y = inner(x) + shortcut(x). The shortcut is the identity, or with
/// `projection` a kernel-1 convolution whose stride is the product of the inner
/// convolution strides.
struct ResidualBlock {
  std::vector<LayerSpec> inner;
  bool projection = false;
  friend bool operator==(const ResidualBlock&, const ResidualBlock&);
};

struct LayerSpec {
  using Kind = std::variant<Conv1D, Conv2D, BatchNorm, ReLU, Dense, GlobalAvgPool, ResidualBlock>;
  Kind kind;

  template <class T>
    requires(!std::is_same_v<std::decay_t<T>, LayerSpec> && std::is_constructible_v<Kind, T>)
  LayerSpec(T v) : kind(std::move(v)) {}  // NOLINT(google-explicit-constructor)

  template <class T>
  bool is() const {
    return std::holds_alternative<T>(kind);
  }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

inline bool operator==(const ResidualBlock& a, const ResidualBlock& b) {
  return a.projection == b.projection && a.inner == b.inner;
}

inline const char* layer_name(const LayerSpec& s) {
  constexpr const char* names[] = {"Conv1D", "Conv2D", "BatchNorm", "ReLU", "Dense", "GlobalAvgPool", "ResidualBlock"};
  return names[s.kind.index()];
}

/// The shortcut convolution of a projecting residual block.
inline LayerSpec projection_of(const ResidualBlock& block) {
  std::size_t in_ch = 0, out_ch = 0, stride = 1;
  int dims = 0;
  for (const auto& l : block.inner) {
    if (const auto* c = std::get_if<Conv1D>(&l.kind)) {
      if (dims == 0) in_ch = c->in_ch, dims = 1;
      out_ch = c->out_ch;
      stride *= c->stride;
    } else if (const auto* c2 = std::get_if<Conv2D>(&l.kind)) {
      if (dims == 0) in_ch = c2->in_ch, dims = 2;
      out_ch = c2->out_ch;
      stride *= c2->stride;
    } else if (l.is<ResidualBlock>()) {
      throw ShapeError("projection shortcut over nested residual blocks is not supported");
    }
  }
  if (dims == 0) throw ShapeError("projecting residual block has no convolution");
  if (dims == 1) return Conv1D{in_ch, out_ch, 1, stride, 0};
  return Conv2D{in_ch, out_ch, 1, stride, 0};
}

/// Layer stack plus the per-sample input shape ([C, L] or [C, H, W]) and class count.
struct Architecture {
  std::vector<LayerSpec> layers;
  Shape input_shape;
  std::size_t classes = 0;

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

/// Trainable tensors (in declaration order), their weight-decay eligibility,
/// and non-trained buffers (BatchNorm running mean/var).
struct Parameters {
  std::vector<Tensor> tensors;
  std::vector<bool> decay;
  std::vector<Tensor> buffers;

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += t.size();
    return n;
  }

  /// Digest over every trained value and buffer; equal digests mean equal bits.
  std::uint64_t digest() const {
    Digest d;
    d.text("Parameters/1");
    for (const auto& t : tensors) d.value(static_cast<std::uint64_t>(t.size())).values(t.values());
    for (const auto& t : buffers) d.value(static_cast<std::uint64_t>(t.size())).values(t.values());
    return d.get();
  }

  friend bool operator==(const Parameters&, const Parameters&) = default;
};

using Gradients = std::vector<Tensor>;

inline Gradients zeros_like(const Parameters& p) {
  Gradients g;
  g.reserve(p.tensors.size());
  for (const auto& t : p.tensors) g.emplace_back(t.shape());
  return g;
}

namespace detail {

struct Declaration {
  std::vector<Shape> params;
  std::vector<bool> decay;
  std::vector<std::size_t> fan_in;  // 0 for non-He tensors
  std::vector<double> fill;         // used when fan_in == 0
  std::vector<Shape> buffers;
  std::vector<double> buffer_fill;
};

inline void declare(const LayerSpec& spec, Declaration& d) {
  std::visit(
      [&](const auto& l) {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, Conv1D>) {
          d.params.push_back({l.out_ch, l.in_ch, l.kernel});
          d.decay.push_back(true), d.fan_in.push_back(l.in_ch * l.kernel), d.fill.push_back(0.0);
          d.params.push_back({l.out_ch});
          d.decay.push_back(true), d.fan_in.push_back(0), d.fill.push_back(0.0);
        } else if constexpr (std::is_same_v<L, Conv2D>) {
          d.params.push_back({l.out_ch, l.in_ch, l.kernel, l.kernel});
          d.decay.push_back(true), d.fan_in.push_back(l.in_ch * l.kernel * l.kernel), d.fill.push_back(0.0);
          d.params.push_back({l.out_ch});
          d.decay.push_back(true), d.fan_in.push_back(0), d.fill.push_back(0.0);
        } else if constexpr (std::is_same_v<L, Dense>) {
          d.params.push_back({l.out, l.in});
          d.decay.push_back(true), d.fan_in.push_back(l.in), d.fill.push_back(0.0);
          d.params.push_back({l.out});
          d.decay.push_back(true), d.fan_in.push_back(0), d.fill.push_back(0.0);
        } else if constexpr (std::is_same_v<L, BatchNorm>) {
          d.params.push_back({l.channels});
          d.decay.push_back(false), d.fan_in.push_back(0), d.fill.push_back(1.0);
          d.params.push_back({l.channels});
          d.decay.push_back(false), d.fan_in.push_back(0), d.fill.push_back(0.0);
          d.buffers.push_back({l.channels}), d.buffer_fill.push_back(0.0);
          d.buffers.push_back({l.channels}), d.buffer_fill.push_back(1.0);
        } else if constexpr (std::is_same_v<L, ResidualBlock>) {
          for (const auto& inner : l.inner) declare(inner, d);
          if (l.projection) declare(projection_of(l), d);
        }
      },
      spec.kind);
}

}  // namespace detail

/// He-uniform weights, zero biases, BatchNorm scale 1 / shift 0, drawn in
/// declaration order from a generator seeded with `seed`.
inline Parameters init_parameters(const Architecture& arch, std::uint64_t seed) {
  detail::Declaration d;
  for (const auto& l : arch.layers) detail::declare(l, d);
  std::mt19937_64 rng(seed);
  Parameters p;
  p.decay = d.decay;
  for (std::size_t i = 0; i < d.params.size(); ++i) {
    Tensor t(d.params[i], d.fill[i]);
    if (d.fan_in[i] > 0) {
      const double bound = std::sqrt(6.0 / static_cast<double>(d.fan_in[i]));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (double& v : t.storage()) v = u(rng);
    }
    p.tensors.push_back(std::move(t));
  }
  for (std::size_t i = 0; i < d.buffers.size(); ++i) p.buffers.emplace_back(d.buffers[i], d.buffer_fill[i]);
  return p;
}

/// Counts of parameter and buffer slots a layer occupies.
inline std::pair<std::size_t, std::size_t> slot_counts(const LayerSpec& spec) {
  detail::Declaration d;
  detail::declare(spec, d);
  return {d.params.size(), d.buffers.size()};
}

namespace detail {

inline std::size_t conv_out(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad, const std::string& where) {
  if (stride == 0) throw ShapeError(where + ": stride must be >= 1");
  if (in + 2 * pad < k) throw ShapeError(where + ": kernel " + std::to_string(k) + " larger than padded input " + std::to_string(in + 2 * pad));
  return (in + 2 * pad - k) / stride + 1;
}

}  // namespace detail

/// Per-sample output shape of one layer, throwing ShapeError naming `where`.
inline Shape infer_shape(const LayerSpec& spec, const Shape& in, const std::string& where) {
  auto fail = [&](const std::string& msg) -> Shape {
    throw ShapeError(where + " (" + layer_name(spec) + "): " + msg + ", got input " + shape_str(in));
  };
  return std::visit(
      [&](const auto& l) -> Shape {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, Conv1D>) {
          if (in.size() != 2 || in[0] != l.in_ch) return fail("expects [" + std::to_string(l.in_ch) + ", L]");
          return {l.out_ch, detail::conv_out(in[1], l.kernel, l.stride, l.pad, where)};
        } else if constexpr (std::is_same_v<L, Conv2D>) {
          if (in.size() != 3 || in[0] != l.in_ch) return fail("expects [" + std::to_string(l.in_ch) + ", H, W]");
          return {l.out_ch, detail::conv_out(in[1], l.kernel, l.stride, l.pad, where),
                  detail::conv_out(in[2], l.kernel, l.stride, l.pad, where)};
        } else if constexpr (std::is_same_v<L, BatchNorm>) {
          if (in.empty() || in[0] != l.channels) return fail("expects " + std::to_string(l.channels) + " channels");
          return in;
        } else if constexpr (std::is_same_v<L, ReLU>) {
          return in;
        } else if constexpr (std::is_same_v<L, Dense>) {
          if (element_count(in) != l.in) return fail("expects " + std::to_string(l.in) + " features");
          return {l.out};
        } else if constexpr (std::is_same_v<L, GlobalAvgPool>) {
          if (in.size() < 2) return fail("expects [C, spatial...]");
          return {in[0]};
        } else {
          Shape s = in;
          for (std::size_t i = 0; i < l.inner.size(); ++i)
            s = infer_shape(l.inner[i], s, where + "." + std::to_string(i));
          const Shape shortcut = l.projection ? infer_shape(projection_of(l), in, where + ".projection") : in;
          if (shortcut != s)
            return fail("residual branch shape " + shape_str(s) + " does not match shortcut " + shape_str(shortcut));
          return s;
        }
      },
      spec.kind);
}

/// Checks the whole stack chains and ends in [classes].
inline Shape validate(const Architecture& arch) {
  Shape s = arch.input_shape;
  for (std::size_t i = 0; i < arch.layers.size(); ++i) s = infer_shape(arch.layers[i], s, "layer " + std::to_string(i));
  if (s != Shape{arch.classes})
    throw ShapeError("network output " + shape_str(s) + " does not match class count " + std::to_string(arch.classes));
  return s;
}

/// Architecture with its parameters.
struct Network {
  Architecture arch;
  Parameters params;

  static Network create(Architecture arch, std::uint64_t seed) {
    validate(arch);
    auto params = init_parameters(arch, seed);
    return {std::move(arch), std::move(params)};
  }
};

inline void check_compatible(const Parameters& a, const Parameters& b) {
  auto same = [](const std::vector<Tensor>& x, const std::vector<Tensor>& y) {
    if (x.size() != y.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i)
      if (x[i].shape() != y[i].shape()) return false;
    return true;
  };
  if (!same(a.tensors, b.tensors) || !same(a.buffers, b.buffers))
    throw ShapeError("parameter sets belong to different architectures");
}

/// Elementwise (1 - kappa) * a + kappa * b over every tensor and buffer.
/// Running variances are floored at zero, which extrapolation (kappa outside
/// [0, 1]) can otherwise push negative.
inline Parameters interpolate_params(const Parameters& a, const Parameters& b, double kappa) {
  check_compatible(a, b);
  Parameters out = a;
  auto mix = [&](std::vector<Tensor>& dst, const std::vector<Tensor>& x, const std::vector<Tensor>& y) {
    for (std::size_t i = 0; i < dst.size(); ++i)
      for (std::size_t j = 0; j < dst[i].size(); ++j) dst[i][j] = (1.0 - kappa) * x[i][j] + kappa * y[i][j];
  };
  mix(out.tensors, a.tensors, b.tensors);
  mix(out.buffers, a.buffers, b.buffers);
  for (std::size_t i = 1; i < out.buffers.size(); i += 2)
    for (double& v : out.buffers[i].storage()) v = std::max(v, 0.0);
  return out;
}

}  // namespace topokd::nn
