#pragma once

#include <cstdint>
#include <vector>

#include "topokd/layers.hpp"

namespace topokd::nn {

// Forward-pass FLOPs counted as 2 x multiply-accumulates. Bias adds,
// normalisation, activations and pooling count as zero.

inline std::uint64_t layer_flops(const LayerSpec& spec, const Shape& in, const std::string& where = "layer") {
  const Shape out = infer_shape(spec, in, where);
  return std::visit(
      [&](const auto& l) -> std::uint64_t {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, Conv1D>) {
          return 2ULL * l.kernel * l.in_ch * l.out_ch * out[1];
        } else if constexpr (std::is_same_v<L, Conv2D>) {
          return 2ULL * l.kernel * l.kernel * l.in_ch * l.out_ch * out[1] * out[2];
        } else if constexpr (std::is_same_v<L, Dense>) {
          return 2ULL * l.in * l.out;
        } else if constexpr (std::is_same_v<L, ResidualBlock>) {
          std::uint64_t total = 0;
          Shape s = in;
          for (std::size_t i = 0; i < l.inner.size(); ++i) {
            total += layer_flops(l.inner[i], s, where + "." + std::to_string(i));
            s = infer_shape(l.inner[i], s, where + "." + std::to_string(i));
          }
          if (l.projection) total += layer_flops(projection_of(l), in, where + ".projection");
          return total;
        } else {
          return 0;
        }
      },
      spec.kind);
}

/// Per-layer FLOPs for one sample of shape `input_shape`.
inline std::vector<std::uint64_t> per_layer_flops(const std::vector<LayerSpec>& layers, const Shape& input_shape) {
  std::vector<std::uint64_t> out;
  Shape s = input_shape;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string where = "layer " + std::to_string(i);
    out.push_back(layer_flops(layers[i], s, where));
    s = infer_shape(layers[i], s, where);
  }
  return out;
}

inline std::uint64_t count_flops(const std::vector<LayerSpec>& layers, const Shape& input_shape) {
  std::uint64_t total = 0;
  for (auto f : per_layer_flops(layers, input_shape)) total += f;
  return total;
}

inline std::uint64_t count_flops(const Architecture& arch) { return count_flops(arch.layers, arch.input_shape); }

}  // namespace topokd::nn
