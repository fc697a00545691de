#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "topokd/digest.hpp"
#include "topokd/layers.hpp"

namespace topokd::nn {

/// Wide-ResNet style network description. depth = 6n + 4 gives n residual
/// blocks in each of three groups of width base * widen * {1, 2, 4}.
/// `dims` selects 1D (time series) or 2D (persistence image) convolutions.
struct NetConfig {
  int dims = 1;
  int depth = 16;
  int widen = 1;
  std::size_t base_width = 16;
  std::size_t stem_kernel = 3;
  std::size_t stem_stride = 1;

  std::uint64_t digest() const {
    return Digest{}
        .text("NetConfig/1")
        .value(dims)
        .value(depth)
        .value(widen)
        .value(static_cast<std::uint64_t>(base_width))
        .value(static_cast<std::uint64_t>(stem_kernel))
        .value(static_cast<std::uint64_t>(stem_stride))
        .get();
  }

  friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

namespace detail {

inline LayerSpec conv(int dims, std::size_t in, std::size_t out, std::size_t k, std::size_t stride, std::size_t pad) {
  if (dims == 1) return Conv1D{in, out, k, stride, pad};
  return Conv2D{in, out, k, stride, pad};
}

}  // namespace detail

/// Builds the layer stack for `cfg` on inputs of `input_shape` ([C, L] or [C, H, W]).
inline Architecture build_wrn(const NetConfig& cfg, const Shape& input_shape, std::size_t classes) {
  if (cfg.dims != 1 && cfg.dims != 2) throw InvalidArgument("NetConfig.dims must be 1 or 2");
  if (input_shape.size() != static_cast<std::size_t>(cfg.dims) + 1)
    throw ShapeError("input shape " + shape_str(input_shape) + " does not match a " + std::to_string(cfg.dims) + "D network");
  if (cfg.depth < 10 || (cfg.depth - 4) % 6 != 0) throw InvalidArgument("WRN depth must be 6n + 4 with n >= 1");
  if (cfg.widen < 1 || cfg.base_width < 1 || cfg.stem_kernel < 1 || cfg.stem_stride < 1)
    throw InvalidArgument("NetConfig: widths, kernel and stride must be positive");
  if (classes < 2) throw InvalidArgument("a classifier needs at least 2 classes");

  const int blocks = (cfg.depth - 4) / 6;
  const std::size_t in_ch = input_shape[0];
  const std::size_t stem_pad = cfg.stem_kernel > cfg.stem_stride ? (cfg.stem_kernel - cfg.stem_stride) / 2 : 0;

  Architecture arch;
  arch.input_shape = input_shape;
  arch.classes = classes;
  auto& L = arch.layers;
  L.push_back(detail::conv(cfg.dims, in_ch, cfg.base_width, cfg.stem_kernel, cfg.stem_stride, stem_pad));
  L.push_back(BatchNorm{cfg.base_width});
  L.push_back(ReLU{});

  std::size_t width = cfg.base_width;
  for (int group = 0; group < 3; ++group) {
    const std::size_t out = cfg.base_width * static_cast<std::size_t>(cfg.widen) << group;
    for (int b = 0; b < blocks; ++b) {
      const std::size_t stride = (group > 0 && b == 0) ? 2 : 1;
      ResidualBlock block;
      block.inner = {detail::conv(cfg.dims, width, out, 3, stride, 1), BatchNorm{out}, ReLU{},
                     detail::conv(cfg.dims, out, out, 3, 1, 1), BatchNorm{out}};
      block.projection = width != out || stride != 1;
      L.push_back(std::move(block));
      L.push_back(ReLU{});
      width = out;
    }
  }
  L.push_back(GlobalAvgPool{});
  L.push_back(Dense{width, classes});
  validate(arch);
  return arch;
}

}  // namespace topokd::nn
