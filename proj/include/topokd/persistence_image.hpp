#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "topokd/digest.hpp"
#include "topokd/error.hpp"
#include "topokd/persistence.hpp"

namespace topokd::tda {

enum class Weighting : std::uint8_t { linear_persistence = 0 };

/// Rasterisation parameters. The image plane is (birth, persistence) with
/// birth in [birth_lo, birth_hi] and persistence in [0, birth_hi - birth_lo].
struct PIConfig {
  double sigma = 0.25;
  double birth_lo = -10.0;
  double birth_hi = 10.0;
  std::size_t resolution = 64;
  Weighting weight = Weighting::linear_persistence;
  bool include_essential = false;
  bool normalize = true;

  double persistence_hi() const { return birth_hi - birth_lo; }

  void validate() const {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw InvalidArgument("PIConfig: sigma must be > 0");
    if (!(birth_hi > birth_lo)) throw InvalidArgument("PIConfig: birth range must satisfy hi > lo");
    if (resolution < 1) throw InvalidArgument("PIConfig: resolution must be >= 1");
  }

  std::uint64_t digest() const {
    return Digest{}
        .text("PIConfig/1")
        .value(sigma)
        .value(birth_lo)
        .value(birth_hi)
        .value(static_cast<std::uint64_t>(resolution))
        .value(static_cast<std::uint8_t>(weight))
        .value(static_cast<std::uint8_t>(include_essential))
        .value(static_cast<std::uint8_t>(normalize))
        .get();
  }

  static PIConfig geneactiv() { return {.sigma = 0.25, .birth_lo = -10.0, .birth_hi = 10.0}; }
  static PIConfig pamap2() { return {.sigma = 0.015, .birth_lo = -1.0, .birth_hi = 1.0}; }

  friend bool operator==(const PIConfig&, const PIConfig&) = default;
};

/// resolution x resolution grid; row r covers persistence bin r (0 at the
/// diagonal), column c covers birth bin c.
struct PersistenceImage {
  std::size_t resolution = 0;
  std::vector<double> grid;
  bool normalized = false;
  std::uint64_t config_hash = 0;

  double at(std::size_t row, std::size_t col) const { return grid[row * resolution + col]; }
  double max() const { return grid.empty() ? 0.0 : *std::max_element(grid.begin(), grid.end()); }
  double sum() const {
    double s = 0.0;
    for (double v : grid) s += v;
    return s;
  }

  friend bool operator==(const PersistenceImage&, const PersistenceImage&) = default;
};

/// One image per window channel, in channel order.
using PIStack = std::vector<PersistenceImage>;

/// Mass of a unit normal on [a, b] (standardised units), evaluated on the
/// erfc tail that avoids cancellation.
inline double normal_interval_mass(double a, double b) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  if (a >= 0.0) return 0.5 * (std::erfc(a * kInvSqrt2) - std::erfc(b * kInvSqrt2));
  if (b <= 0.0) return 0.5 * (std::erfc(-b * kInvSqrt2) - std::erfc(-a * kInvSqrt2));
  return 1.0 - 0.5 * std::erfc(-a * kInvSqrt2) - 0.5 * std::erfc(b * kInvSqrt2);
}

struct PixelBox {
  double x0, x1, y0, y1;
};

/// Exact integral of an isotropic unit-mass Gaussian centred at (cx, cy) over a box.
inline double gaussian_pixel_mass(double cx, double cy, const PixelBox& box, double sigma) {
  if (!(box.x1 > box.x0) || !(box.y1 > box.y0)) throw InvalidArgument("gaussian_pixel_mass: empty box");
  if (!(sigma > 0.0)) throw InvalidArgument("gaussian_pixel_mass: sigma must be > 0");
  return normal_interval_mass((box.x0 - cx) / sigma, (box.x1 - cx) / sigma) *
         normal_interval_mass((box.y0 - cy) / sigma, (box.y1 - cy) / sigma);
}

inline double point_weight(const PersistencePoint& p, Weighting w) {
  switch (w) {
    case Weighting::linear_persistence:
      return p.persistence();
  }
  return 0.0;
}

/// Rasterises a diagram: every point adds weight * (pixel mass of a Gaussian at
/// (birth, persistence)) to each pixel. The Gaussian is separable, so each
/// point costs 2 * resolution erfc evaluations.
inline PersistenceImage diagram_to_image(const PersistenceDiagram& pd, const PIConfig& cfg) {
  cfg.validate();
  const std::size_t r = cfg.resolution;
  PersistenceImage img;
  img.resolution = r;
  img.grid.assign(r * r, 0.0);
  img.config_hash = cfg.digest();

  const double bx = (cfg.birth_hi - cfg.birth_lo) / static_cast<double>(r);
  const double by = cfg.persistence_hi() / static_cast<double>(r);
  std::vector<double> xmass(r), ymass(r);

  for (const auto& p : pd.points) {
    if (p.essential && !cfg.include_essential) continue;
    const double w = point_weight(p, cfg.weight);
    if (w == 0.0) continue;
    const double cx = p.birth;
    const double cy = p.persistence();
    for (std::size_t i = 0; i < r; ++i) {
      const double x0 = cfg.birth_lo + bx * static_cast<double>(i);
      const double x1 = i + 1 == r ? cfg.birth_hi : cfg.birth_lo + bx * static_cast<double>(i + 1);
      xmass[i] = normal_interval_mass((x0 - cx) / cfg.sigma, (x1 - cx) / cfg.sigma);
      const double y0 = by * static_cast<double>(i);
      const double y1 = i + 1 == r ? cfg.persistence_hi() : by * static_cast<double>(i + 1);
      ymass[i] = w * normal_interval_mass((y0 - cy) / cfg.sigma, (y1 - cy) / cfg.sigma);
    }
    for (std::size_t row = 0; row < r; ++row) {
      const double ym = ymass[row];
      if (ym == 0.0) continue;
      double* line = img.grid.data() + row * r;
      for (std::size_t col = 0; col < r; ++col) line[col] += ym * xmass[col];
    }
  }

  if (cfg.normalize) {
    const double m = img.max();
    if (m > 0.0) {
      for (double& v : img.grid) v /= m;
      img.normalized = true;
    }
  }
  return img;
}

inline PIStack window_to_images(const SignalWindow& w, const PIConfig& cfg) {
  PIStack stack;
  for (const auto& pd : window_persistence(w)) stack.push_back(diagram_to_image(pd, cfg));
  return stack;
}

/// Per-channel persistence images for a batch of windows. Each window writes
/// only its own output slot, so the result does not depend on `workers`.
inline std::vector<PIStack> extract_pi_batch(std::span<const SignalWindow> windows, const PIConfig& cfg,
                                             unsigned workers = 1) {
  cfg.validate();
  if (!windows.empty()) {
    const auto ch = windows.front().channels();
    for (std::size_t i = 0; i < windows.size(); ++i)
      if (windows[i].channels() != ch)
        throw InvalidArgument("window " + std::to_string(i) + ": channel count differs from window 0");
  }

  std::vector<PIStack> out(windows.size());
  std::vector<std::exception_ptr> errors(windows.size());
  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < windows.size(); i += stride) {
      try {
        out[i] = window_to_images(windows[i], cfg);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };

  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(1, windows.size()))));
  if (workers == 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < workers; ++t) pool.emplace_back(work, t, workers);
  }

  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const std::exception& e) {
      throw InvalidArgument("window " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace topokd::tda
