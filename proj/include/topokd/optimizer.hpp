#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "topokd/error.hpp"
#include "topokd/layers.hpp"

namespace topokd::nn {

struct OptimizerState {
  std::vector<Tensor> velocity;  // empty until the first step

  friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

struct SgdOptions {
  double momentum = 0.9;
  double weight_decay = 1e-4;
};

/// v <- momentum * v + (g + wd * w);  w <- w - lr * v.
/// Weight decay applies only to tensors flagged in `params.decay` (BatchNorm
/// scale and shift are not).
inline void sgd_step(Parameters& params, const Gradients& grads, OptimizerState& state, double lr,
                     const SgdOptions& opt = {}) {
  if (grads.size() != params.tensors.size()) throw ShapeError("sgd_step: gradient count does not match parameters");
  if (state.velocity.empty()) {
    for (const auto& t : params.tensors) state.velocity.emplace_back(t.shape());
  }
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    Tensor& w = params.tensors[i];
    Tensor& v = state.velocity[i];
    const Tensor& g = grads[i];
    if (g.shape() != w.shape()) throw ShapeError("sgd_step: gradient " + std::to_string(i) + " has shape " + shape_str(g.shape()));
    const double wd = params.decay[i] ? opt.weight_decay : 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) {
      v[j] = opt.momentum * v[j] + (g[j] + wd * w[j]);
      w[j] -= lr * v[j];
    }
  }
}

/// Step schedules for the two model families.
///  ts: initial, x0.2 at epoch 10, x0.1 every floor(total/3) epochs.
///  pi: initial, x0.5 at epoch 10, x0.2 every 40 epochs.
/// The drop factors compound; the learning rate is computed as `initial`
/// divided by the accumulated integer divisor, so 0.05 -> 0.01 is exact.
struct LRSchedule {
  enum class Kind { ts, pi };
  Kind kind = Kind::ts;
  double initial = 0.05;
  int total_epochs = 200;

  static LRSchedule time_series(int total_epochs, double initial = 0.05) { return {Kind::ts, initial, total_epochs}; }
  static LRSchedule persistence_image(int total_epochs, double initial = 0.1) { return {Kind::pi, initial, total_epochs}; }

  friend bool operator==(const LRSchedule&, const LRSchedule&) = default;
};

inline double lr_at(const LRSchedule& s, int epoch) {
  if (epoch < 0 || epoch >= s.total_epochs)
    throw InvalidArgument("lr_at: epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(s.total_epochs) + ")");
  if (!(s.initial > 0.0)) throw InvalidArgument("lr_at: initial learning rate must be > 0");
  double divisor = 1.0;
  if (s.kind == LRSchedule::Kind::ts) {
    if (epoch >= 10) divisor *= 5.0;
    const int every = std::max(1, s.total_epochs / 3);
    for (int k = every; k <= epoch; k += every) divisor *= 10.0;
  } else {
    if (epoch >= 10) divisor *= 2.0;
    for (int k = 40; k <= epoch; k += 40) divisor *= 5.0;
  }
  return s.initial / divisor;
}

}  // namespace topokd::nn
