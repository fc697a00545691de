// Helpers shared by the unit and acceptance suites.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "topokd/network.hpp"

namespace topokd::testing {

inline nn::Tensor random_tensor(nn::Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  nn::Tensor t(std::move(shape));
  std::normal_distribution<double> g(0.0, scale);
  for (double& v : t.storage()) v = g(rng);
  return t;
}

/// Relative error. The 1e-6 floor keeps gradients that are exactly zero (a conv
/// bias feeding BatchNorm) from dividing central-difference round-off by zero.
inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  std::string worst;
};

/// Central finite differences (step h) of `loss(params)` against `analytic`
/// for every scalar of every parameter tensor.
inline GradCheckResult grad_check(nn::Parameters params, const nn::Gradients& analytic,
                                  const std::function<double(const nn::Parameters&)>& loss, double h = 1e-5) {
  GradCheckResult r;
  for (std::size_t t = 0; t < params.tensors.size(); ++t)
    for (std::size_t i = 0; i < params.tensors[t].size(); ++i) {
      const double orig = params.tensors[t][i];
      params.tensors[t][i] = orig + h;
      const double up = loss(params);
      params.tensors[t][i] = orig - h;
      const double down = loss(params);
      params.tensors[t][i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double e = rel_err(analytic[t][i], numeric);
      ++r.checked;
      if (e > r.max_rel_err) {
        r.max_rel_err = e;
        r.worst = "tensor " + std::to_string(t) + "[" + std::to_string(i) + "] analytic " + std::to_string(analytic[t][i]) +
                  " numeric " + std::to_string(numeric);
      }
    }
  return r;
}

/// Finite-difference check of a loss with respect to its logits.
inline GradCheckResult logits_grad_check(nn::Tensor logits, const nn::Tensor& analytic,
                                         const std::function<double(const nn::Tensor&)>& loss, double h = 1e-5) {
  GradCheckResult r;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double orig = logits[i];
    logits[i] = orig + h;
    const double up = loss(logits);
    logits[i] = orig - h;
    const double down = loss(logits);
    logits[i] = orig;
    const double e = rel_err(analytic[i], (up - down) / (2.0 * h));
    ++r.checked;
    if (e > r.max_rel_err) {
      r.max_rel_err = e;
      r.worst = "logit " + std::to_string(i);
    }
  }
  return r;
}

}  // namespace topokd::testing
