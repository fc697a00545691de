#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "topokd/error.hpp"
#include "topokd/tensor.hpp"

namespace topokd::nn {

/// A scalar loss and its gradient with respect to the logits it was computed from.
struct LossGrad {
  double loss = 0.0;
  Tensor grad;
};

/// a * x + b * y, for combining objectives that share a logits tensor.
inline LossGrad combine(double a, const LossGrad& x, double b, const LossGrad& y) {
  if (x.grad.shape() != y.grad.shape()) throw ShapeError("combine: gradient shapes differ");
  LossGrad out{a * x.loss + b * y.loss, Tensor(x.grad.shape())};
  for (std::size_t i = 0; i < out.grad.size(); ++i) out.grad[i] = a * x.grad[i] + b * y.grad[i];
  return out;
}

inline void check_logits(const Tensor& logits) {
  if (logits.rank() != 2 || logits.dim(0) == 0 || logits.dim(1) == 0)
    throw ShapeError("logits must be a non-empty [rows, classes] tensor, got " + shape_str(logits.shape()));
}

/// Row-wise log-softmax of logits / temperature.
inline Tensor log_softmax(const Tensor& logits, double temperature = 1.0) {
  check_logits(logits);
  if (!(temperature > 0.0)) throw InvalidArgument("temperature must be > 0");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  Tensor out(logits.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const double* z = logits.data() + i * k;
    double m = z[0] / temperature;
    for (std::size_t c = 1; c < k; ++c) m = std::max(m, z[c] / temperature);
    double s = 0.0;
    for (std::size_t c = 0; c < k; ++c) s += std::exp(z[c] / temperature - m);
    const double lse = m + std::log(s);
    for (std::size_t c = 0; c < k; ++c) out[i * k + c] = z[c] / temperature - lse;
  }
  return out;
}

/// Row-wise softmax with max subtraction.
inline Tensor softmax(const Tensor& logits, double temperature = 1.0) {
  check_logits(logits);
  if (!(temperature > 0.0)) throw InvalidArgument("temperature must be > 0");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  Tensor out(logits.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const double* z = logits.data() + i * k;
    double m = z[0] / temperature;
    for (std::size_t c = 1; c < k; ++c) m = std::max(m, z[c] / temperature);
    double s = 0.0;
    for (std::size_t c = 0; c < k; ++c) s += (out[i * k + c] = std::exp(z[c] / temperature - m));
    for (std::size_t c = 0; c < k; ++c) out[i * k + c] /= s;
  }
  return out;
}

/// Mean over rows of lambda_r * CE(row, a_r) + (1 - lambda_r) * CE(row, b_r),
/// natural log. Plain cross-entropy is the case lambda = 1, a = b.
inline LossGrad soft_pair_cross_entropy(const Tensor& logits, std::span<const int> a, std::span<const int> b,
                                        std::span<const double> lambda) {
  check_logits(logits);
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (a.size() != n || b.size() != n || lambda.size() != n) throw ShapeError("cross-entropy: label count does not match rows");
  const Tensor logp = log_softmax(logits);
  LossGrad out{0.0, Tensor(logits.shape())};
  const double inv_n = 1.0 / static_cast<double>(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (int y : {a[i], b[i]})
      if (y < 0 || static_cast<std::size_t>(y) >= k)
        throw InvalidArgument("label " + std::to_string(y) + " out of range for " + std::to_string(k) + " classes");
    const double* lp = logp.data() + i * k;
    const auto ya = static_cast<std::size_t>(a[i]), yb = static_cast<std::size_t>(b[i]);
    total += lambda[i] * (-lp[ya]) + (1.0 - lambda[i]) * (-lp[yb]);
    for (std::size_t c = 0; c < k; ++c) {
      const double target_a = c == ya ? lambda[i] : 0.0;
      const double target_b = c == yb ? 1.0 - lambda[i] : 0.0;
      out.grad[i * k + c] = (std::exp(lp[c]) - target_a - target_b) * inv_n;
    }
  }
  out.loss = total * inv_n;
  return out;
}

/// Mean cross-entropy of softmax(logits) against hard labels.
inline LossGrad cross_entropy(const Tensor& logits, std::span<const int> labels) {
  const std::vector<double> ones(labels.size(), 1.0);
  return soft_pair_cross_entropy(logits, labels, labels, ones);
}

/// Row-wise argmax.
inline std::vector<int> argmax_rows(const Tensor& logits) {
  check_logits(logits);
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* z = logits.data() + i * k;
    out[i] = static_cast<int>(std::max_element(z, z + k) - z);
  }
  return out;
}

}  // namespace topokd::nn
