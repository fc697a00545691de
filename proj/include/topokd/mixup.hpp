#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "topokd/error.hpp"
#include "topokd/losses.hpp"
#include "topokd/tensor.hpp"

namespace topokd::augment {

using nn::Tensor;

/// alpha is the Beta(alpha, alpha) concentration; proportion is the fraction of
/// batch rows that get mixed (1 = full mixup, 0 = none).
struct MixupConfig {
  double alpha = 0.1;
  double proportion = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(alpha > 0.0)) throw InvalidArgument("mixup alpha must be > 0");
    if (!(proportion >= 0.0 && proportion <= 1.0)) throw InvalidArgument("mixup proportion must lie in [0, 1]");
  }

  friend bool operator==(const MixupConfig&, const MixupConfig&) = default;
};

/// Row r of the mixed batch is lambda * x[i] + (1 - lambda) * x[j] with i = r.
/// Unmixed rows have j = i and lambda = 1.
struct MixPair {
  std::size_t i = 0;
  std::size_t j = 0;
  double lambda = 1.0;
};

struct MixedBatch {
  Tensor inputs;
  std::vector<MixPair> pairs;
  std::vector<int> labels_i;
  std::vector<int> labels_j;

  std::vector<double> lambdas() const {
    std::vector<double> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) out.push_back(p.lambda);
    return out;
  }

  std::size_t mixed_rows() const {
    return static_cast<std::size_t>(std::count_if(pairs.begin(), pairs.end(), [](const MixPair& p) { return p.lambda != 1.0 || p.i != p.j; }));
  }
};

namespace detail {

// Uniform on (0, 1].
inline double open_zero_uniform(std::mt19937_64& rng) {
  return 1.0 - std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace detail

/// lambda ~ Beta(alpha, alpha). alpha < 1 uses Johnk's rejection sampler in
/// log space (stable when draws crowd 0 and 1); alpha >= 1 uses the ratio of
/// two Gamma(alpha, 1) variates.
inline double sample_lambda(double alpha, std::mt19937_64& rng) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw InvalidArgument("sample_lambda: alpha must be > 0");
  if (alpha < 1.0) {
    for (;;) {
      const double lx = std::log(detail::open_zero_uniform(rng)) / alpha;
      const double ly = std::log(detail::open_zero_uniform(rng)) / alpha;
      const double hi = std::max(lx, ly);
      const double lse = hi + std::log1p(std::exp(std::min(lx, ly) - hi));
      if (lse <= 0.0) return std::clamp(std::exp(lx - lse), 0.0, 1.0);
    }
  }
  std::gamma_distribution<double> gamma(alpha, 1.0);
  const double x = gamma(rng);
  const double y = gamma(rng);
  if (x + y == 0.0) return 0.5;
  return std::clamp(x / (x + y), 0.0, 1.0);
}

/// Mixes round(proportion * n) rows of `batch` with partners from a random
/// permutation, one lambda per mixed row; the other rows pass through. With
/// proportion 0 nothing is drawn from `rng`.
/// RNG draw order: partner permutation, mixed-row selection (only for
/// 0 < proportion < 1), lambdas in row order.
inline MixedBatch mixup_batch(const Tensor& batch, std::span<const int> labels, const MixupConfig& cfg,
                              std::mt19937_64& rng) {
  cfg.validate();
  if (batch.rank() < 1 || batch.dim(0) == 0) throw InvalidArgument("mixup_batch: empty batch");
  const std::size_t n = batch.dim(0);
  if (labels.size() != n) throw ShapeError("mixup_batch: label count does not match batch");

  MixedBatch out;
  out.inputs = batch;
  out.labels_i.assign(labels.begin(), labels.end());
  out.labels_j = out.labels_i;
  out.pairs.resize(n);
  for (std::size_t r = 0; r < n; ++r) out.pairs[r] = {r, r, 1.0};

  const auto mixed = static_cast<std::size_t>(std::llround(cfg.proportion * static_cast<double>(n)));
  if (mixed == 0) return out;

  std::vector<std::size_t> partner(n);
  std::iota(partner.begin(), partner.end(), std::size_t{0});
  std::shuffle(partner.begin(), partner.end(), rng);

  std::vector<bool> selected(n, true);
  if (mixed < n) {
    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    std::shuffle(rows.begin(), rows.end(), rng);
    std::fill(selected.begin(), selected.end(), false);
    for (std::size_t k = 0; k < mixed; ++k) selected[rows[k]] = true;
  }

  const std::size_t rs = batch.row_size();
  for (std::size_t r = 0; r < n; ++r) {
    if (!selected[r]) continue;
    const double lambda = sample_lambda(cfg.alpha, rng);
    const std::size_t j = partner[r];
    out.pairs[r] = {r, j, lambda};
    out.labels_j[r] = labels[j];
    const double* xi = batch.data() + r * rs;
    const double* xj = batch.data() + j * rs;
    double* dst = out.inputs.data() + r * rs;
    for (std::size_t e = 0; e < rs; ++e) dst[e] = lambda * xi[e] + (1.0 - lambda) * xj[e];
  }
  return out;
}

/// Applies the row pairing of `mixed` to another tensor of the same rows
/// (e.g. the persistence images of the batch).
inline Tensor apply_mix(const Tensor& rows, const MixedBatch& mixed) {
  if (rows.rank() < 1 || rows.dim(0) != mixed.pairs.size()) throw ShapeError("apply_mix: row count does not match the mixed batch");
  Tensor out = rows;
  const std::size_t rs = rows.row_size();
  for (std::size_t r = 0; r < mixed.pairs.size(); ++r) {
    const auto& p = mixed.pairs[r];
    if (p.i == p.j && p.lambda == 1.0) continue;
    const double* xi = rows.data() + p.i * rs;
    const double* xj = rows.data() + p.j * rs;
    double* dst = out.data() + r * rs;
    for (std::size_t e = 0; e < rs; ++e) dst[e] = p.lambda * xi[e] + (1.0 - p.lambda) * xj[e];
  }
  return out;
}

/// Mixup cross-entropy: mean over rows of lambda * CE(y_i) + (1 - lambda) * CE(y_j).
inline nn::LossGrad mixup_ce_loss(const Tensor& logits, const MixedBatch& mixed) {
  if (logits.rank() != 2 || logits.dim(0) != mixed.pairs.size()) throw ShapeError("mixup_ce_loss: logits rows do not match the mixed batch");
  return nn::soft_pair_cross_entropy(logits, mixed.labels_i, mixed.labels_j, mixed.lambdas());
}

}  // namespace topokd::augment
