#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <vector>

#include "topokd/error.hpp"
#include "topokd/losses.hpp"
#include "topokd/network.hpp"

namespace topokd::metrics {

using nn::Tensor;

/// Top-1 accuracy in percent.
inline double accuracy(std::span<const int> predicted, std::span<const int> labels) {
  if (predicted.size() != labels.size()) throw ShapeError("accuracy: prediction count does not match labels");
  if (labels.empty()) throw InvalidArgument("accuracy: empty set");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += predicted[i] == labels[i];
  return 100.0 * static_cast<double>(hit) / static_cast<double>(labels.size());
}

/// Eval-mode class predictions, computed in chunks of `chunk` rows.
inline std::vector<int> predict_classes(const nn::Network& net, const Tensor& inputs, std::size_t chunk = 256) {
  std::vector<int> out;
  out.reserve(inputs.dim(0));
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < inputs.dim(0); start += chunk) {
    rows.resize(std::min(chunk, inputs.dim(0) - start));
    std::iota(rows.begin(), rows.end(), start);
    const auto p = nn::argmax_rows(nn::predict(net, inputs.gather(rows)));
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

inline double evaluate(const nn::Network& net, const Tensor& inputs, std::span<const int> labels) {
  return accuracy(predict_classes(net, inputs), labels);
}

/// Eval-mode penultimate features in chunks, stacked to [n, features].
inline Tensor features(const nn::Network& net, const Tensor& inputs, std::size_t chunk = 256) {
  std::vector<double> data;
  std::size_t width = 0;
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < inputs.dim(0); start += chunk) {
    rows.resize(std::min(chunk, inputs.dim(0) - start));
    std::iota(rows.begin(), rows.end(), start);
    const Tensor f = nn::penultimate_features(net, inputs.gather(rows));
    width = f.dim(1);
    data.insert(data.end(), f.values().begin(), f.values().end());
  }
  return Tensor({inputs.dim(0), width}, std::move(data));
}

// ---------------------------------------------------------------------------
// V-measure

struct VMeasure {
  double homogeneity = 0.0;
  double completeness = 0.0;
  double v = 0.0;
};

/// Entropy-based homogeneity, completeness and their harmonic mean (natural
/// log). A zero class entropy gives homogeneity 1, a zero cluster entropy
/// completeness 1.
inline VMeasure v_measure_scores(std::span<const int> labels, std::span<const int> clusters) {
  if (labels.size() != clusters.size()) throw ShapeError("v_measure: label and cluster counts differ");
  if (labels.empty()) throw InvalidArgument("v_measure: empty input");
  const double n = static_cast<double>(labels.size());
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> class_count, cluster_count;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    joint[{labels[i], clusters[i]}] += 1.0;
    class_count[labels[i]] += 1.0;
    cluster_count[clusters[i]] += 1.0;
  }
  auto entropy = [&](const std::map<int, double>& counts) {
    double h = 0.0;
    for (const auto& [k, c] : counts) h -= c / n * std::log(c / n);
    return h;
  };
  const double h_c = entropy(class_count), h_k = entropy(cluster_count);
  double h_c_given_k = 0.0, h_k_given_c = 0.0;
  for (const auto& [key, c] : joint) {
    h_c_given_k -= c / n * std::log(c / cluster_count[key.second]);
    h_k_given_c -= c / n * std::log(c / class_count[key.first]);
  }
  VMeasure r;
  r.homogeneity = h_c == 0.0 ? 1.0 : 1.0 - h_c_given_k / h_c;
  r.completeness = h_k == 0.0 ? 1.0 : 1.0 - h_k_given_c / h_k;
  const double s = r.homogeneity + r.completeness;
  r.v = s == 0.0 ? 0.0 : 2.0 * r.homogeneity * r.completeness / s;
  return r;
}

inline double v_measure(std::span<const int> labels, std::span<const int> clusters) {
  return v_measure_scores(labels, clusters).v;
}

// ---------------------------------------------------------------------------
// k-means

struct KMeansResult {
  std::vector<int> assignment;
  Tensor centers;  // [k, d]
  double inertia = 0.0;
};

namespace detail {

inline double sq_dist(const double* a, const double* b, std::size_t d) {
  double s = 0.0;
  for (std::size_t j = 0; j < d; ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
  return s;
}

inline KMeansResult lloyd(const Tensor& x, std::size_t k, std::mt19937_64& rng, int max_iter) {
  const std::size_t n = x.dim(0), d = x.dim(1);
  KMeansResult r;
  r.centers = Tensor({k, d});
  // k-means++ seeding.
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  std::size_t pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  for (std::size_t c = 0; c < k; ++c) {
    std::copy_n(x.data() + pick * d, d, r.centers.data() + c * d);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], sq_dist(x.data() + i * d, r.centers.data() + c * d, d));
      total += nearest[i];
    }
    if (c + 1 == k) break;
    if (total == 0.0) {
      pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
      continue;
    }
    double target = std::uniform_real_distribution<double>(0.0, total)(rng);
    pick = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      target -= nearest[i];
      if (target < 0.0) {
        pick = i;
        break;
      }
    }
  }

  r.assignment.assign(n, -1);
  for (int it = 0; it < max_iter; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double dist = sq_dist(x.data() + i * d, r.centers.data() + c * d, d);
        if (dist < bd) bd = dist, best = static_cast<int>(c);
      }
      if (r.assignment[i] != best) r.assignment[i] = best, changed = true;
    }
    if (!changed) break;
    std::vector<double> count(k, 0.0);
    r.centers.fill(0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = static_cast<std::size_t>(r.assignment[i]);
      count[c] += 1.0;
      for (std::size_t j = 0; j < d; ++j) r.centers[c * d + j] += x[i * d + j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (count[c] == 0.0) {
        // Empty cluster: restart it at the point farthest from its centre.
        std::size_t far = 0;
        double fd = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double dist = sq_dist(x.data() + i * d, r.centers.data() + static_cast<std::size_t>(r.assignment[i]) * d, d);
          if (dist > fd) fd = dist, far = i;
        }
        std::copy_n(x.data() + far * d, d, r.centers.data() + c * d);
        continue;
      }
      for (std::size_t j = 0; j < d; ++j) r.centers[c * d + j] /= count[c];
    }
  }
  r.inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    r.inertia += sq_dist(x.data() + i * d, r.centers.data() + static_cast<std::size_t>(r.assignment[i]) * d, d);
  return r;
}

}  // namespace detail

/// Seeded k-means on the rows of `points` ([n, d]): k-means++ seeding, Lloyd
/// iterations, best inertia over `restarts` runs.
inline KMeansResult kmeans(const Tensor& points, std::size_t k, std::uint64_t seed, int restarts = 10, int max_iter = 300) {
  if (points.rank() != 2) throw ShapeError("kmeans: points must be [n, d]");
  if (k < 1) throw InvalidArgument("kmeans: k must be >= 1");
  if (k > points.dim(0))
    throw InvalidArgument("kmeans: k = " + std::to_string(k) + " exceeds the sample count " + std::to_string(points.dim(0)));
  std::mt19937_64 rng(seed);
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(1, restarts); ++r) {
    auto run = detail::lloyd(points, k, rng, max_iter);
    if (run.inertia < best.inertia) best = std::move(run);
  }
  return best;
}

/// k-means assignments of the network's penultimate features on `inputs`.
inline std::vector<int> cluster_penultimate(const nn::Network& net, const Tensor& inputs, std::size_t k, std::uint64_t seed) {
  if (k > inputs.dim(0)) throw InvalidArgument("cluster_penultimate: k exceeds the sample count");
  return kmeans(features(net, inputs), k, seed).assignment;
}

// ---------------------------------------------------------------------------
// Parametric weight-interpolation scan

/// n evenly spaced values over [lo, hi]; computed so that every grid value
/// representable as lo + (hi - lo) * i / (n - 1) in exact arithmetic comes out exact.
inline std::vector<double> kappa_grid(double lo = -2.0, double hi = 2.0, std::size_t n = 41) {
  if (n < 2) return {lo};
  std::vector<double> g(n);
  const double m = static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) g[i] = (lo * m + (hi - lo) * static_cast<double>(i)) / m;
  return g;
}

struct ScanRow {
  double kappa = 0.0;
  double train_acc = 0.0;
  double test_acc = 0.0;
};

/// Accuracy of (1 - kappa) * a + kappa * b on the train and test sets for every kappa.
inline std::vector<ScanRow> parametric_scan(const nn::Architecture& arch, const nn::Parameters& a, const nn::Parameters& b,
                                            const Tensor& train_x, std::span<const int> train_y, const Tensor& test_x,
                                            std::span<const int> test_y, std::span<const double> kappas) {
  nn::check_compatible(a, b);
  std::vector<ScanRow> rows;
  for (double k : kappas) {
    const nn::Network net{arch, nn::interpolate_params(a, b, k)};
    rows.push_back({k, evaluate(net, train_x, train_y), evaluate(net, test_x, test_y)});
  }
  return rows;
}

inline void write_scan_csv(std::ostream& os, std::span<const ScanRow> rows) {
  os << "kappa,train_acc,test_acc\n";
  char buf[96];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", r.kappa, r.train_acc, r.test_acc);
    os << buf;
  }
}

/// Mean and sample standard deviation (0 for a single value).
struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

inline MeanStd mean_std(std::span<const double> xs) {
  if (xs.empty()) throw InvalidArgument("mean_std: no values");
  MeanStd r;
  for (double x : xs) r.mean += x;
  r.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double s = 0.0;
    for (double x : xs) s += (x - r.mean) * (x - r.mean);
    r.std = std::sqrt(s / static_cast<double>(xs.size() - 1));
  }
  return r;
}

}  // namespace topokd::metrics
