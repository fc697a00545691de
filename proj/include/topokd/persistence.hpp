#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "topokd/error.hpp"

namespace topokd::tda {

/// A multichannel window of a sensor recording, values[channel][t].
struct SignalWindow {
  std::vector<std::vector<double>> values;
  std::optional<int> label;

  std::size_t channels() const noexcept { return values.size(); }
  std::size_t length() const noexcept { return values.empty() ? 0 : values.front().size(); }

  void validate() const {
    if (values.empty()) throw InvalidArgument("signal window has no channels");
    const auto len = values.front().size();
    if (len == 0) throw InvalidArgument("signal window has zero length");
    for (std::size_t c = 0; c < values.size(); ++c) {
      if (values[c].size() != len) throw InvalidArgument("channel " + std::to_string(c) + " has ragged length");
      for (double v : values[c])
        if (!std::isfinite(v)) throw InvalidArgument("channel " + std::to_string(c) + " holds a non-finite value");
    }
  }
};

struct PersistencePoint {
  double birth = 0.0;
  double death = 0.0;
  bool essential = false;

  double persistence() const noexcept { return death - birth; }

  friend bool operator==(const PersistencePoint&, const PersistencePoint&) = default;
  friend bool operator<(const PersistencePoint& a, const PersistencePoint& b) {
    if (a.essential != b.essential) return a.essential;
    return std::tie(a.birth, a.death) < std::tie(b.birth, b.death);
  }
};

/// 0-dimensional sublevel-set persistence of one signal channel. Points hold
/// raw (birth, death) values; the essential class is paired with the channel maximum.
struct PersistenceDiagram {
  std::vector<PersistencePoint> points;
  std::size_t channel_index = 0;

  std::size_t finite_count() const {
    return static_cast<std::size_t>(std::count_if(points.begin(), points.end(), [](const auto& p) { return !p.essential; }));
  }

  /// Points in a canonical order (essential first, then by birth, death) so that
  /// diagrams can be compared as multisets.
  PersistenceDiagram canonical() const {
    PersistenceDiagram out = *this;
    std::sort(out.points.begin(), out.points.end());
    return out;
  }

  friend bool same_multiset(const PersistenceDiagram& a, const PersistenceDiagram& b) {
    return a.canonical().points == b.canonical().points;
  }
};

namespace detail {

inline void check_series(std::span<const double> series) {
  if (series.empty()) throw InvalidArgument("persistence of an empty series");
  for (std::size_t i = 0; i < series.size(); ++i)
    if (!std::isfinite(series[i])) throw InvalidArgument("non-finite value at index " + std::to_string(i));
}

// Filtration order: (value, index) lexicographic.
inline std::vector<std::size_t> filtration_order(std::span<const double> series) {
  std::vector<std::size_t> order(series.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return series[a] < series[b] || (series[a] == series[b] && a < b);
  });
  return order;
}

}  // namespace detail

/// Elder-rule pairing of the sublevel-set filtration of a 1D signal, via
/// union-find over vertices processed in (value, index) order.
inline PersistenceDiagram sublevel_persistence(std::span<const double> series) {
  detail::check_series(series);
  const std::size_t n = series.size();
  const auto order = detail::filtration_order(series);

  std::vector<std::size_t> rank(n);
  for (std::size_t r = 0; r < n; ++r) rank[order[r]] = r;

  constexpr std::size_t kUnset = static_cast<std::size_t>(-1);
  std::vector<std::size_t> parent(n, kUnset);
  std::vector<std::size_t> birth_vertex(n, kUnset);  // valid at roots

  auto find = [&](std::size_t x) {
    std::size_t root = x;
    while (parent[root] != root) root = parent[root];
    while (parent[x] != root) {
      const auto next = parent[x];
      parent[x] = root;
      x = next;
    }
    return root;
  };

  PersistenceDiagram pd;
  for (std::size_t v : order) {
    std::size_t roots[2];
    std::size_t nroots = 0;
    if (v > 0 && parent[v - 1] != kUnset) roots[nroots++] = find(v - 1);
    if (v + 1 < n && parent[v + 1] != kUnset) roots[nroots++] = find(v + 1);

    if (nroots == 0) {
      parent[v] = v;
      birth_vertex[v] = v;
    } else if (nroots == 1) {
      parent[v] = roots[0];
    } else {
      auto elder = roots[0];
      auto younger = roots[1];
      if (rank[birth_vertex[younger]] < rank[birth_vertex[elder]]) std::swap(elder, younger);
      const double birth = series[birth_vertex[younger]];
      if (series[v] > birth) pd.points.push_back({birth, series[v], false});
      parent[younger] = elder;
      parent[v] = elder;
    }
  }

  const double lo = series[order.front()];
  const double hi = series[order.back()];
  pd.points.push_back({lo, hi, true});
  return pd;
}

inline PersistenceDiagram sublevel_persistence(const std::vector<double>& series) {
  return sublevel_persistence(std::span<const double>(series));
}

/// Reference implementation: sweeps every distinct value as a threshold,
/// recomputes the connected runs of {t : f(t) <= v} from scratch and matches
/// them against the previous level's runs. Quadratic; meant for testing.
inline PersistenceDiagram brute_force_persistence(std::span<const double> series) {
  detail::check_series(series);
  if (series.size() > 256) throw InvalidArgument("brute-force persistence is limited to 256 samples");
  const std::size_t n = series.size();

  std::vector<double> levels(series.begin(), series.end());
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());

  struct Component {
    std::size_t first, last;  // index run [first, last]
    double birth;
    std::size_t birth_index;  // lowest index attaining the birth value when it appeared
  };
  auto older = [](const Component& a, const Component& b) {
    return a.birth < b.birth || (a.birth == b.birth && a.birth_index < b.birth_index);
  };

  PersistenceDiagram pd;
  std::vector<Component> previous;
  for (double level : levels) {
    std::vector<Component> current;
    std::size_t t = 0;
    while (t < n) {
      if (series[t] > level) {
        ++t;
        continue;
      }
      std::size_t first = t;
      while (t + 1 < n && series[t + 1] <= level) ++t;
      std::size_t last = t;
      ++t;

      std::vector<const Component*> contained;
      for (const auto& c : previous)
        if (c.first >= first && c.last <= last) contained.push_back(&c);

      if (contained.empty()) {
        std::size_t idx = first;
        while (series[idx] != level) ++idx;
        current.push_back({first, last, level, idx});
        continue;
      }
      const Component* survivor = contained.front();
      for (const auto* c : contained)
        if (older(*c, *survivor)) survivor = c;
      for (const auto* c : contained)
        if (c != survivor && level > c->birth) pd.points.push_back({c->birth, level, false});
      current.push_back({first, last, survivor->birth, survivor->birth_index});
    }
    previous = std::move(current);
  }

  pd.points.push_back({levels.front(), levels.back(), true});
  return pd;
}

inline PersistenceDiagram brute_force_persistence(const std::vector<double>& series) {
  return brute_force_persistence(std::span<const double>(series));
}

/// Maximal runs of equal values whose existing neighbours are all strictly
/// greater. Equals the number of points of the sublevel diagram.
inline std::size_t count_local_minima(std::span<const double> series) {
  std::size_t count = 0;
  std::size_t i = 0;
  const std::size_t n = series.size();
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && series[j + 1] == series[i]) ++j;
    const bool left_ok = i == 0 || series[i - 1] > series[i];
    const bool right_ok = j + 1 == n || series[j + 1] > series[i];
    if (left_ok && right_ok) ++count;
    i = j + 1;
  }
  return count;
}

/// One diagram per channel of a window.
inline std::vector<PersistenceDiagram> window_persistence(const SignalWindow& w) {
  w.validate();
  std::vector<PersistenceDiagram> out;
  out.reserve(w.channels());
  for (std::size_t c = 0; c < w.channels(); ++c) {
    auto pd = sublevel_persistence(w.values[c]);
    pd.channel_index = c;
    out.push_back(std::move(pd));
  }
  return out;
}

}  // namespace topokd::tda
