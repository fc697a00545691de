#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "topokd/digest.hpp"
#include "topokd/error.hpp"
#include "topokd/persistence.hpp"
#include "topokd/tensor.hpp"

namespace topokd::data {

using tda::SignalWindow;

/// Equal-shape labelled windows. `subjects` is empty or holds one id per window.
struct LabeledWindowSet {
  std::vector<SignalWindow> windows;
  std::size_t class_count = 0;
  std::vector<int> subjects;
  std::uint64_t provenance = 0;

  std::size_t size() const noexcept { return windows.size(); }
  std::size_t channels() const { return windows.empty() ? 0 : windows.front().channels(); }
  std::size_t length() const { return windows.empty() ? 0 : windows.front().length(); }

  std::vector<int> labels() const {
    std::vector<int> out;
    out.reserve(windows.size());
    for (const auto& w : windows) out.push_back(w.label.value_or(-1));
    return out;
  }

  void validate() const {
    if (class_count < 2) throw InvalidArgument("dataset needs at least 2 classes");
    if (!subjects.empty() && subjects.size() != windows.size()) throw InvalidArgument("subject ids do not cover every window");
    for (std::size_t i = 0; i < windows.size(); ++i) {
      const auto& w = windows[i];
      w.validate();
      if (w.channels() != channels() || w.length() != length())
        throw InvalidArgument("window " + std::to_string(i) + " differs in shape from window 0");
      if (!w.label || *w.label < 0 || static_cast<std::size_t>(*w.label) >= class_count)
        throw InvalidArgument("window " + std::to_string(i) + " has a missing or out-of-range label");
    }
  }

  /// Digest of labels, subjects and every value.
  std::uint64_t content_digest() const {
    Digest d;
    d.text("LabeledWindowSet/1").value(static_cast<std::uint64_t>(class_count));
    for (const auto& w : windows) {
      d.value(w.label.value_or(-1));
      for (const auto& ch : w.values) d.values(ch);
    }
    for (int s : subjects) d.value(s);
    return d.get();
  }

  LabeledWindowSet subset(std::span<const std::size_t> idx) const {
    LabeledWindowSet out;
    out.class_count = class_count;
    out.provenance = provenance;
    for (auto i : idx) {
      out.windows.push_back(windows.at(i));
      if (!subjects.empty()) out.subjects.push_back(subjects[i]);
    }
    return out;
  }

  /// [n, channels, length] tensor of all windows.
  nn::Tensor to_tensor() const {
    nn::Tensor t({windows.size(), channels(), length()});
    std::size_t k = 0;
    for (const auto& w : windows)
      for (const auto& ch : w.values)
        for (double v : ch) t[k++] = v;
    return t;
  }
};

/// Windows of `length` samples at offsets 0, stride, 2 * stride, ... that lie
/// fully inside the series; floor((L - length) / stride) + 1 of them.
inline std::vector<SignalWindow> window_signal(const std::vector<std::vector<double>>& channels, std::size_t length,
                                               std::size_t stride) {
  if (channels.empty()) throw InvalidArgument("window_signal: no channels");
  if (stride < 1) throw InvalidArgument("window_signal: stride must be >= 1");
  if (length < 1) throw InvalidArgument("window_signal: window length must be >= 1");
  const std::size_t total = channels.front().size();
  for (const auto& c : channels)
    if (c.size() != total) throw InvalidArgument("window_signal: channels differ in length");
  if (total < length)
    throw InvalidArgument("window_signal: series of " + std::to_string(total) + " samples is shorter than the window (" +
                          std::to_string(length) + ")");
  std::vector<SignalWindow> out;
  for (std::size_t off = 0; off + length <= total; off += stride) {
    SignalWindow w;
    for (const auto& c : channels) w.values.emplace_back(c.begin() + static_cast<std::ptrdiff_t>(off),
                                                         c.begin() + static_cast<std::ptrdiff_t>(off + length));
    out.push_back(std::move(w));
  }
  return out;
}

inline std::size_t window_count(std::size_t series_length, std::size_t length, std::size_t stride) {
  return series_length < length ? 0 : (series_length - length) / stride + 1;
}

/// Per-channel mean/std computed on `reference`, applied to every window of `set`.
inline void standardize_channels(LabeledWindowSet& set, const LabeledWindowSet& reference) {
  const std::size_t ch = reference.channels();
  for (std::size_t c = 0; c < ch; ++c) {
    double sum = 0.0, sq = 0.0;
    std::size_t n = 0;
    for (const auto& w : reference.windows)
      for (double v : w.values[c]) sum += v, ++n;
    const double mean = sum / static_cast<double>(n);
    for (const auto& w : reference.windows)
      for (double v : w.values[c]) sq += (v - mean) * (v - mean);
    const double sd = std::sqrt(sq / static_cast<double>(n));
    const double inv = sd > 0.0 ? 1.0 / sd : 1.0;
    for (auto& w : set.windows)
      for (double& v : w.values[c]) v = (v - mean) * inv;
  }
}

// ---------------------------------------------------------------------------
// CSV ingestion
//
// Row:      label,v[c0,t0],v[c0,t1],...,v[c1,t0],...
// Manifest: key=value lines; channels=, length=, classes=, files=a.csv,b.csv,
//           optional subjects=<one id per file>. '#' starts a comment.

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_list(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, sep)) {
    auto t = trim(item);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

template <class T>
bool parse_number(std::string_view s, T& out) {
  const auto* b = s.data();
  const auto* e = s.data() + s.size();
  auto [p, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && p == e;
}

}  // namespace detail

/// Parses a key=value text file into a map, rejecting duplicate keys.
inline std::map<std::string, std::string> read_key_values(std::istream& is, const std::string& origin) {
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const auto t = detail::trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw FormatError(origin + ":" + std::to_string(lineno) + ": expected key=value");
    auto key = detail::trim(std::string_view(t).substr(0, eq));
    auto value = detail::trim(std::string_view(t).substr(eq + 1));
    if (key.empty()) throw FormatError(origin + ":" + std::to_string(lineno) + ": empty key");
    if (!kv.emplace(key, value).second) throw FormatError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
  }
  return kv;
}

struct Manifest {
  std::size_t channels = 0;
  std::size_t length = 0;
  std::size_t classes = 0;
  std::vector<std::filesystem::path> files;  // resolved against the manifest directory
  std::vector<int> subjects;                 // one per file, or empty
};

inline Manifest parse_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open manifest " + path.string());
  const auto kv = read_key_values(is, path.string());
  auto need = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError(path.string() + ": missing key '" + key + "'");
    return it->second;
  };
  auto count = [&](const std::string& key) {
    std::size_t v = 0;
    if (!detail::parse_number(need(key), v) || v == 0) throw FormatError(path.string() + ": '" + key + "' must be a positive integer");
    return v;
  };
  Manifest m;
  m.channels = count("channels");
  m.length = count("length");
  m.classes = count("classes");
  for (const auto& f : detail::split_list(need("files"))) m.files.push_back(path.parent_path() / f);
  if (m.files.empty()) throw FormatError(path.string() + ": 'files' lists no files");
  if (auto it = kv.find("subjects"); it != kv.end()) {
    for (const auto& s : detail::split_list(it->second)) {
      int id = 0;
      if (!detail::parse_number(s, id)) throw FormatError(path.string() + ": bad subject id '" + s + "'");
      m.subjects.push_back(id);
    }
    if (m.subjects.size() != m.files.size()) throw FormatError(path.string() + ": 'subjects' needs one id per file");
  }
  return m;
}

/// Reads every file of a manifest in listed order, rows in file order.
inline LabeledWindowSet load_csv_dataset(const std::filesystem::path& manifest_path) {
  const Manifest m = parse_manifest(manifest_path);
  LabeledWindowSet set;
  set.class_count = m.classes;
  Digest prov;
  prov.text("csv-manifest/1").value(static_cast<std::uint64_t>(m.channels)).value(static_cast<std::uint64_t>(m.length));

  const std::size_t fields = 1 + m.channels * m.length;
  for (std::size_t f = 0; f < m.files.size(); ++f) {
    std::ifstream is(m.files[f]);
    if (!is) throw FormatError("cannot open data file " + m.files[f].string());
    prov.text(m.files[f].filename().string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      const std::string where = m.files[f].string() + ":" + std::to_string(lineno);
      if (detail::trim(line).empty()) continue;
      std::vector<std::string_view> cells;
      std::string_view rest(line);
      for (;;) {
        const auto comma = rest.find(',');
        cells.push_back(rest.substr(0, comma));
        if (comma == std::string_view::npos) break;
        rest.remove_prefix(comma + 1);
      }
      if (cells.size() != fields)
        throw FormatError(where + ": expected " + std::to_string(fields) + " fields, found " + std::to_string(cells.size()));
      int label = 0;
      if (!detail::parse_number(detail::trim(cells[0]), label)) throw FormatError(where + ": malformed label");
      if (label < 0 || static_cast<std::size_t>(label) >= m.classes)
        throw FormatError(where + ": label " + std::to_string(label) + " out of range [0, " + std::to_string(m.classes) + ")");
      SignalWindow w;
      w.label = label;
      w.values.assign(m.channels, std::vector<double>(m.length));
      for (std::size_t k = 1; k < fields; ++k) {
        double v = 0.0;
        const auto cell = detail::trim(cells[k]);
        if (!detail::parse_number(std::string_view(cell), v) || !std::isfinite(v))
          throw FormatError(where + ": malformed value in field " + std::to_string(k + 1));
        w.values[(k - 1) / m.length][(k - 1) % m.length] = v;
      }
      set.windows.push_back(std::move(w));
      if (!m.subjects.empty()) set.subjects.push_back(m.subjects[f]);
    }
  }
  set.provenance = prov.value(set.content_digest()).get();
  set.validate();
  return set;
}

/// Writes `set` as one CSV (values at float precision) plus a manifest.
/// Subjects, when present, are written as one file per subject.
inline std::filesystem::path write_csv_dataset(const LabeledWindowSet& set, const std::filesystem::path& dir,
                                               const std::string& stem = "data") {
  std::filesystem::create_directories(dir);
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < set.size(); ++i) groups[set.subjects.empty() ? 0 : set.subjects[i]].push_back(i);

  std::vector<std::string> files;
  std::vector<std::string> subject_ids;
  for (const auto& [subject, rows] : groups) {
    const std::string name = set.subjects.empty() ? stem + ".csv" : stem + "_s" + std::to_string(subject) + ".csv";
    std::ofstream os(dir / name);
    if (!os) throw FormatError("cannot write " + (dir / name).string());
    char buf[32];
    for (auto i : rows) {
      const auto& w = set.windows[i];
      os << w.label.value_or(0);
      for (const auto& ch : w.values)
        for (double v : ch) {
          auto [p, ec] = std::to_chars(buf, buf + sizeof buf, static_cast<float>(v));
          os << ',' << std::string_view(buf, static_cast<std::size_t>(p - buf));
        }
      os << '\n';
    }
    files.push_back(name);
    subject_ids.push_back(std::to_string(subject));
  }
  const auto manifest = dir / (stem + ".manifest");
  std::ofstream ms(manifest);
  ms << "channels=" << set.channels() << "\nlength=" << set.length() << "\nclasses=" << set.class_count << "\nfiles=";
  for (std::size_t i = 0; i < files.size(); ++i) ms << (i ? "," : "") << files[i];
  ms << '\n';
  if (!set.subjects.empty()) {
    ms << "subjects=";
    for (std::size_t i = 0; i < subject_ids.size(); ++i) ms << (i ? "," : "") << subject_ids[i];
    ms << '\n';
  }
  if (!ms) throw FormatError("cannot write " + manifest.string());
  return manifest;
}

// ---------------------------------------------------------------------------
// Splits

struct SplitSpec {
  enum class Mode { random_stratified, leave_one_subject_out };
  Mode mode = Mode::random_stratified;
  double test_fraction = 0.2;
  std::vector<int> test_subjects;
  std::uint64_t seed = 0;

  friend bool operator==(const SplitSpec&, const SplitSpec&) = default;
};

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Per class, a seeded shuffle moves round(fraction * count) members of `pool` to the held-out side.
inline Split stratified_holdout(std::span<const std::size_t> pool, std::span<const int> labels, double fraction,
                                std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw InvalidArgument("holdout fraction must lie in [0, 1)");
  std::map<int, std::vector<std::size_t>> by_class;
  for (auto i : pool) by_class[labels[i]].push_back(i);
  std::mt19937_64 rng(seed);
  Split s;
  for (auto& [label, members] : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(members.size())));
    s.test.insert(s.test.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(k));
    s.train.insert(s.train.end(), members.begin() + static_cast<std::ptrdiff_t>(k), members.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

inline Split split(const LabeledWindowSet& set, const SplitSpec& spec) {
  if (spec.mode == SplitSpec::Mode::random_stratified) {
    std::vector<std::size_t> all(set.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    const auto labels = set.labels();
    auto s = stratified_holdout(all, labels, spec.test_fraction, spec.seed);
    if (s.train.empty() || s.test.empty()) throw InvalidArgument("split produced an empty partition");
    return s;
  }
  if (set.subjects.empty()) throw InvalidArgument("leave-one-subject-out split needs subject ids");
  if (spec.test_subjects.empty()) throw InvalidArgument("leave-one-subject-out split needs at least one test subject");
  const std::set<int> present(set.subjects.begin(), set.subjects.end());
  for (int s : spec.test_subjects)
    if (!present.count(s)) throw InvalidArgument("subject " + std::to_string(s) + " is absent from the dataset");
  const std::set<int> held(spec.test_subjects.begin(), spec.test_subjects.end());
  Split s;
  for (std::size_t i = 0; i < set.size(); ++i) (held.count(set.subjects[i]) ? s.test : s.train).push_back(i);
  if (s.train.empty()) throw InvalidArgument("leave-one-subject-out split left no training windows");
  return s;
}

}  // namespace topokd::data
