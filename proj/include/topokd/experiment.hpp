#pragma once

#include <chrono>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "topokd/checkpoint.hpp"
#include "topokd/config.hpp"
#include "topokd/dataset.hpp"
#include "topokd/digest.hpp"
#include "topokd/error.hpp"
#include "topokd/flops.hpp"
#include "topokd/metrics.hpp"
#include "topokd/models.hpp"
#include "topokd/pi_cache.hpp"
#include "topokd/synthetic.hpp"
#include "topokd/training.hpp"

namespace topokd::harness {

namespace fs = std::filesystem;
using distill::Modality;

/// Runs `fn`, rethrowing any library or standard error tagged with `stage`.
template <class Fn>
decltype(auto) stage(const std::string& name, Fn&& fn) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

inline std::uint64_t file_digest(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return Digest{}.bytes(bytes.data(), bytes.size()).get();
}

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  os << text;
  if (!os) throw FormatError("cannot write " + path.string());
}

// ---------------------------------------------------------------------------
// Data

inline data::LabeledWindowSet load_dataset(const ExperimentConfig& cfg) {
  if (cfg.dataset == "synthetic") return data::generate_synthetic(cfg.synthetic, cfg.synthetic.seed);
  return data::load_csv_dataset(cfg.dataset.substr(4));
}

struct PreparedData {
  data::LabeledWindowSet windows;  // standardized when configured
  data::Split split;
  distill::SampleSet train;
  distill::SampleSet test;
  bool has_images = false;
  bool pi_cache_reused = false;
};

/// Loads, splits and (optionally) standardizes the dataset, then attaches
/// persistence images, reusing `pi_cache` when it matches.
inline PreparedData prepare_data(const ExperimentConfig& cfg, bool with_images, const fs::path& pi_cache = {}) {
  PreparedData d;
  d.windows = stage("dataset", [&] { return load_dataset(cfg); });
  d.split = stage("split", [&] { return data::split(d.windows, cfg.split); });
  if (cfg.standardize) {
    const auto reference = d.windows.subset(d.split.train);
    data::standardize_channels(d.windows, reference);
  }
  std::vector<tda::PIStack> stacks;
  if (with_images) {
    stacks = stage("extract-pi", [&] {
      const auto digest = d.windows.content_digest();
      if (pi_cache.empty()) {
        auto s = tda::extract_pi_batch(d.windows.windows, cfg.pi, cfg.workers);
        tda::round_to_storage(s);
        return s;
      }
      if (pi_cache.has_parent_path()) fs::create_directories(pi_cache.parent_path());
      return tda::load_or_extract(pi_cache, d.windows.windows, cfg.pi, digest, cfg.workers, &d.pi_cache_reused);
    });
    d.has_images = true;
  }
  const auto all = distill::SampleSet::from(d.windows, stacks, with_images ? std::optional(cfg.pi) : std::nullopt);
  d.train = all.subset(d.split.train);
  d.test = all.subset(d.split.test);
  return d;
}

// ---------------------------------------------------------------------------
// Per-seed runs

inline std::uint64_t derive_seed(std::uint64_t seed, const std::string& role) { return Digest{}.text(role).value(seed).get(); }

/// Trains the models of one seed on demand and memoizes teachers and the
/// scratch student, so several strategies can share them.
class SeedRunner {
 public:
  SeedRunner(const ExperimentConfig& cfg, const PreparedData& data, std::uint64_t seed) : cfg_(cfg), data_(data), seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  nn::Architecture arch(const std::string& role) const {
    const auto ch = data_.train.series.dim(1), len = data_.train.series.dim(2), k = data_.train.class_count;
    if (role == "teacher_pi") return nn::build_wrn(cfg_.teacher_pi, {ch, cfg_.pi.resolution, cfg_.pi.resolution}, k);
    if (role == "teacher_ts") return nn::build_wrn(cfg_.teacher_ts, {ch, len}, k);
    return nn::build_wrn(cfg_.student, {ch, len}, k);
  }

  distill::TrainOptions options(Modality m, bool early_stop, const std::string& role) const {
    distill::TrainOptions o;
    o.epochs = cfg_.epochs;
    o.batch_size = cfg_.batch_size;
    o.schedule = m == Modality::time_series ? cfg_.schedule_ts() : cfg_.schedule_pi();
    o.sgd = {cfg_.momentum, cfg_.weight_decay};
    o.seed = derive_seed(seed_, role + "/train");
    o.early_stop = early_stop;
    o.val_fraction = cfg_.val_fraction;
    o.config_digest = cfg_.digest();
    return o;
  }

  static std::string teacher_role(Modality m) { return m == Modality::time_series ? "teacher_ts" : "teacher_pi"; }

  const distill::TrainResult& teacher(Modality m, bool mixup_trained) {
    const auto key = std::pair{static_cast<int>(m), mixup_trained};
    if (auto it = teachers_.find(key); it != teachers_.end()) return it->second;
    const std::string role = teacher_role(m);
    auto r = stage("train-teacher", [&] {
      std::optional<augment::MixupConfig> mix;
      if (mixup_trained) mix = augment::MixupConfig{.alpha = cfg_.distill.teacher_alpha};
      return distill::train_teacher(arch(role), m, derive_seed(seed_, role), data_.train, options(m, cfg_.teacher_early_stop, role), mix,
                                    role, &data_.test);
    });
    bundles_.emplace(key, distill::TeacherBundle{nn::Network{arch(role), r.checkpoint.params}, m});
    return teachers_.emplace(key, std::move(r)).first->second;
  }

  const distill::TeacherBundle& teacher_bundle(Modality m, bool mixup_trained) {
    teacher(m, mixup_trained);
    return bundles_.at({static_cast<int>(m), mixup_trained});
  }

  const distill::TrainResult& scratch() {
    if (!scratch_) {
      distill::DistillConfig plain;
      plain.strategy = distill::Strategy::scratch;
      scratch_ = student_run(plain, "scratch");
    }
    return *scratch_;
  }

  distill::TrainResult student(const distill::DistillConfig& dc, const std::string& name = "student") {
    if (dc.strategy == distill::Strategy::scratch && !dc.student_mixup) {
      auto r = scratch();
      r.record.name = name;
      return r;
    }
    return student_run(dc, name);
  }

  double test_accuracy(const nn::Checkpoint& c, const std::string& role) const {
    const auto m = role == "teacher_pi" ? Modality::persistence_image : Modality::time_series;
    return metrics::evaluate(nn::Network{arch(role), c.params}, data_.test.inputs(m), data_.test.labels);
  }

  double v_score(const nn::Checkpoint& c, const std::string& role) const {
    const auto m = role == "teacher_pi" ? Modality::persistence_image : Modality::time_series;
    const auto clusters = metrics::cluster_penultimate(nn::Network{arch(role), c.params}, data_.test.inputs(m), data_.test.class_count,
                                                       derive_seed(seed_, "kmeans"));
    return metrics::v_measure(data_.test.labels, clusters);
  }

 private:
  distill::TrainResult student_run(const distill::DistillConfig& dc, const std::string& name) {
    distill::Teachers t;
    if (dc.uses_ts_teacher()) t.ts = &teacher_bundle(Modality::time_series, dc.teacher_trained_with_mixup);
    if (dc.uses_pi_teacher()) t.pi = &teacher_bundle(Modality::persistence_image, dc.teacher_trained_with_mixup);
    const nn::Checkpoint* init = dc.strategy == distill::Strategy::annealing ? &scratch().checkpoint : nullptr;
    return stage(dc.strategy == distill::Strategy::scratch ? "train-scratch" : "distill", [&] {
      return distill::distill_student(dc, t, arch("student"), derive_seed(seed_, "student"), data_.train,
                                      options(Modality::time_series, false, "student"), init, &data_.test, name);
    });
  }

  const ExperimentConfig& cfg_;
  const PreparedData& data_;
  std::uint64_t seed_;
  std::map<std::pair<int, bool>, distill::TrainResult> teachers_;
  std::map<std::pair<int, bool>, distill::TeacherBundle> bundles_;
  std::optional<distill::TrainResult> scratch_;
};

// ---------------------------------------------------------------------------
// Strategy matrix

/// The five mixup placements: (a) scratch with mixup, (b) student mixup,
/// (c) mixup-trained teachers, (d) both, (e) student mixup with separate
/// alphas for the two teachers' batches.
inline std::vector<std::pair<std::string, distill::DistillConfig>> mixup_placements(const distill::DistillConfig& base,
                                                                                      double alpha = 0.1,
                                                                                      distill::TeacherAlphas alphas = {0.1, 0.4}) {
  const augment::MixupConfig mix{.alpha = alpha};
  std::vector<std::pair<std::string, distill::DistillConfig>> out;
  auto add = [&](std::string name, auto edit) {
    auto c = base;
    c.student_mixup.reset();
    c.teacher_mixup.reset();
    c.teacher_trained_with_mixup = false;
    c.shared_batch = true;
    c.strategy = distill::Strategy::annealing;
    edit(c);
    c.validate();
    out.emplace_back(std::move(name), c);
  };
  add("a", [&](auto& c) {
    c.strategy = distill::Strategy::scratch;
    c.student_mixup = mix;
  });
  add("b", [&](auto& c) { c.student_mixup = mix; });
  add("c", [&](auto& c) {
    c.teacher_trained_with_mixup = true;
    c.teacher_alpha = alpha;
  });
  add("d", [&](auto& c) {
    c.teacher_trained_with_mixup = true;
    c.teacher_alpha = alpha;
    c.student_mixup = mix;
  });
  add("e", [&](auto& c) {
    c.student_mixup = mix;
    c.teacher_mixup = alphas;
    c.shared_batch = false;
  });
  return out;
}

// ---------------------------------------------------------------------------
// Report

struct ModelReport {
  std::string name;
  std::uint64_t flops = 0;
  std::vector<double> test_acc;  // per seed
  std::vector<double> v_measure;  // per seed
  std::vector<double> seconds_per_epoch;  // per seed; timing only
  metrics::MeanStd acc() const { return metrics::mean_std(test_acc); }
  metrics::MeanStd v() const { return metrics::mean_std(v_measure); }
};

struct MetricsReport {
  std::string strategy;
  std::vector<std::uint64_t> seeds;
  std::vector<ModelReport> models;
  std::map<std::string, std::string> artifacts;  // path relative to the output directory -> digest
  double total_seconds = 0.0;

  const ModelReport& model(const std::string& name) const {
    for (const auto& m : models)
      if (m.name == name) return m;
    throw InvalidArgument("report has no model '" + name + "'");
  }

  /// Deterministic part of the report (no wall-clock).
  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["strategy"] = strategy;
    j["seeds"] = seeds;
    j["models"] = nlohmann::ordered_json::array();
    for (const auto& m : models) {
      const auto a = m.acc(), v = m.v();
      j["models"].push_back({{"name", m.name},
                             {"flops", m.flops},
                             {"test_acc", m.test_acc},
                             {"test_acc_mean", a.mean},
                             {"test_acc_std", a.std},
                             {"v_measure", m.v_measure},
                             {"v_measure_mean", v.mean},
                             {"v_measure_std", v.std}});
    }
    j["artifacts"] = artifacts;
    return j;
  }

  nlohmann::ordered_json timing_json() const {
    nlohmann::ordered_json j;
    j["total_seconds"] = total_seconds;
    for (const auto& m : models) j["seconds_per_epoch"][m.name] = m.seconds_per_epoch;
    return j;
  }
};

/// Runs the configured strategy for every seed, writes checkpoints, run logs,
/// report.json and timing.json under cfg.out, and returns the report.
inline MetricsReport run_experiment(const ExperimentConfig& cfg, const std::function<void(const std::string&)>& log = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  stage("config", [&] { cfg.validate(); });
  const fs::path out = cfg.out;
  stage("output", [&] {
    fs::create_directories(out);
    cfg.save(out / "config.txt");
  });
  const auto& dc = cfg.distill;
  const bool needs_images = dc.uses_pi_teacher();
  const auto data = prepare_data(cfg, needs_images, needs_images ? out / "pi_cache.tdpi" : fs::path{});
  if (log) log("data: " + std::to_string(data.train.size()) + " train, " + std::to_string(data.test.size()) + " test windows");

  std::vector<std::string> roles;
  if (dc.uses_ts_teacher()) roles.push_back("teacher_ts");
  if (dc.uses_pi_teacher()) roles.push_back("teacher_pi");
  if (dc.strategy == distill::Strategy::annealing) roles.push_back("scratch");
  roles.push_back("student");

  struct SeedResult {
    std::map<std::string, double> acc, v, seconds;
  };
  std::vector<SeedResult> results(cfg.seeds.size());
  std::mutex log_mutex;

  auto run_seed = [&](std::size_t i) {
    const auto seed = cfg.seeds[i];
    SeedRunner runner(cfg, data, seed);
    const fs::path dir = out / ("seed_" + std::to_string(seed));
    stage("output", [&] { fs::create_directories(dir); });
    for (const auto& role : roles) {
      const distill::TrainResult* r = nullptr;
      distill::TrainResult owned;
      if (role == "teacher_ts") r = &runner.teacher(Modality::time_series, dc.teacher_trained_with_mixup);
      else if (role == "teacher_pi") r = &runner.teacher(Modality::persistence_image, dc.teacher_trained_with_mixup);
      else if (role == "scratch") r = &runner.scratch();
      else {
        owned = runner.student(dc, "student");
        r = &owned;
      }
      stage("output", [&] {
        nn::save_checkpoint(dir / (role + ".tdck"), r->checkpoint);
        write_text(dir / (role + ".run"), r->record.to_text());
      });
      stage("evaluate", [&] {
        results[i].acc[role] = runner.test_accuracy(r->checkpoint, role == "scratch" ? "student" : role);
        results[i].v[role] = runner.v_score(r->checkpoint, role == "scratch" ? "student" : role);
      });
      results[i].seconds[role] = r->record.seconds_per_epoch();
      if (log) {
        std::lock_guard lock(log_mutex);
        log("seed " + std::to_string(seed) + ": " + role + " test accuracy " + std::to_string(results[i].acc[role]));
      }
    }
  };

  if (cfg.workers <= 1 || cfg.seeds.size() == 1) {
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i) run_seed(i);
  } else {
    std::vector<std::exception_ptr> errors(cfg.seeds.size());
    for (std::size_t begin = 0; begin < cfg.seeds.size(); begin += cfg.workers) {
      std::vector<std::jthread> pool;
      for (std::size_t i = begin; i < std::min(cfg.seeds.size(), begin + cfg.workers); ++i)
        pool.emplace_back([&, i] {
          try {
            run_seed(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        });
    }
    for (const auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  MetricsReport report;
  report.strategy = distill::strategy_name(dc.strategy);
  report.seeds = cfg.seeds;
  SeedRunner probe(cfg, data, cfg.seeds.front());
  for (const auto& role : roles) {
    ModelReport m;
    m.name = role;
    m.flops = nn::count_flops(probe.arch(role == "scratch" ? "student" : role));
    for (const auto& r : results) {
      m.test_acc.push_back(r.acc.at(role));
      m.v_measure.push_back(r.v.at(role));
      m.seconds_per_epoch.push_back(r.seconds.at(role));
    }
    report.models.push_back(std::move(m));
  }
  stage("output", [&] {
    if (needs_images) report.artifacts["pi_cache.tdpi"] = hex_digest(file_digest(out / "pi_cache.tdpi"));
    for (auto seed : cfg.seeds)
      for (const auto& role : roles)
        for (const char* ext : {".tdck", ".run"}) {
          const std::string rel = "seed_" + std::to_string(seed) + "/" + role + ext;
          report.artifacts[rel] = hex_digest(file_digest(out / rel));
        }
    report.total_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_text(out / "report.json", report.to_json().dump(2) + "\n");
    write_text(out / "timing.json", report.timing_json().dump(2) + "\n");
  });
  return report;
}

}  // namespace topokd::harness
