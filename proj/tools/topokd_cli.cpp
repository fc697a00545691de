// topokd: command-line front end for persistence-image extraction, training,
// distillation, evaluation and full experiment runs.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "topokd/topokd.hpp"

namespace fs = std::filesystem;
using namespace topokd;
using distill::Modality;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, const char* out_help) {
  cmd->add_option("--config", c.config, "experiment config file (key=value)")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "seed (replaces the configured seed list)");
  cmd->add_option("--out", c.out, out_help);
}

harness::ExperimentConfig load_config(const Common& c) {
  auto cfg = harness::stage("config", [&] { return c.config.empty() ? harness::ExperimentConfig{} : harness::ExperimentConfig::load(c.config); });
  if (c.seed) cfg.seeds = {*c.seed};
  if (!c.out.empty()) cfg.out = c.out;
  harness::stage("config", [&] { cfg.validate(); });
  return cfg;
}

std::string role_of(const std::string& model) {
  if (model == "student" || model == "teacher_ts" || model == "teacher_pi") return model;
  throw StageError("arguments", "--model must be student, teacher_ts or teacher_pi");
}

Modality modality_of(const std::string& role) { return role == "teacher_pi" ? Modality::persistence_image : Modality::time_series; }

nn::Checkpoint load_for(const harness::SeedRunner& runner, const std::string& path, const std::string& role) {
  return harness::stage("load-checkpoint", [&] { return nn::load_checkpoint(path, runner.arch(role)); });
}

void save_run(const fs::path& dir, const std::string& name, const distill::TrainResult& r) {
  harness::stage("output", [&] {
    fs::create_directories(dir);
    nn::save_checkpoint(dir / (name + ".tdck"), r.checkpoint);
    harness::write_text(dir / (name + ".run"), r.record.to_text());
  });
  std::printf("wrote %s\n", (dir / (name + ".tdck")).string().c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Topological persistence guided knowledge distillation for wearable-sensor time series"};
  app.require_subcommand(1);
  Common common;

  // gen-synth
  auto* gen = app.add_subcommand("gen-synth", "write the configured synthetic dataset as CSV files plus a manifest");
  add_common(gen, common, "output directory");
  gen->callback([&] {
    auto cfg = load_config(common);
    if (common.seed) cfg.synthetic.seed = *common.seed;
    const auto set = harness::stage("dataset", [&] { return data::generate_synthetic(cfg.synthetic, cfg.synthetic.seed); });
    const auto manifest = harness::stage("output", [&] { return data::write_csv_dataset(set, common.out.empty() ? "synthetic" : common.out); });
    std::printf("%zu windows, %zu classes -> %s\n", set.size(), set.class_count, manifest.string().c_str());
  });

  // extract-pi
  auto* pi = app.add_subcommand("extract-pi", "compute (or reuse) the persistence-image cache of the configured dataset");
  add_common(pi, common, "cache file (default <out>/pi_cache.tdpi)");
  pi->callback([&] {
    auto cfg = load_config(common);
    const fs::path path = common.out.empty() ? fs::path(cfg.out) / "pi_cache.tdpi" : fs::path(common.out);
    const auto d = harness::prepare_data(cfg, true, path);
    std::printf("%zu windows, %zux%zu images, %s -> %s\n", d.windows.size(), cfg.pi.resolution, cfg.pi.resolution,
                d.pi_cache_reused ? "reused cache" : "extracted", path.string().c_str());
  });

  // train-teacher
  std::string teacher_modality = "ts";
  bool teacher_mixup = false;
  auto* tt = app.add_subcommand("train-teacher", "train a time-series or persistence-image teacher");
  add_common(tt, common, "output directory");
  tt->add_option("--modality", teacher_modality, "ts or pi")->check(CLI::IsMember({"ts", "pi"}));
  tt->add_flag("--mixup", teacher_mixup, "train with mixup (alpha = distill.teacher_alpha)");
  tt->callback([&] {
    auto cfg = load_config(common);
    const auto m = teacher_modality == "ts" ? Modality::time_series : Modality::persistence_image;
    const auto data = harness::prepare_data(cfg, m == Modality::persistence_image);
    harness::SeedRunner runner(cfg, data, cfg.seeds.front());
    const auto& r = runner.teacher(m, teacher_mixup);
    const auto role = harness::SeedRunner::teacher_role(m);
    save_run(cfg.out, role, r);
    std::printf("%s test accuracy %.2f%%\n", role.c_str(), runner.test_accuracy(r.checkpoint, role));
  });

  // train-scratch
  auto* ts = app.add_subcommand("train-scratch", "train the student from scratch with cross-entropy");
  add_common(ts, common, "output directory");
  ts->callback([&] {
    auto cfg = load_config(common);
    const auto data = harness::prepare_data(cfg, false);
    harness::SeedRunner runner(cfg, data, cfg.seeds.front());
    const auto& r = runner.scratch();
    save_run(cfg.out, "scratch", r);
    std::printf("scratch test accuracy %.2f%%\n", runner.test_accuracy(r.checkpoint, "student"));
  });

  // distill
  std::string strategy, teacher_ts_path, teacher_pi_path, scratch_path;
  auto* di = app.add_subcommand("distill", "distill a student from trained teacher checkpoints");
  add_common(di, common, "output directory");
  di->add_option("--strategy", strategy, "override distill.strategy");
  di->add_option("--teacher-ts", teacher_ts_path, "time-series teacher checkpoint")->check(CLI::ExistingFile);
  di->add_option("--teacher-pi", teacher_pi_path, "persistence-image teacher checkpoint")->check(CLI::ExistingFile);
  di->add_option("--scratch", scratch_path, "scratch student checkpoint (annealing)")->check(CLI::ExistingFile);
  di->callback([&] {
    auto cfg = load_config(common);
    if (!strategy.empty()) cfg.distill.strategy = harness::stage("config", [&] { return distill::parse_strategy(strategy); });
    const auto& dc = cfg.distill;
    const auto data = harness::prepare_data(cfg, !teacher_pi_path.empty());
    harness::SeedRunner runner(cfg, data, cfg.seeds.front());
    std::optional<distill::TeacherBundle> t1, t2;
    std::optional<nn::Checkpoint> scratch;
    if (!teacher_ts_path.empty()) t1 = distill::TeacherBundle{{runner.arch("teacher_ts"), load_for(runner, teacher_ts_path, "teacher_ts").params}, Modality::time_series};
    if (!teacher_pi_path.empty()) t2 = distill::TeacherBundle{{runner.arch("teacher_pi"), load_for(runner, teacher_pi_path, "teacher_pi").params}, Modality::persistence_image};
    if (!scratch_path.empty()) scratch = load_for(runner, scratch_path, "student");
    const auto r = harness::stage("distill", [&] {
      return distill::distill_student(dc, {t1 ? &*t1 : nullptr, t2 ? &*t2 : nullptr}, runner.arch("student"),
                                      harness::derive_seed(runner.seed(), "student"), data.train,
                                      runner.options(Modality::time_series, false, "student"), scratch ? &*scratch : nullptr, &data.test,
                                      "student");
    });
    save_run(cfg.out, "student", r);
    std::printf("student (%s) test accuracy %.2f%%\n", distill::strategy_name(dc.strategy), runner.test_accuracy(r.checkpoint, "student"));
  });

  // eval / vscore
  std::string checkpoint, model = "student";
  auto* ev = app.add_subcommand("eval", "test accuracy of a checkpoint");
  auto* vs = app.add_subcommand("vscore", "V-measure of k-means clusters of penultimate features on the test split");
  for (auto* cmd : {ev, vs}) {
    add_common(cmd, common, "unused");
    cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
    cmd->add_option("--model", model, "student, teacher_ts or teacher_pi");
  }
  ev->callback([&] {
    auto cfg = load_config(common);
    const auto role = role_of(model);
    const auto data = harness::prepare_data(cfg, modality_of(role) == Modality::persistence_image);
    harness::SeedRunner runner(cfg, data, cfg.seeds.front());
    const auto c = load_for(runner, checkpoint, role);
    std::printf("accuracy %.4f\n", harness::stage("evaluate", [&] { return runner.test_accuracy(c, role); }));
  });
  vs->callback([&] {
    auto cfg = load_config(common);
    const auto role = role_of(model);
    const auto data = harness::prepare_data(cfg, modality_of(role) == Modality::persistence_image);
    harness::SeedRunner runner(cfg, data, cfg.seeds.front());
    const auto c = load_for(runner, checkpoint, role);
    std::printf("v_measure %.6f\n", harness::stage("evaluate", [&] { return runner.v_score(c, role); }));
  });

  // param-scan
  std::string ckpt_a, ckpt_b;
  double kappa_lo = -2.0, kappa_hi = 2.0;
  std::size_t kappa_points = 41;
  auto* ps = app.add_subcommand("param-scan", "accuracy along (1 - kappa) * a + kappa * b, written as CSV");
  add_common(ps, common, "CSV file (default stdout)");
  ps->add_option("--a", ckpt_a, "checkpoint at kappa = 0")->required()->check(CLI::ExistingFile);
  ps->add_option("--b", ckpt_b, "checkpoint at kappa = 1")->required()->check(CLI::ExistingFile);
  ps->add_option("--model", model, "student, teacher_ts or teacher_pi");
  ps->add_option("--kappa-min", kappa_lo, "first kappa");
  ps->add_option("--kappa-max", kappa_hi, "last kappa");
  ps->add_option("--points", kappa_points, "grid size")->check(CLI::PositiveNumber);
  ps->callback([&] {
    const std::string csv_path = common.out;
    common.out.clear();
    auto cfg = load_config(common);
    const auto role = role_of(model);
    const auto m = modality_of(role);
    const auto data = harness::prepare_data(cfg, m == Modality::persistence_image);
    harness::SeedRunner runner(cfg, data, cfg.seeds.front());
    const auto a = load_for(runner, ckpt_a, role), b = load_for(runner, ckpt_b, role);
    const auto grid = metrics::kappa_grid(kappa_lo, kappa_hi, kappa_points);
    const auto rows = harness::stage("param-scan", [&] {
      return metrics::parametric_scan(runner.arch(role), a.params, b.params, data.train.inputs(m), data.train.labels, data.test.inputs(m),
                                      data.test.labels, grid);
    });
    if (csv_path.empty()) {
      metrics::write_scan_csv(std::cout, rows);
    } else {
      harness::stage("output", [&] {
        std::ofstream os(csv_path);
        metrics::write_scan_csv(os, rows);
        if (!os) throw FormatError("cannot write " + csv_path);
      });
      std::printf("wrote %zu rows to %s\n", rows.size(), csv_path.c_str());
    }
  });

  // run
  auto* run = app.add_subcommand("run", "full experiment: teachers, scratch student, distillation, report");
  add_common(run, common, "output directory");
  run->add_option("--strategy", strategy, "override distill.strategy");
  run->callback([&] {
    auto cfg = load_config(common);
    if (!strategy.empty()) cfg.distill.strategy = harness::stage("config", [&] { return distill::parse_strategy(strategy); });
    const auto report = harness::run_experiment(cfg, [](const std::string& line) { std::fprintf(stderr, "%s\n", line.c_str()); });
    for (const auto& m : report.models) {
      const auto a = m.acc(), v = m.v();
      std::printf("%-11s acc %6.2f +- %5.2f  v %.4f +- %.4f  flops %llu\n", m.name.c_str(), a.mean, a.std, v.mean, v.std,
                  static_cast<unsigned long long>(m.flops));
    }
    std::printf("report: %s\n", (fs::path(cfg.out) / "report.json").string().c_str());
  });

  // flops
  auto* fl = app.add_subcommand("flops", "forward-pass FLOPs (2 x multiply-accumulates) of the configured networks");
  add_common(fl, common, "unused");
  fl->callback([&] {
    auto cfg = load_config(common);
    const std::size_t ch = cfg.dataset == "synthetic" ? cfg.synthetic.channels : 0;
    const auto classes = cfg.dataset == "synthetic" ? cfg.synthetic.classes.size() : std::size_t{0};
    std::size_t len = cfg.synthetic.length;
    std::size_t channels = ch, k = classes;
    if (cfg.dataset != "synthetic") {
      const auto m = harness::stage("dataset", [&] { return data::parse_manifest(cfg.dataset.substr(4)); });
      channels = m.channels, len = m.length, k = m.classes;
    }
    const auto r = cfg.pi.resolution;
    harness::stage("flops", [&] {
      std::printf("student    %llu\n", static_cast<unsigned long long>(nn::count_flops(nn::build_wrn(cfg.student, {channels, len}, k))));
      std::printf("teacher_ts %llu\n", static_cast<unsigned long long>(nn::count_flops(nn::build_wrn(cfg.teacher_ts, {channels, len}, k))));
      std::printf("teacher_pi %llu\n", static_cast<unsigned long long>(nn::count_flops(nn::build_wrn(cfg.teacher_pi, {channels, r, r}, k))));
    });
  });

  // show-config
  auto* sc = app.add_subcommand("show-config", "print the effective configuration");
  add_common(sc, common, "output directory");
  sc->callback([&] { std::fputs(load_config(common).to_text().c_str(), stdout); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const StageError& e) {
    std::fprintf(stderr, "topokd: error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    const auto* sub = app.get_subcommands().empty() ? nullptr : app.get_subcommands().front();
    std::fprintf(stderr, "topokd: error: [%s] %s\n", sub ? sub->get_name().c_str() : "cli", e.what());
    return 2;
  }
  return 0;
}
