#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "topokd/checkpoint.hpp"
#include "topokd/dataset.hpp"
#include "topokd/digest.hpp"
#include "topokd/error.hpp"
#include "topokd/kd_losses.hpp"
#include "topokd/metrics.hpp"
#include "topokd/mixup.hpp"
#include "topokd/network.hpp"
#include "topokd/optimizer.hpp"
#include "topokd/persistence_image.hpp"

namespace topokd::distill {

using nn::Checkpoint;
using nn::Gradients;
using nn::Network;

enum class Modality { time_series, persistence_image };

inline const char* modality_name(Modality m) { return m == Modality::time_series ? "time_series" : "persistence_image"; }

enum class Strategy { scratch, kd_ts, kd_pi, base_two_teacher, annealing };

inline const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::scratch: return "scratch";
    case Strategy::kd_ts: return "kd_ts";
    case Strategy::kd_pi: return "kd_pi";
    case Strategy::base_two_teacher: return "base_two_teacher";
    case Strategy::annealing: return "annealing";
  }
  return "?";
}

inline Strategy parse_strategy(const std::string& s) {
  for (auto v : {Strategy::scratch, Strategy::kd_ts, Strategy::kd_pi, Strategy::base_two_teacher, Strategy::annealing})
    if (s == strategy_name(v)) return v;
  throw InvalidArgument("unknown strategy '" + s + "' (expected scratch, kd_ts, kd_pi, base_two_teacher or annealing)");
}

/// How the persistence-image teacher sees a mixed batch: the same convex mix
/// of the precomputed images, or images recomputed from the mixed signals.
enum class PIMixMode { mix_images, recompute };

struct TeacherAlphas {
  double alpha1 = 0.1;  // time-series teacher's batch
  double alpha2 = 0.1;  // persistence-image teacher's batch

  friend bool operator==(const TeacherAlphas&, const TeacherAlphas&) = default;
};

struct DistillConfig {
  Strategy strategy = Strategy::annealing;
  double tau = 0.7;
  double temperature = 4.0;
  double eta = 0.7;
  /// Set when the student trains on mixed batches.
  std::optional<augment::MixupConfig> student_mixup;
  bool teacher_trained_with_mixup = false;
  double teacher_alpha = 0.1;
  /// Separate concentrations for the two teachers' mixed batches.
  std::optional<TeacherAlphas> teacher_mixup;
  /// One mixed batch serves both teachers (needs alpha1 == alpha2).
  bool shared_batch = true;
  PIMixMode pi_mix = PIMixMode::mix_images;

  static DistillConfig geneactiv() { return {}; }
  static DistillConfig pamap2() {
    DistillConfig c;
    c.tau = 0.99;
    c.eta = 0.3;
    return c;
  }

  bool uses_ts_teacher() const {
    return strategy == Strategy::kd_ts || strategy == Strategy::base_two_teacher || strategy == Strategy::annealing;
  }
  bool uses_pi_teacher() const {
    return strategy == Strategy::kd_pi || strategy == Strategy::base_two_teacher || strategy == Strategy::annealing;
  }
  bool two_teachers() const { return uses_ts_teacher() && uses_pi_teacher(); }

  /// `closed_tau` admits tau = 0 and tau = 1.
  void validate(bool closed_tau = false) const {
    const bool tau_ok = closed_tau ? (tau >= 0.0 && tau <= 1.0) : (tau > 0.0 && tau < 1.0);
    if (!tau_ok) throw InvalidArgument(closed_tau ? "distill: tau must lie in [0, 1]" : "distill: tau must lie in (0, 1)");
    if (!(temperature > 0.0) || !std::isfinite(temperature)) throw InvalidArgument("distill: temperature must be > 0");
    if (!(eta >= 0.0 && eta <= 1.0)) throw InvalidArgument("distill: eta must lie in [0, 1]");
    if (student_mixup) student_mixup->validate();
    if (teacher_trained_with_mixup && !(teacher_alpha > 0.0)) throw InvalidArgument("distill: teacher_alpha must be > 0");
    if (teacher_mixup) {
      if (!(teacher_mixup->alpha1 > 0.0) || !(teacher_mixup->alpha2 > 0.0)) throw InvalidArgument("distill: teacher mixup alphas must be > 0");
      if (!student_mixup) throw InvalidArgument("distill: per-teacher mixup alphas need student mixup");
      if (!two_teachers()) throw InvalidArgument("distill: per-teacher mixup alphas need a two-teacher strategy");
      if (shared_batch && teacher_mixup->alpha1 != teacher_mixup->alpha2)
        throw InvalidArgument("distill: a shared mixed batch needs alpha1 == alpha2; disable shared_batch");
    }
  }

  std::uint64_t digest() const {
    Digest d;
    d.text("DistillConfig/1").value(static_cast<int>(strategy)).value(tau).value(temperature).value(eta);
    d.value(student_mixup.has_value());
    if (student_mixup) d.value(student_mixup->alpha).value(student_mixup->proportion).value(student_mixup->seed);
    d.value(teacher_trained_with_mixup).value(teacher_alpha).value(teacher_mixup.has_value());
    if (teacher_mixup) d.value(teacher_mixup->alpha1).value(teacher_mixup->alpha2);
    d.value(shared_batch).value(static_cast<int>(pi_mix));
    return d.get();
  }

  friend bool operator==(const DistillConfig&, const DistillConfig&) = default;
};

struct TeacherBundle {
  Network net;
  Modality modality = Modality::time_series;
};

// ---------------------------------------------------------------------------
// Data

/// [n, channels, R, R] tensor of per-window image stacks.
inline nn::Tensor images_tensor(std::span<const tda::PIStack> stacks) {
  if (stacks.empty()) return nn::Tensor({0, 0, 0, 0});
  const std::size_t ch = stacks.front().size(), r = ch ? stacks.front().front().resolution : 0;
  nn::Tensor t({stacks.size(), ch, r, r});
  std::size_t k = 0;
  for (std::size_t i = 0; i < stacks.size(); ++i) {
    if (stacks[i].size() != ch) throw ShapeError("images_tensor: window " + std::to_string(i) + " has a different channel count");
    for (const auto& img : stacks[i]) {
      if (img.resolution != r) throw ShapeError("images_tensor: window " + std::to_string(i) + " has a different resolution");
      for (double v : img.grid) t[k++] = v;
    }
  }
  return t;
}

/// Persistence images of every row of a [n, channels, length] series tensor.
inline nn::Tensor images_of_series(const nn::Tensor& series, const tda::PIConfig& cfg) {
  if (series.rank() != 3) throw ShapeError("images_of_series: expected [n, channels, length]");
  const std::size_t n = series.dim(0), ch = series.dim(1), len = series.dim(2);
  std::vector<tda::SignalWindow> windows(n);
  for (std::size_t i = 0; i < n; ++i) {
    windows[i].values.resize(ch);
    for (std::size_t c = 0; c < ch; ++c) {
      const double* p = series.data() + (i * ch + c) * len;
      windows[i].values[c].assign(p, p + len);
    }
  }
  auto stacks = tda::extract_pi_batch(windows, cfg);
  return images_tensor(stacks);
}

struct Batch {
  nn::Tensor series;
  nn::Tensor images;
  std::vector<int> labels;

  bool has_images() const { return images.rank() == 4 && images.dim(0) == labels.size(); }

  const nn::Tensor& inputs(Modality m) const {
    if (m == Modality::time_series) return series;
    if (!has_images()) throw InvalidArgument("persistence images are missing for this batch");
    return images;
  }
};

/// Windows as tensors: raw series always, persistence images when available.
struct SampleSet {
  nn::Tensor series;  // [n, C, L]
  nn::Tensor images;  // [n, C, R, R] or empty
  std::vector<int> labels;
  std::size_t class_count = 0;
  std::optional<tda::PIConfig> pi_config;

  std::size_t size() const noexcept { return labels.size(); }
  bool has_images() const { return images.rank() == 4 && images.dim(0) == labels.size(); }

  const nn::Tensor& inputs(Modality m) const {
    if (m == Modality::time_series) return series;
    if (!has_images()) throw InvalidArgument("persistence images are missing for this set");
    return images;
  }

  Batch batch(std::span<const std::size_t> rows) const {
    Batch b;
    b.series = series.gather(rows);
    if (has_images()) b.images = images.gather(rows);
    for (auto r : rows) b.labels.push_back(labels.at(r));
    return b;
  }

  SampleSet subset(std::span<const std::size_t> rows) const {
    SampleSet s;
    s.series = series.gather(rows);
    if (has_images()) s.images = images.gather(rows);
    for (auto r : rows) s.labels.push_back(labels.at(r));
    s.class_count = class_count;
    s.pi_config = pi_config;
    return s;
  }

  static SampleSet from(const data::LabeledWindowSet& set, std::span<const tda::PIStack> stacks = {},
                        std::optional<tda::PIConfig> pi_config = std::nullopt) {
    SampleSet s;
    s.series = set.to_tensor();
    s.labels = set.labels();
    s.class_count = set.class_count;
    if (!stacks.empty()) {
      if (stacks.size() != set.size()) throw ShapeError("SampleSet: image count does not match window count");
      s.images = images_tensor(stacks);
    }
    s.pi_config = pi_config;
    return s;
  }
};

// ---------------------------------------------------------------------------
// Steps

struct StepOutput {
  Gradients grads;
  double loss = 0.0;
  double ce = 0.0;
  double kd = 0.0;
};

using StepFn = std::function<StepOutput(Network&, const Batch&, std::mt19937_64&)>;

namespace detail {

inline nn::LossGrad scaled(double a, const nn::LossGrad& x) {
  nn::LossGrad out{a * x.loss, x.grad};
  for (double& g : out.grad.storage()) g *= a;
  return out;
}

inline void accumulate(Gradients& into, const Gradients& add) {
  for (std::size_t t = 0; t < into.size(); ++t)
    for (std::size_t i = 0; i < into[t].size(); ++i) into[t][i] += add[t][i];
}

inline void check_teacher(const TeacherBundle& t, Modality expected, const char* who) {
  if (t.modality != expected)
    throw InvalidArgument(std::string(who) + " must be a " + modality_name(expected) + " teacher, got " + modality_name(t.modality));
}

/// Teacher input for a mixed batch: the mixed series, or the images mixed with
/// the same pairs (or recomputed from the mixed series).
inline nn::Tensor teacher_input(const TeacherBundle& t, const Batch& batch, const augment::MixedBatch& m, PIMixMode mode,
                                const std::optional<tda::PIConfig>& pi_cfg) {
  if (t.modality == Modality::time_series) return m.inputs;
  if (mode == PIMixMode::recompute) {
    if (!pi_cfg) throw InvalidArgument("recomputing persistence images needs a PI configuration");
    return images_of_series(m.inputs, *pi_cfg);
  }
  return augment::apply_mix(batch.inputs(Modality::persistence_image), m);
}

}  // namespace detail

/// Cross-entropy (or mixup cross-entropy) on the model's own modality.
inline StepFn supervised_step(Modality modality, std::optional<augment::MixupConfig> mixup) {
  if (mixup) mixup->validate();
  return [modality, mixup](Network& net, const Batch& b, std::mt19937_64& rng) {
    const nn::Tensor& x = b.inputs(modality);
    nn::LossGrad lg;
    nn::ForwardResult fr;
    if (mixup) {
      const auto m = augment::mixup_batch(x, b.labels, *mixup, rng);
      fr = nn::forward(net, m.inputs, nn::Mode::train);
      lg = augment::mixup_ce_loss(fr.logits, m);
    } else {
      fr = nn::forward(net, x, nn::Mode::train);
      lg = nn::cross_entropy(fr.logits, b.labels);
    }
    return StepOutput{nn::backward(net, fr.cache, lg.grad), lg.loss, lg.loss, 0.0};
  };
}

/// Single-teacher distillation on time-series student inputs; with student
/// mixup the teacher sees the mixed batch.
inline StepFn kd_step(const TeacherBundle& teacher, const DistillConfig& cfg, std::optional<tda::PIConfig> pi_cfg = std::nullopt) {
  return [&teacher, cfg, pi_cfg](Network& net, const Batch& b, std::mt19937_64& rng) {
    nn::ForwardResult fr;
    nn::LossGrad ce;
    nn::Tensor t_logits;
    if (cfg.student_mixup) {
      const auto m = augment::mixup_batch(b.series, b.labels, *cfg.student_mixup, rng);
      t_logits = nn::predict(teacher.net, detail::teacher_input(teacher, b, m, cfg.pi_mix, pi_cfg));
      fr = nn::forward(net, m.inputs, nn::Mode::train);
      ce = augment::mixup_ce_loss(fr.logits, m);
    } else {
      t_logits = nn::predict(teacher.net, b.inputs(teacher.modality));
      fr = nn::forward(net, b.series, nn::Mode::train);
      ce = nn::cross_entropy(fr.logits, b.labels);
    }
    const auto kd = kd_kl_loss(t_logits, fr.logits, cfg.temperature);
    const auto total = nn::combine(1.0 - cfg.tau, ce, cfg.tau, kd);
    return StepOutput{nn::backward(net, fr.cache, total.grad), total.loss, ce.loss, kd.loss};
  };
}

/// Two teachers on a clean batch: (1 - tau) * CE + tau * (eta * KD1 + (1 - eta) * KD2).
inline StepFn two_teacher_step(const TeacherBundle& ts, const TeacherBundle& pi, const DistillConfig& cfg) {
  detail::check_teacher(ts, Modality::time_series, "teacher1");
  detail::check_teacher(pi, Modality::persistence_image, "teacher2");
  return [&ts, &pi, cfg](Network& net, const Batch& b, std::mt19937_64&) {
    const auto t1 = nn::predict(ts.net, b.series);
    const auto t2 = nn::predict(pi.net, b.inputs(Modality::persistence_image));
    auto fr = nn::forward(net, b.series, nn::Mode::train);
    const auto ce = nn::cross_entropy(fr.logits, b.labels);
    const auto kd = multi_teacher_kd_loss(t1, t2, fr.logits, cfg.eta, cfg.temperature);
    const auto total = nn::combine(1.0 - cfg.tau, ce, cfg.tau, kd);
    return StepOutput{nn::backward(net, fr.cache, total.grad), total.loss, ce.loss, kd.loss};
  };
}

/// Two teachers with mixup. Separate batches B1 (alpha1) and B2 (alpha2):
///   eta * [(1 - tau) * mixCE(B1) + tau * KD(T1(B1), S(B1))]
///   + (1 - eta) * [(1 - tau) * mixCE(B2) + tau * KD(T2(B2), S(B2))].
/// With a shared batch both brackets see the same student logits, so the sum
/// is grouped as (1 - tau) * mixCE + tau * (eta * KD1 + (1 - eta) * KD2).
inline StepOutput mixed_multi_teacher_step(const Batch& batch, const TeacherBundle& ts, const TeacherBundle& pi, Network& student,
                                           const DistillConfig& cfg, std::mt19937_64& rng,
                                           const std::optional<tda::PIConfig>& pi_cfg = std::nullopt) {
  detail::check_teacher(ts, Modality::time_series, "teacher1");
  detail::check_teacher(pi, Modality::persistence_image, "teacher2");
  if (cfg.pi_mix == PIMixMode::mix_images && !batch.has_images())
    throw InvalidArgument("mixed two-teacher step: persistence images are missing for this batch");
  const double base_alpha = cfg.student_mixup ? cfg.student_mixup->alpha : 0.1;
  const double proportion = cfg.student_mixup ? cfg.student_mixup->proportion : 1.0;
  const double a1 = cfg.teacher_mixup ? cfg.teacher_mixup->alpha1 : base_alpha;
  const double a2 = cfg.teacher_mixup ? cfg.teacher_mixup->alpha2 : base_alpha;

  if (cfg.shared_batch) {
    if (a1 != a2) throw InvalidArgument("mixed two-teacher step: a shared batch needs alpha1 == alpha2");
    const auto m = augment::mixup_batch(batch.series, batch.labels, {.alpha = a1, .proportion = proportion}, rng);
    const auto t1 = nn::predict(ts.net, m.inputs);
    const auto t2 = nn::predict(pi.net, detail::teacher_input(pi, batch, m, cfg.pi_mix, pi_cfg));
    auto fr = nn::forward(student, m.inputs, nn::Mode::train);
    const auto ce = augment::mixup_ce_loss(fr.logits, m);
    const auto kd = multi_teacher_kd_loss(t1, t2, fr.logits, cfg.eta, cfg.temperature);
    const auto total = nn::combine(1.0 - cfg.tau, ce, cfg.tau, kd);
    return {nn::backward(student, fr.cache, total.grad), total.loss, ce.loss, kd.loss};
  }

  const auto m1 = augment::mixup_batch(batch.series, batch.labels, {.alpha = a1, .proportion = proportion}, rng);
  const auto m2 = augment::mixup_batch(batch.series, batch.labels, {.alpha = a2, .proportion = proportion}, rng);
  const auto t1 = nn::predict(ts.net, m1.inputs);
  const auto t2 = nn::predict(pi.net, detail::teacher_input(pi, batch, m2, cfg.pi_mix, pi_cfg));

  auto f1 = nn::forward(student, m1.inputs, nn::Mode::train);
  const auto ce1 = augment::mixup_ce_loss(f1.logits, m1);
  const auto kd1 = kd_kl_loss(t1, f1.logits, cfg.temperature);
  const auto l1 = nn::combine(1.0 - cfg.tau, ce1, cfg.tau, kd1);
  auto f2 = nn::forward(student, m2.inputs, nn::Mode::train);
  const auto ce2 = augment::mixup_ce_loss(f2.logits, m2);
  const auto kd2 = kd_kl_loss(t2, f2.logits, cfg.temperature);
  const auto l2 = nn::combine(1.0 - cfg.tau, ce2, cfg.tau, kd2);

  StepOutput out;
  out.grads = nn::backward(student, f1.cache, detail::scaled(cfg.eta, l1).grad);
  detail::accumulate(out.grads, nn::backward(student, f2.cache, detail::scaled(1.0 - cfg.eta, l2).grad));
  out.loss = cfg.eta * l1.loss + (1.0 - cfg.eta) * l2.loss;
  out.ce = cfg.eta * ce1.loss + (1.0 - cfg.eta) * ce2.loss;
  out.kd = cfg.eta * kd1.loss + (1.0 - cfg.eta) * kd2.loss;
  return out;
}

inline StepFn mixed_two_teacher_step(const TeacherBundle& ts, const TeacherBundle& pi, const DistillConfig& cfg,
                                     std::optional<tda::PIConfig> pi_cfg = std::nullopt) {
  detail::check_teacher(ts, Modality::time_series, "teacher1");
  detail::check_teacher(pi, Modality::persistence_image, "teacher2");
  return [&ts, &pi, cfg, pi_cfg](Network& net, const Batch& b, std::mt19937_64& rng) {
    return mixed_multi_teacher_step(b, ts, pi, net, cfg, rng, pi_cfg);
  };
}

// ---------------------------------------------------------------------------
// Training loop and records

struct TrainOptions {
  int epochs = 30;
  std::size_t batch_size = 32;
  nn::LRSchedule schedule = nn::LRSchedule::time_series(30);
  nn::SgdOptions sgd;
  std::uint64_t seed = 0;
  bool early_stop = false;
  double val_fraction = 0.1;
  std::uint64_t config_digest = 0;
  /// Receives (epoch, measured validation accuracy) and returns the value used
  /// for checkpoint selection.
  std::function<double(int, double)> validation_hook;

  void validate() const {
    if (epochs < 1) throw InvalidArgument("train: epochs must be >= 1");
    if (batch_size < 2) throw InvalidArgument("train: batch_size must be >= 2");
    if (schedule.total_epochs != epochs)
      throw InvalidArgument("train: schedule covers " + std::to_string(schedule.total_epochs) + " epochs, training runs " +
                            std::to_string(epochs));
    if (early_stop && !(val_fraction > 0.0 && val_fraction < 1.0)) throw InvalidArgument("train: val_fraction must lie in (0, 1)");
  }
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  double ce = 0.0;
  double kd = 0.0;
  double val_acc = std::numeric_limits<double>::quiet_NaN();
  double test_acc = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t params_digest = 0;
  double seconds = 0.0;
};

struct RunRecord {
  std::string name;
  std::string objective;  // ce, mixup-ce, kd, two-teacher, mixed-two-teacher
  std::string init;       // random:<seed> or scratch:<digest>
  std::uint64_t init_digest = 0;
  std::vector<EpochRecord> epochs;
  int selected_epoch = -1;

  /// Text log without wall-clock fields, so equal runs give equal text.
  std::string to_text() const {
    std::string out = "run name=" + name + " objective=" + objective + " init=" + init + " init_digest=" + hex_digest(init_digest) + "\n";
    char buf[320];
    for (const auto& e : epochs) {
      std::snprintf(buf, sizeof buf, "epoch=%d lr=%.17g loss=%.17g ce=%.17g kd=%.17g val_acc=%.17g test_acc=%.17g params=%s\n", e.epoch,
                    e.lr, e.loss, e.ce, e.kd, e.val_acc, e.test_acc, hex_digest(e.params_digest).c_str());
      out += buf;
    }
    out += "selected_epoch=" + std::to_string(selected_epoch) + "\n";
    return out;
  }

  double seconds_per_epoch() const {
    if (epochs.empty()) return 0.0;
    double s = 0.0;
    for (const auto& e : epochs) s += e.seconds;
    return s / static_cast<double>(epochs.size());
  }
};

struct TrainResult {
  Checkpoint checkpoint;
  RunRecord record;
};

/// Mini-batch SGD over `train` on the given input modality. The checkpoint is
/// the final epoch, or with early stopping the epoch of best validation
/// accuracy on a stratified held-out part of `train` (earliest on ties).
/// Checkpoint.epoch is the 0-based index of the epoch it was taken after.
inline TrainResult train_network(Network net, const SampleSet& train, Modality modality, const TrainOptions& opt,
                                 const StepFn& step, RunRecord record, const SampleSet* test = nullptr) {
  opt.validate();
  if (train.size() < 2) throw InvalidArgument("train: empty training split");
  train.inputs(modality);
  if (test) test->inputs(modality);

  std::vector<std::size_t> all(train.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<std::size_t> fit_rows = all, val_rows;
  if (opt.early_stop) {
    auto s = data::stratified_holdout(all, train.labels, opt.val_fraction, opt.seed ^ 0x9e3779b97f4a7c15ULL);
    if (s.test.empty() || s.train.size() < 2) throw InvalidArgument("train: early-stopping split is empty");
    fit_rows = std::move(s.train);
    val_rows = std::move(s.test);
  }
  std::optional<SampleSet> val;
  if (!val_rows.empty()) val = train.subset(val_rows);

  record.init_digest = net.params.digest();
  std::mt19937_64 rng(opt.seed);
  nn::OptimizerState state;
  std::optional<Checkpoint> best;
  double best_acc = -std::numeric_limits<double>::infinity();

  for (int e = 0; e < opt.epochs; ++e) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochRecord rec;
    rec.epoch = e;
    rec.lr = nn::lr_at(opt.schedule, e);
    std::shuffle(fit_rows.begin(), fit_rows.end(), rng);
    double rows_seen = 0.0;
    for (std::size_t start = 0; start < fit_rows.size(); start += opt.batch_size) {
      const std::size_t count = std::min(opt.batch_size, fit_rows.size() - start);
      if (count < 2) break;  // batch statistics need two rows
      const auto b = train.batch(std::span(fit_rows).subspan(start, count));
      const auto out = step(net, b, rng);
      nn::sgd_step(net.params, out.grads, state, rec.lr, opt.sgd);
      const auto w = static_cast<double>(count);
      rec.loss += w * out.loss;
      rec.ce += w * out.ce;
      rec.kd += w * out.kd;
      rows_seen += w;
    }
    rec.loss /= rows_seen;
    rec.ce /= rows_seen;
    rec.kd /= rows_seen;
    rec.params_digest = net.params.digest();

    if (val) {
      rec.val_acc = metrics::evaluate(net, val->inputs(modality), val->labels);
      if (opt.validation_hook) rec.val_acc = opt.validation_hook(e, rec.val_acc);
      if (rec.val_acc > best_acc) {
        best_acc = rec.val_acc;
        best = nn::make_checkpoint(net.params, state, static_cast<std::uint32_t>(e), rng, opt.config_digest);
        record.selected_epoch = e;
      }
    }
    if (test) rec.test_acc = metrics::evaluate(net, test->inputs(modality), test->labels);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    record.epochs.push_back(rec);
  }
  if (!best) {
    best = nn::make_checkpoint(net.params, state, static_cast<std::uint32_t>(opt.epochs - 1), rng, opt.config_digest);
    record.selected_epoch = opt.epochs - 1;
  }
  return {std::move(*best), std::move(record)};
}

/// Trains a teacher (or a plain supervised model) from a seeded random init.
inline TrainResult train_teacher(const nn::Architecture& arch, Modality modality, std::uint64_t init_seed, const SampleSet& train,
                                 const TrainOptions& opt, std::optional<augment::MixupConfig> mixup = std::nullopt,
                                 std::string name = "teacher", const SampleSet* test = nullptr) {
  RunRecord rec;
  rec.name = std::move(name);
  rec.objective = mixup ? "mixup-ce" : "ce";
  rec.init = "random:" + std::to_string(init_seed);
  return train_network(Network::create(arch, init_seed), train, modality, opt, supervised_step(modality, mixup), std::move(rec), test);
}

struct Teachers {
  const TeacherBundle* ts = nullptr;
  const TeacherBundle* pi = nullptr;
};

/// Trains the time-series student under `cfg.strategy`. Annealing starts from
/// the parameters of `scratch`; every other strategy from a seeded random init.
inline TrainResult distill_student(const DistillConfig& cfg, const Teachers& teachers, const nn::Architecture& student_arch,
                                   std::uint64_t init_seed, const SampleSet& train, const TrainOptions& opt,
                                   const Checkpoint* scratch = nullptr, const SampleSet* test = nullptr, std::string name = "") {
  cfg.validate(true);
  if (cfg.uses_ts_teacher() && !teachers.ts) throw InvalidArgument(std::string(strategy_name(cfg.strategy)) + " needs a time-series teacher");
  if (cfg.uses_pi_teacher() && !teachers.pi)
    throw InvalidArgument(std::string(strategy_name(cfg.strategy)) + " needs a persistence-image teacher");
  if (cfg.strategy == Strategy::annealing && !scratch) throw InvalidArgument("annealing needs a scratch-trained student checkpoint");
  if (teachers.ts && cfg.uses_ts_teacher()) detail::check_teacher(*teachers.ts, Modality::time_series, "teacher1");
  if (teachers.pi && cfg.uses_pi_teacher()) detail::check_teacher(*teachers.pi, Modality::persistence_image, "teacher2");

  RunRecord rec;
  rec.name = name.empty() ? strategy_name(cfg.strategy) : std::move(name);
  Network net;
  if (cfg.strategy == Strategy::annealing) {
    net = Network{student_arch, scratch->params};
    nn::check_compatible(net.params, nn::init_parameters(student_arch, 0));
    rec.init = "scratch:" + hex_digest(scratch->params.digest());
  } else {
    net = Network::create(student_arch, init_seed);
    rec.init = "random:" + std::to_string(init_seed);
  }

  StepFn step;
  switch (cfg.strategy) {
    case Strategy::scratch:
      rec.objective = cfg.student_mixup ? "mixup-ce" : "ce";
      step = supervised_step(Modality::time_series, cfg.student_mixup);
      break;
    case Strategy::kd_ts:
    case Strategy::kd_pi:
      rec.objective = "kd";
      step = kd_step(cfg.strategy == Strategy::kd_ts ? *teachers.ts : *teachers.pi, cfg, train.pi_config);
      break;
    case Strategy::base_two_teacher:
    case Strategy::annealing:
      if (cfg.student_mixup) {
        rec.objective = "mixed-two-teacher";
        step = mixed_two_teacher_step(*teachers.ts, *teachers.pi, cfg, train.pi_config);
      } else {
        rec.objective = "two-teacher";
        step = two_teacher_step(*teachers.ts, *teachers.pi, cfg);
      }
      break;
  }
  return train_network(std::move(net), train, Modality::time_series, opt, step, std::move(rec), test);
}

}  // namespace topokd::distill
