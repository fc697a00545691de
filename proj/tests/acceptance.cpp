// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.
// Optional arguments select criteria by number, e.g. `acceptance 1 2 9`.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "test_support.hpp"
#include "topokd/topokd.hpp"

using namespace topokd;
using distill::Batch;
using distill::DistillConfig;
using distill::Modality;
using distill::Network;
using distill::SampleSet;
using distill::TeacherBundle;
using nn::Architecture;
using nn::Tensor;
using testing::grad_check;
using testing::logits_grad_check;
using testing::random_tensor;

namespace {

namespace fs = std::filesystem;

// Pinned tolerances.
constexpr double kPersistenceBudgetSeconds = 5.0;
constexpr double kPIMassRelErr = 1e-9;
constexpr double kGradRelErr = 1e-4;
constexpr double kHandKL = 1e-6;
constexpr double kBetaMean = 0.01;
constexpr double kUniformKS = 0.01;
constexpr double kMixedGradRel = 1e-13;
constexpr double kEndToEndScratchMin = 90.0;
constexpr double kTrendSlack = 0.5;
constexpr double kEndToEndBudgetSeconds = 15.0 * 60.0;
constexpr double kVOracle = 1e-6;

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
};

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// Shared fixtures

constexpr std::size_t kLen = 32;

const SampleSet& small_set() {
  static const SampleSet set = [] {
    auto spec = data::SyntheticSpec::desk_default();
    spec.length = kLen;
    spec.samples_per_class = 12;
    const auto raw = data::generate_synthetic(spec, 3);
    tda::PIConfig pi;
    pi.resolution = 8;
    pi.sigma = 0.3;
    const auto stacks = tda::extract_pi_batch(raw.windows, pi);
    return SampleSet::from(raw, stacks, pi);
  }();
  return set;
}

Architecture tiny_ts() { return {{nn::Conv1D{2, 3, 3, 1, 1}, nn::BatchNorm{3}, nn::ReLU{}, nn::GlobalAvgPool{}, nn::Dense{3, 3}}, {2, kLen}, 3}; }
Architecture tiny_pi() { return {{nn::Conv2D{2, 2, 3, 1, 1}, nn::BatchNorm{2}, nn::ReLU{}, nn::GlobalAvgPool{}, nn::Dense{2, 3}}, {2, 8, 8}, 3}; }
Architecture student_arch() { return nn::build_wrn({.dims = 1, .depth = 10, .widen = 1, .base_width = 4}, {2, kLen}, 3); }

struct Teachers {
  TeacherBundle ts{Network::create(tiny_ts(), 11), Modality::time_series};
  TeacherBundle pi{Network::create(tiny_pi(), 12), Modality::persistence_image};
  Batch batch = small_set().batch(std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7});
};

DistillConfig mixed_cfg(double tau, double eta, double proportion, bool shared, double a1, double a2) {
  DistillConfig c;
  c.tau = tau;
  c.eta = eta;
  c.student_mixup = augment::MixupConfig{.alpha = a1, .proportion = proportion};
  if (!shared) c.teacher_mixup = distill::TeacherAlphas{a1, a2};
  c.shared_batch = shared;
  return c;
}

distill::TrainOptions options(int epochs) {
  distill::TrainOptions o;
  o.epochs = epochs;
  o.batch_size = 8;
  o.schedule = nn::LRSchedule::time_series(epochs);
  o.seed = 1;
  return o;
}

// ---------------------------------------------------------------------------
// 1

std::vector<double> random_series(std::mt19937_64& rng, bool with_ties) {
  std::uniform_int_distribution<int> len(1, 64);
  std::vector<double> s(static_cast<std::size_t>(len(rng)));
  if (with_ties) {
    std::uniform_int_distribution<int> level(-3, 3);
    for (double& v : s) v = level(rng) * 0.5;
  } else {
    std::normal_distribution<double> g(0.0, 1.0);
    for (double& v : s) v = g(rng);
  }
  return s;
}

Outcome persistence_oracle() {
  Outcome o;
  std::mt19937_64 rng(1000);
  const auto t0 = std::chrono::steady_clock::now();
  int mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto s = random_series(rng, trial % 2 == 0);
    if (tda::sublevel_persistence(s).canonical().points != tda::brute_force_persistence(s).canonical().points) ++mismatches;
  }
  const double secs = seconds_since(t0);
  o.require(mismatches == 0, fmt("%d of 1000 diagrams differ", mismatches));
  o.require(secs < kPersistenceBudgetSeconds, fmt("took %.2f s", secs));
  if (o.pass) o.detail = fmt("1000 signals identical in %.3f s", secs);
  return o;
}

// ---------------------------------------------------------------------------
// 2

double erf_mass(double lo, double hi, double c, double sigma) {
  return 0.5 * (std::erf((hi - c) / (sigma * std::sqrt(2.0))) - std::erf((lo - c) / (sigma * std::sqrt(2.0))));
}

Outcome pi_mass() {
  Outcome o;
  tda::PIConfig cfg;
  cfg.sigma = 0.3;
  cfg.birth_lo = -2.0;
  cfg.birth_hi = 2.0;
  cfg.resolution = 64;
  cfg.normalize = false;
  double worst = 0.0;
  for (const tda::PersistencePoint p : {tda::PersistencePoint{-0.4, 0.9, false}, tda::PersistencePoint{1.7, 2.3, false},
                                        tda::PersistencePoint{-2.5, -1.0, false}}) {
    const auto img = tda::diagram_to_image({{p}, 0}, cfg);
    const double expected = p.persistence() * erf_mass(cfg.birth_lo, cfg.birth_hi, p.birth, cfg.sigma) *
                            erf_mass(0.0, cfg.persistence_hi(), p.persistence(), cfg.sigma);
    worst = std::max(worst, std::abs(img.sum() - expected) / expected);
  }
  o.require(worst < kPIMassRelErr, fmt("rel err %.3g", worst));
  o.detail = fmt("max rel err %.3g at 64x64", worst);
  return o;
}

// ---------------------------------------------------------------------------
// 3

double ce_of(const Architecture& arch, const nn::Parameters& p, const Tensor& x, const std::vector<int>& y, nn::Mode mode) {
  const Network n{arch, p};
  return nn::cross_entropy(nn::forward(n, x, mode).logits, y).loss;
}

testing::GradCheckResult check_network(const Architecture& arch, const nn::Shape& batch_shape, std::uint64_t seed,
                                       nn::Mode mode = nn::Mode::train) {
  std::mt19937_64 rng(seed);
  Network net = Network::create(arch, seed);
  for (std::size_t i = 0; i < net.params.tensors.size(); ++i)
    if (!net.params.decay[i])
      for (double& v : net.params.tensors[i].storage()) v += 0.3 * std::normal_distribution<double>()(rng);
  if (mode == nn::Mode::eval)
    for (std::size_t b = 0; b < net.params.buffers.size(); b += 2) {
      net.params.buffers[b] = random_tensor(net.params.buffers[b].shape(), rng);
      for (double& v : net.params.buffers[b + 1].storage()) v = 0.5 + std::abs(v);
    }
  const Tensor x = random_tensor(batch_shape, rng);
  std::vector<int> y(batch_shape[0]);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(i % arch.classes);
  const auto r = nn::forward(static_cast<const Network&>(net), x, mode);
  const auto g = nn::backward(net, r.cache, nn::cross_entropy(r.logits, y).grad);
  return grad_check(net.params, g, [&](const nn::Parameters& p) { return ce_of(arch, p, x, y, mode); });
}

Outcome gradient_checks() {
  Outcome o;
  double worst = 0.0;
  std::size_t checked = 0;
  auto note = [&](const std::string& what, const testing::GradCheckResult& r) {
    worst = std::max(worst, r.max_rel_err);
    checked += r.checked;
    o.require(r.max_rel_err < kGradRelErr, what + fmt(" rel err %.3g", r.max_rel_err));
  };

  using namespace nn;
  note("dense", check_network({{Dense{6, 5}, ReLU{}, Dense{5, 3}}, {6}, 3}, {4, 6}, 10));
  note("conv1d", check_network({{Conv1D{2, 3, 3, 2, 1}, BatchNorm{3}, ReLU{}, Conv1D{3, 4, 2, 1, 0}, GlobalAvgPool{}, Dense{4, 3}}, {2, 11}, 3},
                               {4, 2, 11}, 11));
  note("conv2d", check_network({{Conv2D{2, 3, 3, 2, 1}, BatchNorm{3}, ReLU{}, Conv2D{3, 2, 2, 1, 0}, GlobalAvgPool{}, Dense{2, 3}}, {2, 7, 6}, 3},
                               {3, 2, 7, 6}, 12));
  ResidualBlock identity, projecting;
  identity.inner = {Conv1D{3, 3, 3, 1, 1}, BatchNorm{3}, ReLU{}, Conv1D{3, 3, 3, 1, 1}};
  projecting.inner = {Conv1D{3, 4, 3, 2, 1}, BatchNorm{4}};
  projecting.projection = true;
  note("residual", check_network({{Conv1D{1, 3, 3, 1, 1}, identity, ReLU{}, projecting, GlobalAvgPool{}, Dense{4, 2}}, {1, 10}, 2}, {3, 1, 10}, 13));
  note("batchnorm-eval", check_network({{Conv1D{1, 2, 3}, BatchNorm{2}, ReLU{}, GlobalAvgPool{}, Dense{2, 2}}, {1, 8}, 2}, {3, 1, 8}, 21,
                                       Mode::eval));
  note("wrn2d", check_network(build_wrn({.dims = 2, .depth = 10, .widen = 1, .base_width = 2, .stem_kernel = 2, .stem_stride = 2}, {1, 8, 8}, 3),
                              {3, 1, 8, 8}, 14));

  // Losses with respect to logits.
  std::mt19937_64 rng(9);
  const std::vector<int> y{0, 2, 1, 2};
  const Tensor s = random_tensor({4, 3}, rng, 2.0), t1 = random_tensor({4, 3}, rng, 2.0), t2 = random_tensor({4, 3}, rng, 2.0);
  auto loss = [&](const std::string& what, auto fn) {
    const auto lg = fn(s);
    note(what, logits_grad_check(s, lg.grad, [&](const Tensor& z) { return fn(z).loss; }));
  };
  loss("cross-entropy", [&](const Tensor& z) { return cross_entropy(z, y); });
  std::mt19937_64 mix_rng(10);
  const auto m = augment::mixup_batch(Tensor({4, 1}), y, {.alpha = 1.0}, mix_rng);
  loss("mixup-ce", [&](const Tensor& z) { return augment::mixup_ce_loss(z, m); });
  for (double T : {1.0, 4.0}) {
    loss("kd-kl", [&](const Tensor& z) { return distill::kd_kl_loss(t1, z, T); });
    loss("kd-total", [&](const Tensor& z) { return distill::kd_total_loss(z, y, t1, 0.7, T); });
    loss("kd-total-mixup", [&](const Tensor& z) { return distill::kd_total_loss(z, m, t1, 0.6, T); });
    loss("multi-teacher-kd", [&](const Tensor& z) { return distill::multi_teacher_kd_loss(t1, t2, z, 0.3, T); });
    loss("multi-teacher-total", [&](const Tensor& z) { return distill::multi_teacher_total_loss(z, y, t1, t2, 0.7, 0.3, T); });
  }

  // The mixed two-teacher step, shared and separate batches, through a student network.
  Teachers f;
  for (bool shared : {true, false}) {
    const auto cfg = mixed_cfg(0.6, 0.35, 0.75, shared, 0.4, shared ? 0.4 : 0.9);
    Network st = Network::create(tiny_ts(), 4);
    std::mt19937_64 r(24);
    const auto out = distill::mixed_multi_teacher_step(f.batch, f.ts, f.pi, st, cfg, r);
    note(shared ? "mixed-step-shared" : "mixed-step-separate", grad_check(st.params, out.grads, [&](const nn::Parameters& p) {
           Network probe{tiny_ts(), p};
           std::mt19937_64 rr(24);
           return distill::mixed_multi_teacher_step(f.batch, f.ts, f.pi, probe, cfg, rr).loss;
         }));
  }
  if (o.pass) o.detail = fmt("%zu partials, max rel err %.3g", checked, worst);
  return o;
}

// ---------------------------------------------------------------------------
// 4

Outcome loss_identities() {
  Outcome o;
  std::mt19937_64 rng(3);
  int nonzero = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor z = random_tensor({4, 5}, rng, 3.0);
    if (distill::kd_kl_loss(z, z, 4.0).loss != 0.0) ++nonzero;
  }
  o.require(nonzero == 0, fmt("%d self-distillation losses nonzero", nonzero));

  const double kl = distill::kd_kl_loss(Tensor({1, 2}, {std::log(3.0), 0.0}), Tensor({1, 2}, {0.0, 0.0}), 1.0).loss;
  const double hand = 0.75 * std::log(1.5) + 0.25 * std::log(0.5);
  o.require(std::abs(kl - hand) < kHandKL, fmt("hand case %.9f vs %.9f", kl, hand));
  o.require(std::round(kl * 1e5) / 1e5 == 0.13081, fmt("hand case %.9f does not round to 0.13081", kl));

  const std::vector<int> y{0, 2, 1, 2};
  const Tensor s = random_tensor({4, 3}, rng), t = random_tensor({4, 3}, rng);
  const auto ce = nn::cross_entropy(s, y);
  const auto kd = distill::kd_kl_loss(t, s, 4.0);
  const auto at0 = distill::kd_total_loss(s, y, t, 0.0, 4.0), at1 = distill::kd_total_loss(s, y, t, 1.0, 4.0);
  o.require(at0.loss == ce.loss && at0.grad == ce.grad, "tau=0 is not exactly cross-entropy");
  o.require(at1.loss == kd.loss && at1.grad == kd.grad, "tau=1 is not exactly the KD term");
  if (o.pass) o.detail = fmt("KL hand case %.9f", kl);
  return o;
}

// ---------------------------------------------------------------------------
// 5

Outcome mixup_identities() {
  Outcome o;
  std::mt19937_64 rng(5);
  const Tensor x = random_tensor({6, 2, 5}, rng);
  auto m = augment::mixup_batch(x, std::vector<int>{0, 1, 2, 0, 1, 2}, {.alpha = 1.0}, rng);
  for (auto& p : m.pairs) p.lambda = 1.0;
  o.require(augment::apply_mix(x, m) == x, "lambda=1 is not the identity");

  const auto& b = small_set().batch(std::vector<std::size_t>{0, 5, 10, 15, 20, 25, 30, 35});
  Network a = Network::create(tiny_ts(), 7), c = a;
  std::mt19937_64 ra(8), rc(8);
  const auto with = distill::supervised_step(Modality::time_series, augment::MixupConfig{.alpha = 0.1, .proportion = 0.0})(a, b, ra);
  const auto without = distill::supervised_step(Modality::time_series, std::nullopt)(c, b, rc);
  o.require(with.loss == without.loss && with.grads == without.grads, "proportion 0 step differs from the plain step");

  std::mt19937_64 beta_rng(2);
  double sum = 0.0;
  for (int k = 0; k < 100000; ++k) sum += augment::sample_lambda(0.1, beta_rng);
  const double mean = sum / 100000.0;
  o.require(std::abs(mean - 0.5) <= kBetaMean, fmt("Beta(0.1,0.1) mean %.4f", mean));

  std::vector<double> xs(100000);
  for (double& v : xs) v = augment::sample_lambda(1.0, beta_rng);
  std::sort(xs.begin(), xs.end());
  double ks = 0.0;
  const double n = static_cast<double>(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i)
    ks = std::max({ks, std::abs((static_cast<double>(i) + 1.0) / n - xs[i]), std::abs(static_cast<double>(i) / n - xs[i])});
  o.require(ks < kUniformKS, fmt("Beta(1,1) KS %.4f", ks));
  if (o.pass) o.detail = fmt("Beta(0.1,0.1) mean %.4f, Beta(1,1) KS %.4f", mean, ks);
  return o;
}

// ---------------------------------------------------------------------------
// 6

Outcome mixed_degenerations() {
  Outcome o;
  Teachers f;
  // eta = 1: single-teacher KD on the first mixed batch.
  for (bool shared : {true, false}) {
    const auto cfg = mixed_cfg(0.7, 1.0, 1.0, shared, 0.4, shared ? 0.4 : 0.2);
    Network s = Network::create(tiny_ts(), 3), s2 = s;
    std::mt19937_64 rng(21), ref_rng(21);
    const auto out = distill::mixed_multi_teacher_step(f.batch, f.ts, f.pi, s, cfg, rng);
    const auto m1 = augment::mixup_batch(f.batch.series, f.batch.labels, {.alpha = 0.4}, ref_rng);
    auto fr = nn::forward(s2, m1.inputs, nn::Mode::train);
    const auto ref = distill::kd_total_loss(fr.logits, m1, nn::predict(f.ts.net, m1.inputs), 0.7, 4.0);
    o.require(out.loss == ref.loss && out.grads == nn::backward(s2, fr.cache, ref.grad),
              std::string("eta=1 ") + (shared ? "shared" : "separate") + " differs from single-teacher KD");
  }
  // tau = 0: eta-weighted mixup cross-entropy over the two batches.
  {
    const auto cfg = mixed_cfg(0.0, 0.3, 1.0, false, 0.4, 0.2);
    Network s = Network::create(tiny_ts(), 3), s2 = s;
    std::mt19937_64 rng(22), ref_rng(22);
    const auto out = distill::mixed_multi_teacher_step(f.batch, f.ts, f.pi, s, cfg, rng);
    const auto m1 = augment::mixup_batch(f.batch.series, f.batch.labels, {.alpha = 0.4}, ref_rng);
    const auto m2 = augment::mixup_batch(f.batch.series, f.batch.labels, {.alpha = 0.2}, ref_rng);
    auto f1 = nn::forward(s2, m1.inputs, nn::Mode::train);
    auto f2 = nn::forward(s2, m2.inputs, nn::Mode::train);
    const auto ce1 = augment::mixup_ce_loss(f1.logits, m1), ce2 = augment::mixup_ce_loss(f2.logits, m2);
    o.require(out.loss == 0.3 * ce1.loss + 0.7 * ce2.loss, "tau=0 loss differs");
    const auto g1 = nn::backward(s2, f1.cache, ce1.grad), g2 = nn::backward(s2, f2.cache, ce2.grad);
    double worst = 0.0;
    for (std::size_t t = 0; t < g1.size(); ++t)
      for (std::size_t i = 0; i < g1[t].size(); ++i)
        worst = std::max(worst, std::abs(out.grads[t][i] - (0.3 * g1[t][i] + 0.7 * g2[t][i])) / std::max(1.0, std::abs(out.grads[t][i])));
    o.require(worst < kMixedGradRel, fmt("tau=0 gradient deviation %.3g", worst));
  }
  // proportion = 0 with a shared batch: the clean two-teacher objective, no draws.
  {
    const auto cfg = mixed_cfg(0.7, 0.7, 0.0, true, 0.4, 0.4);
    Network s = Network::create(tiny_ts(), 3), s2 = s;
    std::mt19937_64 rng(23), untouched(23);
    const auto out = distill::mixed_multi_teacher_step(f.batch, f.ts, f.pi, s, cfg, rng);
    const auto ref = distill::two_teacher_step(f.ts, f.pi, cfg)(s2, f.batch, untouched);
    o.require(out.loss == ref.loss && out.grads == ref.grads, "proportion 0 differs from the two-teacher step");
    o.require(rng() == untouched(), "proportion 0 consumed random numbers");
  }
  if (o.pass) o.detail = "eta=1, tau=0 and proportion=0 reduce to the simpler objectives";
  return o;
}

// ---------------------------------------------------------------------------
// 7

Outcome annealing_contract() {
  Outcome o;
  Teachers f;
  DistillConfig scratch_cfg;
  scratch_cfg.strategy = distill::Strategy::scratch;
  const auto scratch = distill::distill_student(scratch_cfg, {}, student_arch(), 9, small_set(), options(2));
  const auto ann = distill::distill_student(DistillConfig{}, {&f.ts, &f.pi}, student_arch(), 9, small_set(), options(2), &scratch.checkpoint);
  o.require(ann.record.init_digest == scratch.checkpoint.params.digest(), "step-0 digest differs from the scratch checkpoint");
  o.require(ann.record.init == "scratch:" + hex_digest(scratch.checkpoint.params.digest()), "run record does not name the scratch init");
  if (o.pass) o.detail = "step-0 digest " + hex_digest(ann.record.init_digest);
  return o;
}

// ---------------------------------------------------------------------------
// 8

Outcome lr_schedules() {
  Outcome o;
  const auto ts = nn::LRSchedule::time_series(200), pi = nn::LRSchedule::persistence_image(200);
  o.require(nn::lr_at(ts, 0) == 0.05, "ts epoch 0");
  o.require(nn::lr_at(ts, 10) == 0.01, "ts epoch 10");
  o.require(nn::lr_at(pi, 0) == 0.1, "pi epoch 0");
  o.require(nn::lr_at(pi, 10) == 0.05, "pi epoch 10");
  o.require(nn::lr_at(pi, 50) == 0.01, "pi epoch 50");
  if (o.pass) o.detail = "ts 0.05/0.01, pi 0.1/0.05/0.01";
  return o;
}

// ---------------------------------------------------------------------------
// 9

Outcome flop_counter() {
  Outcome o;
  const auto dense = nn::count_flops({nn::Dense{4, 3}}, {4});
  const auto conv = nn::count_flops({nn::Conv1D{1, 2, 3, 1, 0}}, {1, 10});
  o.require(dense == 24, fmt("dense %llu", static_cast<unsigned long long>(dense)));
  o.require(conv == 96, fmt("conv1d %llu", static_cast<unsigned long long>(conv)));
  o.detail = fmt("dense %llu, conv1d %llu", static_cast<unsigned long long>(dense), static_cast<unsigned long long>(conv));
  return o;
}

// ---------------------------------------------------------------------------
// 10

Outcome end_to_end() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  const harness::ExperimentConfig cfg;
  const auto data = harness::prepare_data(cfg, true);
  DistillConfig ann = cfg.distill;
  ann.strategy = distill::Strategy::annealing;
  DistillConfig ann_mix = ann;
  ann_mix.student_mixup = augment::MixupConfig{};

  std::vector<double> scratch_acc, ann_acc, mix_acc;
  for (auto seed : cfg.seeds) {
    harness::SeedRunner runner(cfg, data, seed);
    scratch_acc.push_back(runner.test_accuracy(runner.scratch().checkpoint, "student"));
    ann_acc.push_back(runner.test_accuracy(runner.student(ann).checkpoint, "student"));
    mix_acc.push_back(runner.test_accuracy(runner.student(ann_mix).checkpoint, "student"));
    std::printf("      seed %llu: scratch %.2f  annealing %.2f  annealing+mixup %.2f  (%.0f s)\n", static_cast<unsigned long long>(seed),
                scratch_acc.back(), ann_acc.back(), mix_acc.back(), seconds_since(t0));
    std::fflush(stdout);
  }
  const double secs = seconds_since(t0);
  const auto s = metrics::mean_std(scratch_acc), a = metrics::mean_std(ann_acc), m = metrics::mean_std(mix_acc);
  for (double v : scratch_acc) o.require(v >= kEndToEndScratchMin, fmt("scratch seed accuracy %.2f < 90", v));
  o.require(a.mean >= s.mean - kTrendSlack, fmt("annealing mean %.2f < scratch mean %.2f - 0.5", a.mean, s.mean));
  o.require(m.mean >= a.mean - kTrendSlack, fmt("annealing+mixup mean %.2f < annealing mean %.2f - 0.5", m.mean, a.mean));
  o.require(secs < kEndToEndBudgetSeconds, fmt("took %.0f s", secs));
  const std::string summary =
      fmt("scratch %.2f, annealing %.2f, annealing+mixup %.2f over %zu seeds in %.0f s", s.mean, a.mean, m.mean, cfg.seeds.size(), secs);
  o.detail = o.pass ? summary : o.detail + " (" + summary + ")";
  return o;
}

// ---------------------------------------------------------------------------
// 11

double v_oracle(const std::vector<int>& y, const std::vector<int>& k) {
  const int C = *std::max_element(y.begin(), y.end()) + 1, K = *std::max_element(k.begin(), k.end()) + 1;
  std::vector<std::vector<double>> n(C, std::vector<double>(K, 0.0));
  for (std::size_t i = 0; i < y.size(); ++i) n[y[i]][k[i]] += 1.0;
  const double N = static_cast<double>(y.size());
  std::vector<double> nc(C, 0.0), nk(K, 0.0);
  for (int c = 0; c < C; ++c)
    for (int j = 0; j < K; ++j) nc[c] += n[c][j], nk[j] += n[c][j];
  double hc = 0, hk = 0, hck = 0, hkc = 0;
  for (int c = 0; c < C; ++c)
    if (nc[c] > 0) hc -= nc[c] / N * std::log(nc[c] / N);
  for (int j = 0; j < K; ++j)
    if (nk[j] > 0) hk -= nk[j] / N * std::log(nk[j] / N);
  for (int c = 0; c < C; ++c)
    for (int j = 0; j < K; ++j)
      if (n[c][j] > 0) {
        hck -= n[c][j] / N * std::log(n[c][j] / nk[j]);
        hkc -= n[c][j] / N * std::log(n[c][j] / nc[c]);
      }
  const double h = hc > 0 ? 1 - hck / hc : 1, comp = hk > 0 ? 1 - hkc / hk : 1;
  return h + comp > 0 ? 2 * h * comp / (h + comp) : 0;
}

Outcome v_measure() {
  Outcome o;
  const std::vector<int> y{0, 0, 1, 1, 2, 2};
  o.require(metrics::v_measure(y, std::vector<int>{5, 5, 3, 3, 9, 9}) == 1.0, "perfect clustering is not 1");
  o.require(metrics::v_measure(std::vector<int>{0, 0, 1, 1}, std::vector<int>{0, 0, 0, 0}) == 0.0, "single cluster is not 0");
  const std::vector<int> yc{0, 0, 1, 1}, kc{0, 1, 1, 1};
  const double v = metrics::v_measure(yc, kc), ref = v_oracle(yc, kc);
  o.require(std::abs(v - ref) < kVOracle, fmt("%.9f vs oracle %.9f", v, ref));
  if (o.pass) o.detail = fmt("small case %.9f", v);
  return o;
}

// ---------------------------------------------------------------------------
// 12

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

Outcome round_trips() {
  Outcome o;
  const auto dir = fs::temp_directory_path() / "topokd_acceptance";
  fs::create_directories(dir);

  // Persistence-image cache.
  std::mt19937_64 rng(12);
  std::vector<tda::SignalWindow> windows(6);
  std::normal_distribution<double> g(0.0, 0.5);
  for (auto& w : windows) {
    w.values.assign(2, std::vector<double>(48));
    for (auto& c : w.values)
      for (double& v : c) v = g(rng);
  }
  tda::PIConfig pcfg;
  pcfg.resolution = 20;
  auto stacks = tda::extract_pi_batch(windows, pcfg);
  tda::round_to_storage(stacks);
  tda::save_pi_cache(dir / "a.tdpi", stacks, pcfg, 77);
  const auto loaded = tda::load_pi_cache(dir / "a.tdpi");
  tda::save_pi_cache(dir / "b.tdpi", loaded, pcfg, 77);
  o.require(loaded == stacks, "PI cache values changed on reload");
  o.require(slurp(dir / "a.tdpi") == slurp(dir / "b.tdpi"), "PI cache bytes changed on resave");

  // Checkpoint after a few real steps.
  const auto arch = nn::build_wrn({.dims = 1, .depth = 10, .widen = 1, .base_width = 4}, {2, 24}, 3);
  Network net = Network::create(arch, 5);
  nn::OptimizerState opt;
  const Tensor x = random_tensor({6, 2, 24}, rng);
  const std::vector<int> y{0, 1, 2, 0, 1, 2};
  for (int step = 0; step < 3; ++step) {
    auto r = nn::forward(net, x, nn::Mode::train);
    nn::sgd_step(net.params, nn::backward(net, r.cache, nn::cross_entropy(r.logits, y).grad), opt, 0.05);
  }
  const auto ck = nn::make_checkpoint(net.params, opt, 3, rng, 0xabcdef);
  nn::save_checkpoint(dir / "a.tdck", ck);
  const auto back = nn::load_checkpoint(dir / "a.tdck", arch);
  nn::save_checkpoint(dir / "b.tdck", back);
  o.require(back == ck, "checkpoint changed on reload");
  o.require(slurp(dir / "a.tdck") == slurp(dir / "b.tdck"), "checkpoint bytes changed on resave");

  // Parametric scan endpoints.
  const auto other = Network::create(arch, 6);
  const Tensor xte = random_tensor({9, 2, 24}, rng);
  const std::vector<int> yte{0, 1, 2, 0, 1, 2, 0, 1, 2};
  const Network a{arch, back.params};
  const auto rows = metrics::parametric_scan(arch, a.params, other.params, x, y, xte, yte, metrics::kappa_grid());
  const auto at = [&](double k) { return *std::find_if(rows.begin(), rows.end(), [k](const auto& r) { return r.kappa == k; }); };
  o.require(at(0.0).train_acc == metrics::evaluate(a, x, y) && at(0.0).test_acc == metrics::evaluate(a, xte, yte), "kappa=0 differs");
  o.require(at(1.0).train_acc == metrics::evaluate(other, x, y) && at(1.0).test_acc == metrics::evaluate(other, xte, yte), "kappa=1 differs");
  fs::remove_all(dir);
  if (o.pass) o.detail = "PI cache, checkpoint and scan endpoints exact";
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"persistence matches the brute-force oracle", persistence_oracle},
      {"persistence-image mass", pi_mass},
      {"gradient checks", gradient_checks},
      {"loss identities", loss_identities},
      {"mixup identities", mixup_identities},
      {"mixed two-teacher degenerations", mixed_degenerations},
      {"annealing starts from the scratch weights", annealing_contract},
      {"learning-rate schedules", lr_schedules},
      {"FLOP counter", flop_counter},
      {"end-to-end desk scale", end_to_end},
      {"V-measure", v_measure},
      {"round trips", round_trips},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.contains(id)) continue;
    Outcome r;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      r = criteria[i].second();
    } catch (const std::exception& e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    failed += !r.pass;
    std::printf("%s %2d %s: %s [%.2f s]\n", r.pass ? "PASS" : "FAIL", id, criteria[i].first, r.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
