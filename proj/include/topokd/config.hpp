#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "topokd/dataset.hpp"
#include "topokd/digest.hpp"
#include "topokd/error.hpp"
#include "topokd/models.hpp"
#include "topokd/persistence_image.hpp"
#include "topokd/synthetic.hpp"
#include "topokd/training.hpp"

namespace topokd::harness {

/// Everything one experiment needs. Text form: one key=value per line,
/// numbers printed with 17 significant digits so parsing restores them exactly.
struct ExperimentConfig {
  std::string dataset = "synthetic";  // or csv:<manifest path>
  data::SyntheticSpec synthetic = [] {
    auto s = data::SyntheticSpec::desk_default();
    s.seed = 2024;
    return s;
  }();
  data::SplitSpec split = [] {
    data::SplitSpec s;
    s.seed = 1;
    return s;
  }();
  bool standardize = false;

  tda::PIConfig pi{.sigma = 0.1, .birth_lo = -3.0, .birth_hi = 3.0, .resolution = 32};

  nn::NetConfig student{.dims = 1, .depth = 10, .widen = 1, .base_width = 8};
  nn::NetConfig teacher_ts{.dims = 1, .depth = 10, .widen = 2, .base_width = 8};
  nn::NetConfig teacher_pi{.dims = 2, .depth = 10, .widen = 1, .base_width = 8, .stem_kernel = 4, .stem_stride = 4};

  distill::DistillConfig distill;

  int epochs = 30;
  std::size_t batch_size = 32;
  double lr_ts = 0.05;
  double lr_pi = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  bool teacher_early_stop = true;
  double val_fraction = 0.1;

  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::string out = "out";
  unsigned workers = 1;

  void validate() const {
    if (dataset != "synthetic" && dataset.rfind("csv:", 0) != 0)
      throw InvalidArgument("config: dataset must be 'synthetic' or 'csv:<manifest>'");
    if (dataset == "synthetic") synthetic.validate();
    if (split.mode == data::SplitSpec::Mode::random_stratified && !(split.test_fraction > 0.0 && split.test_fraction < 1.0))
      throw InvalidArgument("config: split.test_fraction must lie in (0, 1)");
    pi.validate();
    if (student.dims != 1) throw InvalidArgument("config: net.student.dims must be 1 (the student reads time series)");
    if (teacher_ts.dims != 1) throw InvalidArgument("config: net.teacher_ts.dims must be 1");
    if (teacher_pi.dims != 2) throw InvalidArgument("config: net.teacher_pi.dims must be 2");
    distill.validate();
    if (epochs < 1) throw InvalidArgument("config: train.epochs must be >= 1");
    if (batch_size < 2) throw InvalidArgument("config: train.batch_size must be >= 2");
    if (!(lr_ts > 0.0) || !(lr_pi > 0.0)) throw InvalidArgument("config: learning rates must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidArgument("config: train.momentum must lie in [0, 1)");
    if (!(weight_decay >= 0.0)) throw InvalidArgument("config: train.weight_decay must be >= 0");
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw InvalidArgument("config: train.val_fraction must lie in (0, 1)");
    if (seeds.empty()) throw InvalidArgument("config: seeds lists no seeds");
    if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) throw InvalidArgument("config: seeds repeat");
    if (out.empty()) throw InvalidArgument("config: out is empty");
    if (workers < 1) throw InvalidArgument("config: workers must be >= 1");
  }

  std::string to_text() const;
  static ExperimentConfig parse(std::istream& is, const std::string& origin = "<config>");
  static ExperimentConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  /// Digest of every setting that affects results (not `out` or `workers`).
  std::uint64_t digest() const {
    ExperimentConfig c = *this;
    c.out = "-";
    c.workers = 1;
    return Digest{}.text("ExperimentConfig/1").text(c.to_text()).get();
  }

  nn::LRSchedule schedule_ts() const { return nn::LRSchedule::time_series(epochs, lr_ts); }
  nn::LRSchedule schedule_pi() const { return nn::LRSchedule::persistence_image(epochs, lr_pi); }

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

namespace detail {

inline std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline const char* boolean(bool b) { return b ? "true" : "false"; }

inline std::string class_text(const data::ClassDef& c) {
  return std::string(data::waveform_name(c.family)) + ":" + num(c.freq_lo) + ":" + num(c.freq_hi) + ":" + num(c.amp_lo) + ":" +
         num(c.amp_hi) + ":" + num(c.noise_lo) + ":" + num(c.noise_hi);
}

inline void net_text(std::ostream& os, const std::string& name, const nn::NetConfig& n) {
  os << "net." << name << ".dims=" << n.dims << "\n";
  os << "net." << name << ".depth=" << n.depth << "\n";
  os << "net." << name << ".widen=" << n.widen << "\n";
  os << "net." << name << ".base_width=" << n.base_width << "\n";
  os << "net." << name << ".stem_kernel=" << n.stem_kernel << "\n";
  os << "net." << name << ".stem_stride=" << n.stem_stride << "\n";
}

/// Consumes keys from a parsed key=value map with typed accessors.
class Fields {
 public:
  Fields(std::map<std::string, std::string> kv, std::string origin) : kv_(std::move(kv)), origin_(std::move(origin)) {}

  bool take(const std::string& key, std::string& value) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return false;
    value = it->second;
    kv_.erase(it);
    return true;
  }

  template <class T>
  void number(const std::string& key, T& out) {
    std::string v;
    if (!take(key, v)) return;
    if (!data::detail::parse_number(std::string_view(v), out)) fail(key, "'" + v + "' is not a valid number");
  }

  void flag(const std::string& key, bool& out) {
    std::string v;
    if (!take(key, v)) return;
    if (v == "true" || v == "1") out = true;
    else if (v == "false" || v == "0") out = false;
    else fail(key, "'" + v + "' is not true or false");
  }

  [[noreturn]] void fail(const std::string& key, const std::string& why) const { throw FormatError(origin_ + ": " + key + ": " + why); }

  void finish() const {
    if (!kv_.empty()) fail(kv_.begin()->first, "unknown key");
  }

  std::map<std::string, std::string>& rest() { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
  std::string origin_;
};

inline double parse_double(Fields& f, const std::string& key, const std::string& s) {
  double v = 0.0;
  if (!data::detail::parse_number(std::string_view(s), v)) f.fail(key, "'" + s + "' is not a valid number");
  return v;
}

inline data::ClassDef parse_class(Fields& f, const std::string& key, const std::string& text) {
  const auto parts = data::detail::split_list(text, ':');
  if (parts.size() != 7) f.fail(key, "expected family:freq_lo:freq_hi:amp_lo:amp_hi:noise_lo:noise_hi");
  data::ClassDef c;
  bool known = false;
  for (auto w : {data::Waveform::sine, data::Waveform::am_sine, data::Waveform::random_walk, data::Waveform::spike_train})
    if (parts[0] == data::waveform_name(w)) c.family = w, known = true;
  if (!known) f.fail(key, "unknown waveform '" + parts[0] + "'");
  double* slots[] = {&c.freq_lo, &c.freq_hi, &c.amp_lo, &c.amp_hi, &c.noise_lo, &c.noise_hi};
  for (std::size_t i = 0; i < 6; ++i) *slots[i] = parse_double(f, key, parts[i + 1]);
  return c;
}

inline void parse_net(Fields& f, const std::string& name, nn::NetConfig& n) {
  const std::string p = "net." + name + ".";
  f.number(p + "dims", n.dims);
  f.number(p + "depth", n.depth);
  f.number(p + "widen", n.widen);
  f.number(p + "base_width", n.base_width);
  f.number(p + "stem_kernel", n.stem_kernel);
  f.number(p + "stem_stride", n.stem_stride);
}

}  // namespace detail

inline std::string ExperimentConfig::to_text() const {
  using detail::boolean;
  using detail::num;
  std::ostringstream os;
  os << "dataset=" << dataset << "\n";
  os << "synthetic.seed=" << synthetic.seed << "\n";
  os << "synthetic.channels=" << synthetic.channels << "\n";
  os << "synthetic.length=" << synthetic.length << "\n";
  os << "synthetic.samples_per_class=" << synthetic.samples_per_class << "\n";
  for (std::size_t i = 0; i < synthetic.classes.size(); ++i) os << "synthetic.class." << i << "=" << detail::class_text(synthetic.classes[i]) << "\n";
  os << "split.mode=" << (split.mode == data::SplitSpec::Mode::random_stratified ? "stratified" : "subject") << "\n";
  os << "split.test_fraction=" << num(split.test_fraction) << "\n";
  os << "split.test_subjects=";
  for (std::size_t i = 0; i < split.test_subjects.size(); ++i) os << (i ? "," : "") << split.test_subjects[i];
  os << "\n";
  os << "split.seed=" << split.seed << "\n";
  os << "standardize=" << boolean(standardize) << "\n";
  os << "pi.sigma=" << num(pi.sigma) << "\n";
  os << "pi.birth_lo=" << num(pi.birth_lo) << "\n";
  os << "pi.birth_hi=" << num(pi.birth_hi) << "\n";
  os << "pi.resolution=" << pi.resolution << "\n";
  os << "pi.include_essential=" << boolean(pi.include_essential) << "\n";
  os << "pi.normalize=" << boolean(pi.normalize) << "\n";
  detail::net_text(os, "student", student);
  detail::net_text(os, "teacher_ts", teacher_ts);
  detail::net_text(os, "teacher_pi", teacher_pi);
  os << "distill.strategy=" << distill::strategy_name(distill.strategy) << "\n";
  os << "distill.tau=" << num(distill.tau) << "\n";
  os << "distill.temperature=" << num(distill.temperature) << "\n";
  os << "distill.eta=" << num(distill.eta) << "\n";
  os << "distill.student_mixup=";
  if (distill.student_mixup) os << num(distill.student_mixup->alpha) << ":" << num(distill.student_mixup->proportion);
  else os << "none";
  os << "\n";
  os << "distill.teacher_trained_with_mixup=" << boolean(distill.teacher_trained_with_mixup) << "\n";
  os << "distill.teacher_alpha=" << num(distill.teacher_alpha) << "\n";
  os << "distill.teacher_mixup=";
  if (distill.teacher_mixup) os << num(distill.teacher_mixup->alpha1) << ":" << num(distill.teacher_mixup->alpha2);
  else os << "none";
  os << "\n";
  os << "distill.shared_batch=" << boolean(distill.shared_batch) << "\n";
  os << "distill.pi_mix=" << (distill.pi_mix == distill::PIMixMode::mix_images ? "mix_images" : "recompute") << "\n";
  os << "train.epochs=" << epochs << "\n";
  os << "train.batch_size=" << batch_size << "\n";
  os << "train.lr_ts=" << num(lr_ts) << "\n";
  os << "train.lr_pi=" << num(lr_pi) << "\n";
  os << "train.momentum=" << num(momentum) << "\n";
  os << "train.weight_decay=" << num(weight_decay) << "\n";
  os << "train.teacher_early_stop=" << boolean(teacher_early_stop) << "\n";
  os << "train.val_fraction=" << num(val_fraction) << "\n";
  os << "seeds=";
  for (std::size_t i = 0; i < seeds.size(); ++i) os << (i ? "," : "") << seeds[i];
  os << "\n";
  os << "out=" << out << "\n";
  os << "workers=" << workers << "\n";
  return os.str();
}

/// Keys absent from the text keep their defaults; unknown keys are errors.
inline ExperimentConfig ExperimentConfig::parse(std::istream& is, const std::string& origin) {
  detail::Fields f(data::read_key_values(is, origin), origin);
  ExperimentConfig c;
  std::string v;
  f.take("dataset", c.dataset);
  f.number("synthetic.seed", c.synthetic.seed);
  f.number("synthetic.channels", c.synthetic.channels);
  f.number("synthetic.length", c.synthetic.length);
  f.number("synthetic.samples_per_class", c.synthetic.samples_per_class);
  {
    std::map<std::size_t, data::ClassDef> classes;
    for (auto it = f.rest().begin(); it != f.rest().end();) {
      if (it->first.rfind("synthetic.class.", 0) != 0) {
        ++it;
        continue;
      }
      std::size_t idx = 0;
      const std::string key = it->first;
      if (!data::detail::parse_number(std::string_view(key).substr(16), idx)) f.fail(key, "class index must be an integer");
      classes[idx] = detail::parse_class(f, key, it->second);
      it = f.rest().erase(it);
    }
    if (!classes.empty()) {
      c.synthetic.classes.clear();
      for (const auto& [idx, def] : classes) {
        if (idx != c.synthetic.classes.size()) f.fail("synthetic.class." + std::to_string(idx), "class indices must run 0, 1, 2, ...");
        c.synthetic.classes.push_back(def);
      }
    }
  }
  if (f.take("split.mode", v)) {
    if (v == "stratified") c.split.mode = data::SplitSpec::Mode::random_stratified;
    else if (v == "subject") c.split.mode = data::SplitSpec::Mode::leave_one_subject_out;
    else f.fail("split.mode", "expected stratified or subject");
  }
  f.number("split.test_fraction", c.split.test_fraction);
  if (f.take("split.test_subjects", v)) {
    c.split.test_subjects.clear();
    for (const auto& s : data::detail::split_list(v)) {
      int id = 0;
      if (!data::detail::parse_number(std::string_view(s), id)) f.fail("split.test_subjects", "bad subject id '" + s + "'");
      c.split.test_subjects.push_back(id);
    }
  }
  f.number("split.seed", c.split.seed);
  f.flag("standardize", c.standardize);
  f.number("pi.sigma", c.pi.sigma);
  f.number("pi.birth_lo", c.pi.birth_lo);
  f.number("pi.birth_hi", c.pi.birth_hi);
  f.number("pi.resolution", c.pi.resolution);
  f.flag("pi.include_essential", c.pi.include_essential);
  f.flag("pi.normalize", c.pi.normalize);
  detail::parse_net(f, "student", c.student);
  detail::parse_net(f, "teacher_ts", c.teacher_ts);
  detail::parse_net(f, "teacher_pi", c.teacher_pi);
  if (f.take("distill.strategy", v)) {
    try {
      c.distill.strategy = distill::parse_strategy(v);
    } catch (const InvalidArgument& e) {
      f.fail("distill.strategy", e.what());
    }
  }
  f.number("distill.tau", c.distill.tau);
  f.number("distill.temperature", c.distill.temperature);
  f.number("distill.eta", c.distill.eta);
  auto pair = [&](const std::string& key, const std::string& text) {
    const auto parts = data::detail::split_list(text, ':');
    if (parts.size() != 2) f.fail(key, "expected none or <a>:<b>");
    return std::pair{detail::parse_double(f, key, parts[0]), detail::parse_double(f, key, parts[1])};
  };
  if (f.take("distill.student_mixup", v)) {
    if (v == "none") c.distill.student_mixup.reset();
    else {
      const auto [alpha, proportion] = pair("distill.student_mixup", v);
      c.distill.student_mixup = augment::MixupConfig{.alpha = alpha, .proportion = proportion};
    }
  }
  f.flag("distill.teacher_trained_with_mixup", c.distill.teacher_trained_with_mixup);
  f.number("distill.teacher_alpha", c.distill.teacher_alpha);
  if (f.take("distill.teacher_mixup", v)) {
    if (v == "none") c.distill.teacher_mixup.reset();
    else {
      const auto [a1, a2] = pair("distill.teacher_mixup", v);
      c.distill.teacher_mixup = distill::TeacherAlphas{a1, a2};
    }
  }
  f.flag("distill.shared_batch", c.distill.shared_batch);
  if (f.take("distill.pi_mix", v)) {
    if (v == "mix_images") c.distill.pi_mix = distill::PIMixMode::mix_images;
    else if (v == "recompute") c.distill.pi_mix = distill::PIMixMode::recompute;
    else f.fail("distill.pi_mix", "expected mix_images or recompute");
  }
  f.number("train.epochs", c.epochs);
  f.number("train.batch_size", c.batch_size);
  f.number("train.lr_ts", c.lr_ts);
  f.number("train.lr_pi", c.lr_pi);
  f.number("train.momentum", c.momentum);
  f.number("train.weight_decay", c.weight_decay);
  f.flag("train.teacher_early_stop", c.teacher_early_stop);
  f.number("train.val_fraction", c.val_fraction);
  if (f.take("seeds", v)) {
    c.seeds.clear();
    for (const auto& s : data::detail::split_list(v)) {
      std::uint64_t seed = 0;
      if (!data::detail::parse_number(std::string_view(s), seed)) f.fail("seeds", "bad seed '" + s + "'");
      c.seeds.push_back(seed);
    }
  }
  f.take("out", c.out);
  f.number("workers", c.workers);
  f.finish();
  return c;
}

inline ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open config " + path.string());
  return parse(is, path.string());
}

inline void ExperimentConfig::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  os << to_text();
  if (!os) throw FormatError("cannot write config " + path.string());
}

}  // namespace topokd::harness
