#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "topokd/dataset.hpp"

namespace topokd::data {

enum class Waveform { sine, am_sine, random_walk, spike_train };

inline const char* waveform_name(Waveform w) {
  switch (w) {
    case Waveform::sine: return "sine";
    case Waveform::am_sine: return "am_sine";
    case Waveform::random_walk: return "random_walk";
    case Waveform::spike_train: return "spike_train";
  }
  return "?";
}

/// Parameter ranges of one class; each sample draws uniformly inside them.
/// Frequencies are in cycles (or spikes) per window.
struct ClassDef {
  Waveform family = Waveform::sine;
  double freq_lo = 2.0, freq_hi = 3.0;
  double amp_lo = 0.8, amp_hi = 1.2;
  double noise_lo = 0.05, noise_hi = 0.15;

  friend bool operator==(const ClassDef&, const ClassDef&) = default;
};

struct SyntheticSpec {
  std::vector<ClassDef> classes;
  std::size_t channels = 2;
  std::size_t length = 128;
  std::size_t samples_per_class = 100;
  std::uint64_t seed = 0;

  void validate() const {
    if (classes.size() < 2) throw InvalidArgument("synthetic spec needs at least 2 classes");
    if (channels < 1 || length < 8 || samples_per_class < 1) throw InvalidArgument("synthetic spec has an empty shape");
    for (const auto& c : classes)
      if (c.freq_hi < c.freq_lo || c.amp_hi < c.amp_lo || c.noise_hi < c.noise_lo || c.noise_lo < 0.0)
        throw InvalidArgument("synthetic class has an inverted range");
  }

  std::uint64_t digest() const {
    Digest d;
    d.text("SyntheticSpec/1")
        .value(static_cast<std::uint64_t>(channels))
        .value(static_cast<std::uint64_t>(length))
        .value(static_cast<std::uint64_t>(samples_per_class));
    for (const auto& c : classes)
      d.value(static_cast<int>(c.family)).value(c.freq_lo).value(c.freq_hi).value(c.amp_lo).value(c.amp_hi).value(c.noise_lo).value(c.noise_hi);
    return d.get();
  }

  /// Three classes with 2, 5 and 9 oscillations per window: a sine, an
  /// amplitude-modulated sine and a spike train.
  static SyntheticSpec desk_default() {
    SyntheticSpec s;
    s.classes = {
        {Waveform::sine, 1.5, 2.5, 0.8, 1.2, 0.05, 0.15},
        {Waveform::am_sine, 4.5, 5.5, 0.8, 1.2, 0.05, 0.15},
        {Waveform::spike_train, 8.5, 9.5, 1.5, 2.5, 0.05, 0.15},
    };
    return s;
  }

  friend bool operator==(const SyntheticSpec&, const SyntheticSpec&) = default;
};

namespace detail {

inline std::vector<double> waveform(const ClassDef& c, std::size_t length, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double f = c.freq_lo + (c.freq_hi - c.freq_lo) * u(rng);
  const double a = c.amp_lo + (c.amp_hi - c.amp_lo) * u(rng);
  const double sigma = c.noise_lo + (c.noise_hi - c.noise_lo) * u(rng);
  const double phase = 2.0 * std::numbers::pi * u(rng);
  const double phase2 = 2.0 * std::numbers::pi * u(rng);
  std::normal_distribution<double> noise(0.0, 1.0);

  std::vector<double> x(length, 0.0);
  const double n = static_cast<double>(length);
  switch (c.family) {
    case Waveform::sine:
      for (std::size_t t = 0; t < length; ++t) x[t] = a * std::sin(2.0 * std::numbers::pi * f * static_cast<double>(t) / n + phase);
      break;
    case Waveform::am_sine:
      for (std::size_t t = 0; t < length; ++t) {
        const double tt = static_cast<double>(t) / n;
        x[t] = a * (0.6 + 0.4 * std::sin(2.0 * std::numbers::pi * tt + phase2)) * std::sin(2.0 * std::numbers::pi * f * tt + phase);
      }
      break;
    case Waveform::random_walk: {
      double level = 0.0;
      const double step = a / std::sqrt(n);
      for (std::size_t t = 0; t < length; ++t) x[t] = (level += step * noise(rng));
      break;
    }
    case Waveform::spike_train: {
      const auto spikes = static_cast<std::size_t>(std::llround(f));
      const double spacing = n / static_cast<double>(std::max<std::size_t>(spikes, 1));
      const double offset = spacing * u(rng);
      for (std::size_t k = 0; k < spikes; ++k) {
        const double centre = std::fmod(offset + spacing * static_cast<double>(k), n);
        for (std::size_t t = 0; t < length; ++t) {
          const double d = (static_cast<double>(t) - centre) / 1.5;
          x[t] += a * std::exp(-0.5 * d * d);
        }
      }
      break;
    }
  }
  for (double& v : x) v += sigma * noise(rng);
  return x;
}

}  // namespace detail

/// Deterministic in `seed`. Samples are interleaved by class (0, 1, ..., K-1, 0, 1, ...).
inline LabeledWindowSet generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  LabeledWindowSet set;
  set.class_count = spec.classes.size();
  for (std::size_t s = 0; s < spec.samples_per_class; ++s)
    for (std::size_t k = 0; k < spec.classes.size(); ++k) {
      SignalWindow w;
      w.label = static_cast<int>(k);
      for (std::size_t c = 0; c < spec.channels; ++c) w.values.push_back(detail::waveform(spec.classes[k], spec.length, rng));
      set.windows.push_back(std::move(w));
    }
  set.provenance = Digest{}.text("synthetic/1").value(spec.digest()).value(seed).get();
  return set;
}

}  // namespace topokd::data
