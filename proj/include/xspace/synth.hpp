#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "xspace/error.hpp"
#include "xspace/series.hpp"

namespace xspace {

enum class SynthKind { freq_disc, event_level, nonstationary_shapelet, trend_season_shapelet };

inline std::string_view to_string(SynthKind k) {
  switch (k) {
    case SynthKind::freq_disc: return "freq_disc";
    case SynthKind::event_level: return "event_level";
    case SynthKind::nonstationary_shapelet: return "nonstationary_shapelet";
    case SynthKind::trend_season_shapelet: return "trend_season_shapelet";
  }
  return "freq_disc";
}

inline SynthKind parse_synth_kind(std::string_view s) {
  for (SynthKind k : {SynthKind::freq_disc, SynthKind::event_level, SynthKind::nonstationary_shapelet,
                      SynthKind::trend_season_shapelet})
    if (to_string(k) == s) return k;
  throw Error(Errc::invalid_spec, "unknown synthetic dataset kind '" + std::string(s) + "'");
}

/// Generator parameters. Zero-valued lengths pick a default proportional to
/// `length`; fields irrelevant to `kind` are ignored.
struct SynthSpec {
  SynthKind kind = SynthKind::freq_disc;
  std::size_t n_samples = 200;
  std::size_t length = 128;
  double noise_sigma = 0.1;
  std::uint64_t seed = 0;

  Vec frequencies{5.0, 12.0};  // freq_disc: one class per frequency, in cycles per series

  double event_amplitude = 1.0;  // event_level: class k has k + 1 events
  std::size_t event_len = 0;     // default length / 16

  std::size_t shapelet_len = 0;  // default length / 8
  double shapelet_amplitude = 1.5;
  double walk_sigma = 0.005;  // nonstationary_shapelet: sd of the slope increments
  double level_sigma = 0.0;  // nonstationary_shapelet: sd of the starting level

  double trend_slope = 2.0;  // trend_season_shapelet: total rise drawn from [-slope, slope]
  Vec season_periods{32.0, 12.0};
  double season_amplitude = 1.0;

  void validate() const {
    require(n_samples >= 2, Errc::invalid_spec, "n_samples must be >= 2");
    require(length >= 16, Errc::invalid_spec, "length must be >= 16");
    require(noise_sigma >= 0.0, Errc::invalid_spec, "noise_sigma must be >= 0");
    if (kind == SynthKind::freq_disc) {
      require(frequencies.size() >= 2, Errc::invalid_spec, "freq_disc needs at least two frequencies");
      for (double f : frequencies)
        require(f > 0.0 && f < static_cast<double>(length) / 2.0, Errc::invalid_spec, "frequency out of range");
    }
    require(event_len_or_default() >= 1 && 3 * event_len_or_default() <= length, Errc::invalid_spec,
            "event_len too large");
    require(shapelet_len_or_default() >= 4 && shapelet_len_or_default() < length, Errc::invalid_spec,
            "shapelet_len out of range");
    for (double p : season_periods) require(p >= 2.0, Errc::invalid_spec, "season periods must be >= 2");
  }

  std::size_t event_len_or_default() const { return event_len ? event_len : std::max<std::size_t>(1, length / 16); }
  std::size_t shapelet_len_or_default() const { return shapelet_len ? shapelet_len : length / 8; }
  std::size_t num_classes() const {
    if (kind == SynthKind::freq_disc) return frequencies.size();
    return kind == SynthKind::event_level ? 2 : 3;
  }
};

/// Per-sample generator ground truth. `raw` is the series before per-sample
/// normalization (event_level) and `clean` the same series without its
/// shapelet (shapelet kinds); both equal the sample otherwise. shapelet_len
/// is 0 when the sample has no shapelet.
struct SynthTruth {
  Vec raw;
  Vec clean;
  std::size_t shapelet_start = 0;
  std::size_t shapelet_len = 0;
};

struct SynthData {
  Dataset train, test;
  std::vector<SynthTruth> train_truth, test_truth;
};

namespace detail {

inline Vec shapelet_pattern(SynthKind kind, int label, std::size_t len, double amp) {
  Vec p(len);
  const double l = static_cast<double>(len - 1);
  for (std::size_t i = 0; i < len; ++i) {
    const double u = static_cast<double>(i) / l;
    if (kind == SynthKind::nonstationary_shapelet) {
      // Semi-linear rise (class 0) or fall (class 1), returning to the entry level.
      const double ramp = u < 0.75 ? u / 0.75 : (1.0 - u) / 0.25;
      p[i] = (label == 0 ? 1.0 : -1.0) * amp * ramp;
    } else {
      // Windowed zigzag: period 4 for class 0, period 2 for class 1.
      const std::size_t half = label == 0 ? 2 : 1;
      p[i] = amp * ((i / half) % 2 == 0 ? 1.0 : -1.0) * std::sin(std::numbers::pi * u);
    }
  }
  return p;
}

inline std::pair<Series, SynthTruth> synth_sample(const SynthSpec& spec, int label, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t n = spec.length;
  const double nd = static_cast<double>(n);
  Vec x(n, 0.0);
  SynthTruth truth;

  auto place_shapelet = [&](Vec& series) {
    const std::size_t len = spec.shapelet_len_or_default();
    std::uniform_int_distribution<std::size_t> pos(len / 2, n - len - len / 2);
    const std::size_t start = pos(rng);
    truth.clean = series;
    if (label == 2) return;  // shapelet-free class
    truth.shapelet_start = start;
    truth.shapelet_len = len;
    const Vec p = shapelet_pattern(spec.kind, label, len, spec.shapelet_amplitude);
    for (std::size_t i = 0; i < len; ++i) series[truth.shapelet_start + i] += p[i];
  };

  switch (spec.kind) {
    case SynthKind::freq_disc: {
      const double f = spec.frequencies[static_cast<std::size_t>(label)];
      const double phase = 2.0 * std::numbers::pi * unit(rng);
      for (std::size_t t = 0; t < n; ++t)
        x[t] = std::sin(2.0 * std::numbers::pi * f * static_cast<double>(t) / nd + phase) + spec.noise_sigma * gauss(rng);
      truth.raw = truth.clean = x;
      break;
    }
    case SynthKind::event_level: {
      const std::size_t len = spec.event_len_or_default();
      const std::size_t events = static_cast<std::size_t>(label) + 1;
      // Non-overlapping slots separated by at least one silent step.
      const std::size_t slots = n / (len + 1);
      std::vector<std::size_t> slot(slots);
      for (std::size_t i = 0; i < slots; ++i) slot[i] = i;
      std::shuffle(slot.begin(), slot.end(), rng);
      for (std::size_t e = 0; e < std::min(events, slots); ++e) {
        const std::size_t start = slot[e] * (len + 1) + 1;
        for (std::size_t t = start; t < std::min(n, start + len); ++t)
          x[t] = std::max(0.0, spec.event_amplitude * (1.0 + spec.noise_sigma * gauss(rng)));
      }
      truth.raw = truth.clean = x;
      const double mu = mean(x), sd = stddev(x);
      for (double& v : x) v = sd > 0.0 ? (v - mu) / sd : 0.0;
      break;
    }
    case SynthKind::nonstationary_shapelet: {
      // Integrated random walk: the slope wanders, the level integrates it.
      double level = spec.level_sigma * gauss(rng), slope = 0.0;
      for (std::size_t t = 0; t < n; ++t) {
        slope += spec.walk_sigma * gauss(rng);
        level += slope;
        x[t] = level;
      }
      place_shapelet(x);
      for (std::size_t t = 0; t < n; ++t) {
        const double e = spec.noise_sigma * gauss(rng);
        x[t] += e;
        truth.clean[t] += e;
      }
      truth.raw = x;
      break;
    }
    case SynthKind::trend_season_shapelet: {
      const double rise = spec.trend_slope * (2.0 * unit(rng) - 1.0);
      for (std::size_t t = 0; t < n; ++t) x[t] = rise * static_cast<double>(t) / nd;
      for (double period : spec.season_periods) {
        const double phase = 2.0 * std::numbers::pi * unit(rng);
        const double amp = spec.season_amplitude * (0.75 + 0.5 * unit(rng));
        for (std::size_t t = 0; t < n; ++t)
          x[t] += amp * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / period + phase);
      }
      place_shapelet(x);
      for (std::size_t t = 0; t < n; ++t) {
        const double e = spec.noise_sigma * gauss(rng);
        x[t] += e;
        truth.clean[t] += e;
      }
      truth.raw = x;
      break;
    }
  }
  Series s;
  s.values = std::move(x);
  s.label = label;
  return {std::move(s), std::move(truth)};
}

}  // namespace detail

/// Deterministic synthetic dataset with a stratified 80/20 train/test split.
/// Labels cycle through the classes, so class counts differ by at most one.
inline SynthData synth_dataset(const SynthSpec& spec) {
  spec.validate();
  const std::size_t classes = spec.num_classes();
  std::vector<std::vector<std::size_t>> by_class(classes);
  for (std::size_t i = 0; i < spec.n_samples; ++i) by_class[i % classes].push_back(i);

  std::mt19937_64 rng(mix_seed(spec.seed, spec.n_samples));
  std::vector<bool> is_test(spec.n_samples, false);
  for (auto& members : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    const std::size_t n_test = (members.size() + 2) / 5;  // 20%, rounded to nearest
    for (std::size_t k = 0; k < n_test; ++k) is_test[members[k]] = true;
  }

  SynthData out;
  for (std::size_t i = 0; i < spec.n_samples; ++i) {
    auto [series, truth] = detail::synth_sample(spec, static_cast<int>(i % classes), mix_seed(spec.seed, i));
    series.name = std::string(to_string(spec.kind)) + "_" + std::to_string(i);
    if (is_test[i]) {
      out.test.samples.push_back(std::move(series));
      out.test_truth.push_back(std::move(truth));
    } else {
      out.train.samples.push_back(std::move(series));
      out.train_truth.push_back(std::move(truth));
    }
  }
  return out;
}

inline SynthSpec synth_spec_from_json(const nlohmann::json& j) {
  SynthSpec s;
  try {
    s.kind = parse_synth_kind(j.at("kind").get<std::string>());
    s.n_samples = j.value("n_samples", s.n_samples);
    s.length = j.value("length", s.length);
    s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
    s.seed = j.value("seed", s.seed);
    s.frequencies = j.value("frequencies", s.frequencies);
    s.event_amplitude = j.value("event_amplitude", s.event_amplitude);
    s.event_len = j.value("event_len", s.event_len);
    s.shapelet_len = j.value("shapelet_len", s.shapelet_len);
    s.shapelet_amplitude = j.value("shapelet_amplitude", s.shapelet_amplitude);
    s.walk_sigma = j.value("walk_sigma", s.walk_sigma);
    s.level_sigma = j.value("level_sigma", s.level_sigma);
    s.trend_slope = j.value("trend_slope", s.trend_slope);
    s.season_periods = j.value("season_periods", s.season_periods);
    s.season_amplitude = j.value("season_amplitude", s.season_amplitude);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::invalid_spec, std::string("bad synthetic spec: ") + e.what());
  }
  s.validate();
  return s;
}

inline nlohmann::json to_json(const SynthSpec& s) {
  return {{"kind", to_string(s.kind)},
          {"n_samples", s.n_samples},
          {"length", s.length},
          {"noise_sigma", s.noise_sigma},
          {"seed", s.seed},
          {"frequencies", s.frequencies},
          {"event_amplitude", s.event_amplitude},
          {"event_len", s.event_len},
          {"shapelet_len", s.shapelet_len},
          {"shapelet_amplitude", s.shapelet_amplitude},
          {"walk_sigma", s.walk_sigma},
          {"level_sigma", s.level_sigma},
          {"trend_slope", s.trend_slope},
          {"season_periods", s.season_periods},
          {"season_amplitude", s.season_amplitude}};
}

}  // namespace xspace
