#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xspace/error.hpp"

namespace xspace {

using Vec = std::vector<double>;

/// A univariate series with an optional class label.
struct Series {
  Vec values;
  std::optional<int> label;
  std::string name;

  std::size_t size() const noexcept { return values.size(); }

  void validate() const {
    require(values.size() >= 2, Errc::invalid_params, "series needs at least 2 values");
    for (double v : values) require(std::isfinite(v), Errc::non_finite, "series value is not finite");
  }
};

struct Dataset {
  std::vector<Series> samples;

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }

  std::size_t series_length() const {
    require(!samples.empty(), Errc::empty_dataset, "dataset has no samples");
    const std::size_t n = samples.front().size();
    for (const auto& s : samples) {
      require(s.size() == n, Errc::inconsistent_lengths, "series lengths differ within dataset");
    }
    return n;
  }

  int num_classes() const {
    int c = 0;
    for (const auto& s : samples) c = std::max(c, s.label.value_or(-1) + 1);
    return c;
  }
};

// splitmix64 finalizer; used to derive independent per-sample seeds.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

namespace detail {

inline double mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// Population standard deviation.
inline double stddev(std::span<const double> v) {
  if (v.empty()) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

inline std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

inline double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace detail
}  // namespace xspace
