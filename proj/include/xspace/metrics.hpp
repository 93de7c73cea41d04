#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>

#include "xspace/attribution.hpp"
#include "xspace/classifier.hpp"
#include "xspace/error.hpp"
#include "xspace/series.hpp"
#include "xspace/space.hpp"

namespace xspace {

struct RobustnessConfig {
  double lambda = 0.01;
  std::size_t num_perturbations = 10;
  std::uint64_t seed = 0;

  // lambda = 0 is accepted and yields 0 for both robustness metrics.
  void validate() const {
    require(lambda >= 0.0 && std::isfinite(lambda), Errc::invalid_params, "lambda must be >= 0");
    require(num_perturbations >= 1, Errc::invalid_params, "num_perturbations must be >= 1");
  }
};

struct FaithfulnessConfig {
  double threshold_eps = 0.05;
  double mask_value = 0.0;

  void validate() const {
    require(threshold_eps > 0.0 && threshold_eps < 1.0, Errc::invalid_params, "threshold_eps must be in (0, 1)");
  }
};

struct SparsityConfig {
  double beta = 2.0;

  void validate() const { require(beta > 1.0, Errc::invalid_params, "beta must be > 1"); }
};

namespace detail {

// Draws z + lambda * eps with eps ~ N(0, std(z)^2) per coordinate.
class Perturber {
 public:
  Perturber(std::span<const double> z, const RobustnessConfig& cfg)
      : z_(z.begin(), z.end()), scale_(cfg.lambda * stddev(z)), rng_(cfg.seed) {}

  Vec next() {
    Vec out = z_;
    for (double& v : out) v += scale_ * unit_(rng_);
    return out;
  }

 private:
  Vec z_;
  double scale_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> unit_{0.0, 1.0};
};

// |scores| min-max normalized over the coordinates not in `skip`.
inline Vec normalized_magnitudes(std::span<const double> scores, std::optional<std::size_t> skip) {
  Vec a;
  a.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (i != skip) a.push_back(std::abs(scores[i]));
  if (a.empty()) return a;
  const auto [lo, hi] = std::minmax_element(a.begin(), a.end());
  const double mn = *lo, mx = *hi;
  if (mx == mn) return Vec(a.size(), 1.0);
  for (double& v : a) v = (v - mn) / (mx - mn);
  return a;
}

}  // namespace detail

/// Mean |p_c(z) - p_c(z + lambda eps)| over the perturbations, c the class
/// predicted at z. Lower is more robust.
template <DifferentiableClassifier C>
double classifier_robustness(const C& clf, std::span<const double> z, const RobustnessConfig& cfg = {}) {
  cfg.validate();
  const Vec p = clf.predict(z);
  const std::size_t c = detail::argmax(p);
  detail::Perturber draw(z, cfg);
  double total = 0.0;
  for (std::size_t k = 0; k < cfg.num_perturbations; ++k) total += std::abs(p[c] - clf.predict(draw.next())[c]);
  return total / static_cast<double>(cfg.num_perturbations);
}

/// Mean of ||E(z) - E(z + lambda eps)||_2 / dim(z). `explainer` maps a point
/// and the target class to scores; the target stays the class predicted at z.
template <DifferentiableClassifier C>
double xai_robustness(const C& clf, std::span<const double> z,
                      const std::function<Vec(std::span<const double>, std::size_t)>& explainer,
                      const RobustnessConfig& cfg = {}) {
  cfg.validate();
  const std::size_t c = detail::argmax(clf.predict(z));
  const Vec base = explainer(z, c);
  detail::Perturber draw(z, cfg);
  double total = 0.0;
  for (std::size_t k = 0; k < cfg.num_perturbations; ++k) {
    const Vec other = explainer(draw.next(), c);
    double sq = 0.0;
    for (std::size_t i = 0; i < base.size(); ++i) sq += (base[i] - other[i]) * (base[i] - other[i]);
    total += std::sqrt(sq) / static_cast<double>(z.size());
  }
  return total / static_cast<double>(cfg.num_perturbations);
}

template <DifferentiableClassifier C>
double xai_robustness(const C& clf, std::span<const double> z, MethodId method, const MethodConfig& mcfg = {},
                      const RobustnessConfig& cfg = {}) {
  return xai_robustness(
      clf, z, [&](std::span<const double> point, std::size_t c) { return explain(method, clf, point, c, mcfg).scores; },
      cfg);
}

/// True when masking every coordinate whose normalized |score| exceeds
/// threshold_eps changes the predicted class. An all-zero attribution masks
/// nothing; a constant nonzero one masks everything. `placeholder` is never
/// masked and does not take part in the normalization.
template <DifferentiableClassifier C>
bool faithfulness_flip(const C& clf, std::span<const double> z, std::span<const double> scores,
                       const FaithfulnessConfig& cfg = {}, std::optional<std::size_t> placeholder = std::nullopt) {
  cfg.validate();
  require_length(scores.size(), z.size(), "faithfulness_flip");
  const std::size_t before = detail::argmax(clf.predict(z));
  bool any_nonzero = false;
  for (std::size_t i = 0; i < scores.size(); ++i) any_nonzero |= (i != placeholder && scores[i] != 0.0);
  if (!any_nonzero) return false;
  const Vec a = detail::normalized_magnitudes(scores, placeholder);
  Vec masked(z.begin(), z.end());
  for (std::size_t i = 0, k = 0; i < z.size(); ++i) {
    if (i == placeholder) continue;
    if (a[k++] > cfg.threshold_eps) masked[i] = cfg.mask_value;
  }
  return detail::argmax(clf.predict(masked)) != before;
}

inline bool faithfulness_flip(const WrappedClassifier& clf, std::span<const double> z,
                              std::span<const double> scores, const FaithfulnessConfig& cfg = {}) {
  return faithfulness_flip<WrappedClassifier>(clf, z, scores, cfg, clf.space().placeholder_index());
}

/// (sum(1 - a_i) / (n - 1))^beta over min-max normalized |scores|; 1 is a
/// single spike, 0 is uniform. `placeholder` is dropped first.
inline double sparsity(std::span<const double> scores, const SparsityConfig& cfg = {},
                       std::optional<std::size_t> placeholder = std::nullopt) {
  cfg.validate();
  const Vec a = detail::normalized_magnitudes(scores, placeholder);
  require(a.size() >= 2, Errc::too_short, "sparsity needs at least two coordinates");
  double gap = 0.0;
  for (double v : a) gap += 1.0 - v;
  return std::pow(gap / static_cast<double>(a.size() - 1), cfg.beta);
}

inline double sparsity(std::span<const double> scores, const Space& space, const SparsityConfig& cfg = {}) {
  require_length(scores.size(), space.dim(), "sparsity");
  return sparsity(scores, cfg, space.placeholder_index());
}

/// Entropy in nats of |scores| / sum|scores|.
inline double shannon_entropy(std::span<const double> scores) {
  double total = 0.0;
  for (double v : scores) total += std::abs(v);
  require(total > 0.0, Errc::all_zero_attribution, "entropy of an all-zero attribution");
  double h = 0.0;
  for (double v : scores) {
    const double p = std::abs(v) / total;
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

}  // namespace xspace
