#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "xspace/classifier.hpp"
#include "xspace/error.hpp"
#include "xspace/series.hpp"

namespace xspace {

enum class MethodId {
  deeplift,
  gradient_shap,
  guided_backprop,
  input_x_gradient,
  integrated_gradients,
  kernel_shap,
  lime,
  occlusion,
  saliency,
};

inline constexpr MethodId kAllMethods[] = {
    MethodId::deeplift,  MethodId::gradient_shap, MethodId::guided_backprop,
    MethodId::input_x_gradient, MethodId::integrated_gradients, MethodId::kernel_shap,
    MethodId::lime,      MethodId::occlusion,     MethodId::saliency,
};

inline std::string_view to_string(MethodId m) {
  switch (m) {
    case MethodId::deeplift: return "deeplift";
    case MethodId::gradient_shap: return "gradient_shap";
    case MethodId::guided_backprop: return "guided_backprop";
    case MethodId::input_x_gradient: return "input_x_gradient";
    case MethodId::integrated_gradients: return "integrated_gradients";
    case MethodId::kernel_shap: return "kernel_shap";
    case MethodId::lime: return "lime";
    case MethodId::occlusion: return "occlusion";
    case MethodId::saliency: return "saliency";
  }
  return "saliency";
}

inline MethodId parse_method(std::string_view s) {
  for (MethodId m : kAllMethods)
    if (to_string(m) == s) return m;
  throw Error(Errc::invalid_params, "unknown attribution method '" + std::string(s) + "'");
}

/// Methods that back-propagate through the model, as opposed to the
/// perturbation family (occlusion, KernelSHAP, LIME).
inline bool is_backprop_method(MethodId m) {
  return m != MethodId::occlusion && m != MethodId::kernel_shap && m != MethodId::lime;
}

/// Hyper-parameters shared by all methods. Zero-valued window and segment
/// counts mean "use the dimension-dependent default".
struct MethodConfig {
  Vec baseline;  // empty: all zeros in the explanation space
  std::size_t ig_steps = 64;
  std::size_t gs_samples = 50;
  double gs_noise_sigma = 1.0;
  std::size_t occlusion_window = 0;  // default max(1, dim / 20)
  std::size_t occlusion_stride = 1;
  std::size_t shap_segments = 0;  // default min(dim, 32)
  std::size_t shap_coalitions = 500;
  std::size_t lime_samples = 500;
  double lime_kernel_width = 0.25;
  double lime_ridge = 1e-3;
  double deeplift_delta = 1e-7;
  std::uint64_t seed = 0;

  void validate() const {
    require(ig_steps >= 1 && gs_samples >= 1 && occlusion_stride >= 1 && shap_coalitions >= 1 && lime_samples >= 1,
            Errc::invalid_params, "method counts must be >= 1");
    require(gs_noise_sigma > 0.0 && lime_kernel_width > 0.0, Errc::invalid_params,
            "noise sigma and kernel width must be > 0");
  }

  std::size_t window_for(std::size_t dim) const {
    return occlusion_window != 0 ? occlusion_window : std::max<std::size_t>(1, dim / 20);
  }
  std::size_t segments_for(std::size_t dim) const {
    return shap_segments != 0 ? shap_segments : std::min<std::size_t>(dim, 32);
  }
};

struct Attribution {
  Vec scores;
  std::string space_id;
  MethodId method = MethodId::saliency;
  std::size_t target_class = 0;
};

namespace detail {

template <class C>
std::string space_id_of(const C& clf) {
  if constexpr (requires { clf.space(); }) {
    return clf.space().id();
  } else {
    return "time";
  }
}

inline Vec baseline_for(const MethodConfig& cfg, std::size_t dim) {
  if (cfg.baseline.empty()) return Vec(dim, 0.0);
  require_length(cfg.baseline.size(), dim, "baseline");
  return cfg.baseline;
}

template <class C>
Attribution make_attribution(const C& clf, MethodId m, std::size_t c, Vec scores) {
  check_finite(scores, to_string(m));
  return Attribution{std::move(scores), space_id_of(clf), m, c};
}

template <class C>
void check_input(const C& clf, std::span<const double> z, std::size_t c) {
  require_length(z.size(), clf.dim(), "attribution input");
  require(c < clf.num_classes(), Errc::invalid_params, "target class out of range");
}

/// Contiguous near-equal partition of [0, dim) into `count` segments, as
/// (start, length) pairs; the first dim % count segments are one longer.
inline std::vector<std::pair<std::size_t, std::size_t>> segments(std::size_t dim, std::size_t count) {
  require(count >= 1 && count <= dim, Errc::invalid_params, "segment count must be in [1, dim]");
  std::vector<std::pair<std::size_t, std::size_t>> out;
  const std::size_t base = dim / count, extra = dim % count;
  std::size_t start = 0;
  for (std::size_t s = 0; s < count; ++s) {
    const std::size_t len = base + (s < extra ? 1 : 0);
    out.emplace_back(start, len);
    start += len;
  }
  return out;
}

// Input with the segments whose mask bit is false replaced by the baseline.
inline Vec apply_mask(std::span<const double> z, std::span<const double> baseline,
                      const std::vector<std::pair<std::size_t, std::size_t>>& segs, const std::vector<char>& present) {
  Vec out(z.begin(), z.end());
  for (std::size_t s = 0; s < segs.size(); ++s) {
    if (present[s]) continue;
    for (std::size_t i = segs[s].first; i < segs[s].first + segs[s].second; ++i) out[i] = baseline[i];
  }
  return out;
}

inline Vec spread_segments(const Vec& per_segment, const std::vector<std::pair<std::size_t, std::size_t>>& segs,
                           std::size_t dim) {
  Vec out(dim, 0.0);
  for (std::size_t s = 0; s < segs.size(); ++s) {
    const double share = per_segment[s] / static_cast<double>(segs[s].second);
    for (std::size_t i = segs[s].first; i < segs[s].first + segs[s].second; ++i) out[i] = share;
  }
  return out;
}

inline double binomial(std::size_t n, std::size_t k) {
  double r = 1.0;
  for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return r;
}

}  // namespace detail

/// |dM'_c / dz_i|
template <DifferentiableClassifier C>
Attribution saliency(const C& clf, std::span<const double> z, std::size_t c, const MethodConfig& = {}) {
  detail::check_input(clf, z, c);
  Vec g = clf.gradient(z, c);
  for (double& v : g) v = std::abs(v);
  return detail::make_attribution(clf, MethodId::saliency, c, std::move(g));
}

/// z_i * dM'_c / dz_i
template <DifferentiableClassifier C>
Attribution input_x_gradient(const C& clf, std::span<const double> z, std::size_t c, const MethodConfig& = {}) {
  detail::check_input(clf, z, c);
  Vec g = clf.gradient(z, c);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= z[i];
  return detail::make_attribution(clf, MethodId::input_x_gradient, c, std::move(g));
}

/// (z - b) times the trapezoidal average of the gradient over ig_steps
/// equal intervals of the straight path from b to z.
template <DifferentiableClassifier C>
Attribution integrated_gradients(const C& clf, std::span<const double> z, std::size_t c,
                                 const MethodConfig& cfg = {}) {
  detail::check_input(clf, z, c);
  cfg.validate();
  const Vec b = detail::baseline_for(cfg, z.size());
  const std::size_t m = cfg.ig_steps;
  Vec avg(z.size(), 0.0), point(z.size());
  for (std::size_t j = 0; j <= m; ++j) {
    const double alpha = static_cast<double>(j) / static_cast<double>(m);
    const double w = (j == 0 || j == m) ? 0.5 : 1.0;
    for (std::size_t i = 0; i < z.size(); ++i) point[i] = b[i] + alpha * (z[i] - b[i]);
    const Vec g = clf.gradient(point, c);
    for (std::size_t i = 0; i < z.size(); ++i) avg[i] += w * g[i];
  }
  for (std::size_t i = 0; i < z.size(); ++i) avg[i] = (z[i] - b[i]) * avg[i] / static_cast<double>(m);
  return detail::make_attribution(clf, MethodId::integrated_gradients, c, std::move(avg));
}

/// Expected gradients with noisy baselines: b = baseline + N(0, (sigma std(z))^2),
/// alpha ~ U(0, 1); scores are the mean of (z - b) * grad(b + alpha (z - b)).
template <DifferentiableClassifier C>
Attribution gradient_shap(const C& clf, std::span<const double> z, std::size_t c, const MethodConfig& cfg = {}) {
  detail::check_input(clf, z, c);
  cfg.validate();
  const Vec base = detail::baseline_for(cfg, z.size());
  const double sd = cfg.gs_noise_sigma * detail::stddev(z);
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Vec acc(z.size(), 0.0), b(z.size()), point(z.size());
  for (std::size_t s = 0; s < cfg.gs_samples; ++s) {
    for (std::size_t i = 0; i < z.size(); ++i) b[i] = base[i] + sd * noise(rng);
    const double alpha = unit(rng);
    for (std::size_t i = 0; i < z.size(); ++i) point[i] = b[i] + alpha * (z[i] - b[i]);
    const Vec g = clf.gradient(point, c);
    for (std::size_t i = 0; i < z.size(); ++i) acc[i] += (z[i] - b[i]) * g[i];
  }
  for (double& v : acc) v /= static_cast<double>(cfg.gs_samples);
  return detail::make_attribution(clf, MethodId::gradient_shap, c, std::move(acc));
}

template <DifferentiableClassifier C>
Attribution guided_backprop(const C& clf, std::span<const double> z, std::size_t c, const MethodConfig& = {}) {
  detail::check_input(clf, z, c);
  return detail::make_attribution(clf, MethodId::guided_backprop, c, clf.guided_gradient(z, c));
}

/// DeepLIFT with the Rescale rule; multipliers times (z - baseline).
template <DifferentiableClassifier C>
Attribution deeplift(const C& clf, std::span<const double> z, std::size_t c, const MethodConfig& cfg = {}) {
  detail::check_input(clf, z, c);
  const Vec b = detail::baseline_for(cfg, z.size());
  Vec m = clf.deeplift_multipliers(z, b, c, cfg.deeplift_delta);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] *= z[i] - b[i];
  return detail::make_attribution(clf, MethodId::deeplift, c, std::move(m));
}

/// Sliding-window occlusion. Each placement replaces the window with the
/// baseline and records the drop of M'_c; a coordinate's score is the mean
/// drop over the placements covering it. A final placement flush with the
/// end is added when the stride does not land there, so every coordinate is
/// covered.
template <DifferentiableClassifier C>
Attribution occlusion(const C& clf, std::span<const double> z, std::size_t c, const MethodConfig& cfg = {}) {
  detail::check_input(clf, z, c);
  cfg.validate();
  const std::size_t dim = z.size();
  const std::size_t w = cfg.window_for(dim);
  require(w <= dim, Errc::window_too_large,
          "occlusion window " + std::to_string(w) + " exceeds dimension " + std::to_string(dim));
  const Vec b = detail::baseline_for(cfg, dim);
  const double full = clf.value(z, c);

  std::vector<std::size_t> starts;
  for (std::size_t s = 0; s + w <= dim; s += cfg.occlusion_stride) starts.push_back(s);
  if (starts.back() + w != dim) starts.push_back(dim - w);

  Vec sum(dim, 0.0), count(dim, 0.0), masked(z.begin(), z.end());
  for (std::size_t s : starts) {
    for (std::size_t i = s; i < s + w; ++i) masked[i] = b[i];
    const double drop = full - clf.value(masked, c);
    for (std::size_t i = s; i < s + w; ++i) {
      sum[i] += drop;
      count[i] += 1.0;
      masked[i] = z[i];
    }
  }
  // Coordinates skipped by a stride longer than the window score 0.
  for (std::size_t i = 0; i < dim; ++i) sum[i] = count[i] > 0.0 ? sum[i] / count[i] : 0.0;
  return detail::make_attribution(clf, MethodId::occlusion, c, std::move(sum));
}

/// KernelSHAP over contiguous segments; returns one Shapley estimate per
/// segment. When every proper coalition fits in the budget they are
/// enumerated with exact kernel weights, which yields exact Shapley values.
/// Otherwise coalition sizes are drawn in proportion to the kernel mass of
/// each size and subsets uniformly within a size.
template <DifferentiableClassifier C>
Vec kernel_shap_segments(const C& clf, std::span<const double> z, std::size_t c, const MethodConfig& cfg) {
  detail::check_input(clf, z, c);
  cfg.validate();
  const std::size_t dim = z.size();
  const std::size_t groups = cfg.segments_for(dim);
  require(groups <= dim, Errc::invalid_params, "shap_segments exceeds dimension");
  const auto segs = detail::segments(dim, groups);
  const Vec b = detail::baseline_for(cfg, dim);

  const double f_full = clf.value(z, c);
  const double f_empty = clf.value(b, c);
  const double delta = f_full - f_empty;
  if (groups == 1) return Vec{delta};

  std::vector<std::vector<char>> masks;
  std::vector<double> weights;
  const bool exhaustive = groups < 63 && ((std::uint64_t{1} << groups) - 2) <= cfg.shap_coalitions;
  if (exhaustive) {
    for (std::uint64_t bits = 1; bits + 1 < (std::uint64_t{1} << groups); ++bits) {
      std::vector<char> present(groups);
      std::size_t size = 0;
      for (std::size_t s = 0; s < groups; ++s) {
        present[s] = static_cast<char>((bits >> s) & 1u);
        size += present[s];
      }
      const double g = static_cast<double>(groups);
      weights.push_back((g - 1.0) / (detail::binomial(groups, size) * static_cast<double>(size) *
                                     static_cast<double>(groups - size)));
      masks.push_back(std::move(present));
    }
  } else {
    std::vector<double> size_mass;
    for (std::size_t s = 1; s < groups; ++s)
      size_mass.push_back(1.0 / (static_cast<double>(s) * static_cast<double>(groups - s)));
    std::mt19937_64 rng(cfg.seed);
    std::discrete_distribution<std::size_t> pick_size(size_mass.begin(), size_mass.end());
    std::vector<std::size_t> idx(groups);
    for (std::size_t k = 0; k < cfg.shap_coalitions; ++k) {
      const std::size_t size = pick_size(rng) + 1;
      std::iota(idx.begin(), idx.end(), 0);
      std::shuffle(idx.begin(), idx.end(), rng);
      std::vector<char> present(groups, 0);
      for (std::size_t j = 0; j < size; ++j) present[idx[j]] = 1;
      masks.push_back(std::move(present));
      weights.push_back(1.0);
    }
  }

  // Efficiency constraint: phi_last = delta - sum(others); regress the rest.
  const std::size_t rows = masks.size(), cols = groups - 1;
  Eigen::MatrixXd a(rows, cols);
  Eigen::VectorXd y(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double f = clf.value(detail::apply_mask(z, b, segs, masks[r]), c) - f_empty;
    const double last = masks[r][groups - 1];
    const double sw = std::sqrt(weights[r]);
    for (std::size_t j = 0; j < cols; ++j) a(r, j) = sw * (masks[r][j] - last);
    y(r) = sw * (f - last * delta);
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  require(static_cast<std::size_t>(qr.rank()) == cols, Errc::degenerate_regression,
          "coalition matrix is rank deficient; increase shap_coalitions");
  const Eigen::VectorXd phi = qr.solve(y);
  Vec out(groups);
  double rest = delta;
  for (std::size_t j = 0; j < cols; ++j) {
    out[j] = phi(static_cast<Eigen::Index>(j));
    rest -= out[j];
  }
  out[groups - 1] = rest;
  return out;
}

template <DifferentiableClassifier C>
Attribution kernel_shap(const C& clf, std::span<const double> z, std::size_t c, const MethodConfig& cfg = {}) {
  const Vec per = kernel_shap_segments(clf, z, c, cfg);
  const auto segs = detail::segments(z.size(), per.size());
  return detail::make_attribution(clf, MethodId::kernel_shap, c, detail::spread_segments(per, segs, z.size()));
}

/// LIME over contiguous segments: Bernoulli(0.5) segment masks (the first
/// sample is the unmasked input), exponential kernel on the masked fraction,
/// weighted ridge regression with an unpenalized intercept. Returns one
/// coefficient per segment.
template <DifferentiableClassifier C>
Vec lime_segments(const C& clf, std::span<const double> z, std::size_t c, const MethodConfig& cfg) {
  detail::check_input(clf, z, c);
  cfg.validate();
  const std::size_t dim = z.size();
  const std::size_t groups = cfg.segments_for(dim);
  require(groups <= dim, Errc::invalid_params, "shap_segments exceeds dimension");
  const auto segs = detail::segments(dim, groups);
  const Vec b = detail::baseline_for(cfg, dim);

  std::mt19937_64 rng(cfg.seed);
  std::bernoulli_distribution coin(0.5);
  const std::size_t cols = groups + 1;
  Eigen::MatrixXd normal = Eigen::MatrixXd::Zero(cols, cols);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(cols);
  Eigen::VectorXd row(cols);
  double total_weight = 0.0;
  std::vector<char> present(groups, 1);
  for (std::size_t k = 0; k < cfg.lime_samples; ++k) {
    if (k > 0)
      for (auto& p : present) p = coin(rng) ? 1 : 0;
    std::size_t masked = 0;
    for (char p : present) masked += p ? 0 : 1;
    const double d = static_cast<double>(masked) / static_cast<double>(groups);
    const double w = std::exp(-(d * d) / (cfg.lime_kernel_width * cfg.lime_kernel_width));
    const double f = clf.value(detail::apply_mask(z, b, segs, present), c);
    row(0) = 1.0;
    for (std::size_t s = 0; s < groups; ++s) row(static_cast<Eigen::Index>(s + 1)) = present[s];
    normal.noalias() += w * row * row.transpose();
    rhs.noalias() += w * f * row;
    total_weight += w;
  }
  require(total_weight > 0.0 && std::isfinite(total_weight), Errc::degenerate_regression,
          "all LIME samples have zero kernel weight");
  for (std::size_t s = 1; s < cols; ++s) normal(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(s)) += cfg.lime_ridge;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(normal);
  require(ldlt.info() == Eigen::Success && ldlt.isPositive(), Errc::degenerate_regression,
          "LIME normal equations are singular");
  const Eigen::VectorXd beta = ldlt.solve(rhs);
  require(beta.allFinite(), Errc::degenerate_regression, "LIME regression produced non-finite coefficients");
  Vec out(groups);
  for (std::size_t s = 0; s < groups; ++s) out[s] = beta(static_cast<Eigen::Index>(s + 1));
  return out;
}

template <DifferentiableClassifier C>
Attribution lime(const C& clf, std::span<const double> z, std::size_t c, const MethodConfig& cfg = {}) {
  const Vec per = lime_segments(clf, z, c, cfg);
  const auto segs = detail::segments(z.size(), per.size());
  return detail::make_attribution(clf, MethodId::lime, c, detail::spread_segments(per, segs, z.size()));
}

template <DifferentiableClassifier C>
Attribution explain(MethodId method, const C& clf, std::span<const double> z, std::size_t c,
                    const MethodConfig& cfg = {}) {
  switch (method) {
    case MethodId::deeplift: return deeplift(clf, z, c, cfg);
    case MethodId::gradient_shap: return gradient_shap(clf, z, c, cfg);
    case MethodId::guided_backprop: return guided_backprop(clf, z, c, cfg);
    case MethodId::input_x_gradient: return input_x_gradient(clf, z, c, cfg);
    case MethodId::integrated_gradients: return integrated_gradients(clf, z, c, cfg);
    case MethodId::kernel_shap: return kernel_shap(clf, z, c, cfg);
    case MethodId::lime: return lime(clf, z, c, cfg);
    case MethodId::occlusion: return occlusion(clf, z, c, cfg);
    case MethodId::saliency: return saliency(clf, z, c, cfg);
  }
  return saliency(clf, z, c, cfg);
}

struct CalibrationOptions {
  bool clamp_drops = false;  // clamp negative confidence drops at zero
};

/// Occlusion-weighted calibration for the decomposition space. Block k of
/// the raw attribution is scaled by the drop of M'_c when component k is
/// zeroed; the result is scaled into [-1, 1] by its largest magnitude, which
/// keeps zero attributions at zero.
inline Attribution calibrate_decomposition(const WrappedClassifier& w, std::span<const double> z, std::size_t c,
                                           const Attribution& raw, CalibrationOptions opts = {}) {
  const Space& s = w.space();
  require(s.kind() == SpaceKind::decomposition, Errc::space_mismatch,
          "calibration needs a decomposition space, got " + s.id());
  require_length(z.size(), s.dim(), "calibrate_decomposition input");
  require_length(raw.scores.size(), s.dim(), "calibrate_decomposition attribution");
  const std::size_t n = s.input_len(), k = s.params().components;
  const double full = w.value(z, c);
  Vec out(raw.scores);
  Vec masked(z.begin(), z.end());
  for (std::size_t block = 0; block < k; ++block) {
    std::fill(masked.begin() + static_cast<std::ptrdiff_t>(block * n),
              masked.begin() + static_cast<std::ptrdiff_t>((block + 1) * n), 0.0);
    double drop = full - w.value(masked, c);
    if (opts.clamp_drops) drop = std::max(drop, 0.0);
    for (std::size_t i = block * n; i < (block + 1) * n; ++i) {
      out[i] *= drop;
      masked[i] = z[i];
    }
  }
  const double scale = detail::max_abs(out);
  if (scale > 0.0)
    for (double& v : out) v /= scale;
  return Attribution{std::move(out), raw.space_id, raw.method, c};
}

/// sample_id,space,method,coordinate,label,score
inline void write_attribution_csv_header(std::ostream& out) {
  out << "sample_id,space,method,coordinate,label,score\n";
}

inline void write_attribution_csv_rows(std::ostream& out, std::size_t sample_id, const Attribution& a,
                                       const std::vector<std::string>& labels) {
  require_length(labels.size(), a.scores.size(), "attribution labels");
  char buf[64];
  for (std::size_t i = 0; i < a.scores.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", a.scores[i]);
    out << sample_id << ',' << a.space_id << ',' << to_string(a.method) << ',' << i << ',' << labels[i] << ',' << buf
        << '\n';
  }
}

}  // namespace xspace
