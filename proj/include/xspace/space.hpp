#pragma once

#include <algorithm>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "xspace/dft.hpp"
#include "xspace/error.hpp"
#include "xspace/series.hpp"
#include "xspace/ssa.hpp"

namespace xspace {

enum class SpaceKind { time, frequency, time_frequency, min_zero, difference, decomposition };

inline constexpr SpaceKind kAllSpaceKinds[] = {SpaceKind::time,     SpaceKind::frequency,
                                               SpaceKind::time_frequency, SpaceKind::min_zero,
                                               SpaceKind::difference,     SpaceKind::decomposition};

inline std::string_view to_string(SpaceKind k) {
  switch (k) {
    case SpaceKind::time: return "time";
    case SpaceKind::frequency: return "frequency";
    case SpaceKind::time_frequency: return "time_frequency";
    case SpaceKind::min_zero: return "min_zero";
    case SpaceKind::difference: return "difference";
    case SpaceKind::decomposition: return "decomposition";
  }
  return "time";
}

inline SpaceKind parse_space_kind(std::string_view s) {
  for (SpaceKind k : kAllSpaceKinds)
    if (to_string(k) == s) return k;
  throw Error(Errc::invalid_params, "unknown space kind '" + std::string(s) + "'");
}

/// Kind-specific parameters. Unused fields are ignored by other kinds.
struct SpaceParams {
  std::size_t frame_len = 0;   // time_frequency
  std::size_t window = 0;      // decomposition: SSA window L
  std::size_t components = 0;  // decomposition: number of groups K
};

/// An invertible explanation space. The forward map may be nonlinear
/// (min_zero, decomposition) but every inverse is a linear operator A with
/// F^-1(z) = z^T A, so gradients pull back through F^-1 as A g.
///
/// Immutable after construction; all members are safe to call concurrently.
class Space {
 public:
  static Space make(SpaceKind kind, std::size_t input_len, SpaceParams params = {}) {
    require(input_len >= 2, Errc::invalid_params, "input_len must be at least 2");
    Space s;
    s.kind_ = kind;
    s.n_ = input_len;
    s.params_ = params;
    switch (kind) {
      case SpaceKind::time:
      case SpaceKind::difference:
        s.dim_ = input_len;
        break;
      case SpaceKind::min_zero:
        s.dim_ = input_len + 1;
        break;
      case SpaceKind::frequency:
        s.dim_ = input_len;
        s.dft_ = std::make_shared<const PackedDft>(input_len);
        break;
      case SpaceKind::time_frequency:
        require(params.frame_len >= 1 && input_len % params.frame_len == 0, Errc::invalid_params,
                "frame_len " + std::to_string(params.frame_len) + " does not divide input_len " +
                    std::to_string(input_len));
        s.dim_ = input_len;
        s.dft_ = std::make_shared<const PackedDft>(params.frame_len);
        break;
      case SpaceKind::decomposition:
        require(params.window >= 2 && 2 * params.window <= input_len, Errc::invalid_params,
                "SSA window must satisfy 2 <= L <= N/2");
        require(params.components >= 1 && params.components <= params.window, Errc::invalid_params,
                "SSA component count must satisfy 1 <= K <= L");
        s.dim_ = params.components * input_len;
        break;
    }
    return s;
  }

  SpaceKind kind() const noexcept { return kind_; }
  std::size_t input_len() const noexcept { return n_; }
  std::size_t dim() const noexcept { return dim_; }
  const SpaceParams& params() const noexcept { return params_; }
  std::string id() const { return std::string(to_string(kind_)); }

  /// Index of the min_zero placeholder coordinate, if this space has one.
  std::optional<std::size_t> placeholder_index() const {
    if (kind_ == SpaceKind::min_zero) return n_;
    return std::nullopt;
  }

  Vec forward(std::span<const double> x) const {
    require_length(x.size(), n_, "Space::forward");
    Vec z(dim_);
    switch (kind_) {
      case SpaceKind::time:
        std::copy(x.begin(), x.end(), z.begin());
        break;
      case SpaceKind::frequency:
        dft_->forward(x, z);
        break;
      case SpaceKind::time_frequency: {
        const std::size_t w = params_.frame_len;
        for (std::size_t f = 0; f < n_ / w; ++f)
          dft_->forward(x.subspan(f * w, w), std::span<double>(z).subspan(f * w, w));
        break;
      }
      case SpaceKind::min_zero: {
        const double lo = *std::min_element(x.begin(), x.end());
        for (std::size_t i = 0; i < n_; ++i) z[i] = x[i] - lo;
        z[n_] = lo;
        break;
      }
      case SpaceKind::difference:
        z[0] = x[0];
        for (std::size_t i = 1; i < n_; ++i) z[i] = x[i] - x[i - 1];
        break;
      case SpaceKind::decomposition: {
        const auto comps = ssa_decompose(x, params_.window, params_.components);
        for (std::size_t k = 0; k < comps.size(); ++k)
          std::copy(comps[k].begin(), comps[k].end(), z.begin() + static_cast<std::ptrdiff_t>(k * n_));
        break;
      }
    }
    return z;
  }

  Vec forward(const Series& s) const { return forward(std::span<const double>(s.values)); }

  Vec inverse(std::span<const double> z) const {
    require_length(z.size(), dim_, "Space::inverse");
    Vec x(n_);
    switch (kind_) {
      case SpaceKind::time:
        std::copy(z.begin(), z.end(), x.begin());
        break;
      case SpaceKind::frequency:
        dft_->inverse(z, x);
        break;
      case SpaceKind::time_frequency: {
        const std::size_t w = params_.frame_len;
        for (std::size_t f = 0; f < n_ / w; ++f)
          dft_->inverse(z.subspan(f * w, w), std::span<double>(x).subspan(f * w, w));
        break;
      }
      case SpaceKind::min_zero:
        for (std::size_t i = 0; i < n_; ++i) x[i] = z[i] + z[n_];
        break;
      case SpaceKind::difference: {
        double acc = 0.0;
        for (std::size_t i = 0; i < n_; ++i) {
          acc += z[i];
          x[i] = acc;
        }
        break;
      }
      case SpaceKind::decomposition:
        for (std::size_t k = 0; k < params_.components; ++k)
          for (std::size_t i = 0; i < n_; ++i) x[i] += z[k * n_ + i];
        break;
    }
    return x;
  }

  /// Transpose action of the inverse operator: maps a time-domain gradient g
  /// (length N) to the explanation-space gradient A g (length dim).
  Vec pullback(std::span<const double> g) const {
    require_length(g.size(), n_, "Space::pullback");
    Vec out(dim_);
    switch (kind_) {
      case SpaceKind::time:
        std::copy(g.begin(), g.end(), out.begin());
        break;
      case SpaceKind::frequency:
        dft_->inverse_transpose(g, out);
        break;
      case SpaceKind::time_frequency: {
        const std::size_t w = params_.frame_len;
        for (std::size_t f = 0; f < n_ / w; ++f)
          dft_->inverse_transpose(g.subspan(f * w, w), std::span<double>(out).subspan(f * w, w));
        break;
      }
      case SpaceKind::min_zero: {
        double total = 0.0;
        for (std::size_t i = 0; i < n_; ++i) {
          out[i] = g[i];
          total += g[i];
        }
        out[n_] = total;
        break;
      }
      case SpaceKind::difference: {
        // Reverse cumulative sum.
        double acc = 0.0;
        for (std::size_t i = n_; i-- > 0;) {
          acc += g[i];
          out[i] = acc;
        }
        break;
      }
      case SpaceKind::decomposition:
        for (std::size_t k = 0; k < params_.components; ++k)
          std::copy(g.begin(), g.end(), out.begin() + static_cast<std::ptrdiff_t>(k * n_));
        break;
    }
    return out;
  }

  /// Dense form of the inverse operator in row-vector convention: a
  /// dim x N matrix A (row-major, one inner vector per row) with
  /// F^-1(z) = z^T A.
  std::vector<Vec> inverse_matrix() const {
    std::vector<Vec> a(dim_, Vec(n_, 0.0));
    switch (kind_) {
      case SpaceKind::min_zero:
        for (std::size_t i = 0; i < n_; ++i) a[i][i] = 1.0;
        std::fill(a[n_].begin(), a[n_].end(), 1.0);
        break;
      case SpaceKind::difference:
        for (std::size_t i = 0; i < n_; ++i)
          for (std::size_t j = i; j < n_; ++j) a[i][j] = 1.0;
        break;
      default: {
        Vec e(dim_, 0.0);
        for (std::size_t r = 0; r < dim_; ++r) {
          e[r] = 1.0;
          a[r] = inverse(e);
          e[r] = 0.0;
        }
        break;
      }
    }
    return a;
  }

  /// One human-readable label per explanation-space coordinate.
  std::vector<std::string> bin_labels() const {
    std::vector<std::string> labels;
    labels.reserve(dim_);
    auto freq_labels = [&labels](std::size_t len, const std::string& prefix) {
      labels.push_back(prefix + "f0:Re");
      for (std::size_t k = 1; k <= (len - 1) / 2; ++k) {
        labels.push_back(prefix + "f" + std::to_string(k) + ":Re");
        labels.push_back(prefix + "f" + std::to_string(k) + ":Im");
      }
      if (len % 2 == 0 && len > 1) labels.push_back(prefix + "f" + std::to_string(len / 2) + ":Re");
    };
    switch (kind_) {
      case SpaceKind::time:
      case SpaceKind::min_zero:
        for (std::size_t i = 0; i < n_; ++i) labels.push_back("t" + std::to_string(i));
        if (kind_ == SpaceKind::min_zero) labels.push_back("min-placeholder");
        break;
      case SpaceKind::difference:
        for (std::size_t i = 0; i < n_; ++i) labels.push_back("d" + std::to_string(i));
        break;
      case SpaceKind::frequency:
        freq_labels(n_, "");
        break;
      case SpaceKind::time_frequency:
        for (std::size_t f = 0; f < n_ / params_.frame_len; ++f)
          freq_labels(params_.frame_len, "w" + std::to_string(f) + ":");
        break;
      case SpaceKind::decomposition:
        for (std::size_t k = 0; k < params_.components; ++k)
          for (std::size_t i = 0; i < n_; ++i)
            labels.push_back("c" + std::to_string(k + 1) + ":t" + std::to_string(i));
        break;
    }
    return labels;
  }

 private:
  Space() = default;

  SpaceKind kind_ = SpaceKind::time;
  std::size_t n_ = 0;
  std::size_t dim_ = 0;
  SpaceParams params_;
  std::shared_ptr<const PackedDft> dft_;
};

inline Space make_space(SpaceKind kind, std::size_t input_len, SpaceParams params = {}) {
  return Space::make(kind, input_len, params);
}

// {"kind": "...", "input_len": N, "params": {...}}
inline nlohmann::json to_json(const Space& s) {
  nlohmann::json params = nlohmann::json::object();
  if (s.kind() == SpaceKind::time_frequency) params["frame_len"] = s.params().frame_len;
  if (s.kind() == SpaceKind::decomposition) {
    params["window"] = s.params().window;
    params["components"] = s.params().components;
  }
  return {{"kind", to_string(s.kind())}, {"input_len", s.input_len()}, {"params", params}};
}

/// Parses a space config. `default_len` fills in input_len when the
/// document omits it (experiment configs take N from the dataset).
inline Space space_from_json(const nlohmann::json& j, std::size_t default_len = 0) {
  try {
    const SpaceKind kind = parse_space_kind(j.at("kind").get<std::string>());
    const std::size_t n = j.contains("input_len") ? j.at("input_len").get<std::size_t>() : default_len;
    SpaceParams p;
    if (j.contains("params")) {
      const auto& pj = j.at("params");
      p.frame_len = pj.value("frame_len", std::size_t{0});
      p.window = pj.value("window", std::size_t{0});
      p.components = pj.value("components", std::size_t{0});
    }
    return Space::make(kind, n, p);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::invalid_params, std::string("bad space config: ") + e.what());
  }
}

}  // namespace xspace
