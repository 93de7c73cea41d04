#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "xspace/error.hpp"
#include "xspace/series.hpp"

namespace xspace {

enum class LayerKind { dense, conv1d, relu, global_avg_pool, residual_add, batch_norm_inference, softmax };

inline std::string_view to_string(LayerKind k) {
  switch (k) {
    case LayerKind::dense: return "dense";
    case LayerKind::conv1d: return "conv1d";
    case LayerKind::relu: return "relu";
    case LayerKind::global_avg_pool: return "global_avg_pool";
    case LayerKind::residual_add: return "residual_add";
    case LayerKind::batch_norm_inference: return "batch_norm_inference";
    case LayerKind::softmax: return "softmax";
  }
  return "dense";
}

inline LayerKind parse_layer_kind(std::string_view s) {
  for (LayerKind k : {LayerKind::dense, LayerKind::conv1d, LayerKind::relu, LayerKind::global_avg_pool,
                      LayerKind::residual_add, LayerKind::batch_norm_inference, LayerKind::softmax}) {
    if (to_string(k) == s) return k;
  }
  throw Error(Errc::unsupported_layer, "unknown layer kind '" + std::string(s) + "'");
}

/// Activation shape, channel-major: element (c, t) lives at c * length + t.
struct Shape {
  std::size_t channels = 1;
  std::size_t length = 1;
  std::size_t size() const noexcept { return channels * length; }
  bool operator==(const Shape&) const = default;
};

/// One layer of a feed-forward graph. Fields not used by `kind` stay empty.
///
/// dense:   weight is out x in (row-major), bias has out entries; the input is
///          flattened and the output has shape (out, 1).
/// conv1d:  weight is out x in x kernel_len, stride 1, same padding with
///          (kernel_len - 1) / 2 zeros on the left.
/// batch_norm_inference: y = gamma (x - mean) / sqrt(var + eps) + beta per channel.
/// residual_add: adds activation `skip` (0 = model input, i = output of layer i - 1).
/// softmax: only allowed as the last layer; it marks the probability head that
///          predict() always applies.
struct Layer {
  LayerKind kind = LayerKind::relu;
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t kernel_len = 0;
  Vec weight;
  Vec bias;
  Vec gamma, beta, mean, var;
  double eps = 1e-5;
  std::size_t skip = 0;

  static Layer dense(std::size_t in, std::size_t out, Vec weight, Vec bias) {
    Layer l;
    l.kind = LayerKind::dense;
    l.in = in;
    l.out = out;
    l.weight = std::move(weight);
    l.bias = std::move(bias);
    return l;
  }
  static Layer conv1d(std::size_t in, std::size_t out, std::size_t kernel_len, Vec weight, Vec bias) {
    Layer l;
    l.kind = LayerKind::conv1d;
    l.in = in;
    l.out = out;
    l.kernel_len = kernel_len;
    l.weight = std::move(weight);
    l.bias = std::move(bias);
    return l;
  }
  static Layer relu() { return Layer{}; }
  static Layer global_avg_pool() {
    Layer l;
    l.kind = LayerKind::global_avg_pool;
    return l;
  }
  static Layer residual_add(std::size_t skip) {
    Layer l;
    l.kind = LayerKind::residual_add;
    l.skip = skip;
    return l;
  }
  static Layer batch_norm(Vec gamma, Vec beta, Vec mean, Vec var, double eps = 1e-5) {
    Layer l;
    l.kind = LayerKind::batch_norm_inference;
    l.gamma = std::move(gamma);
    l.beta = std::move(beta);
    l.mean = std::move(mean);
    l.var = std::move(var);
    l.eps = eps;
    return l;
  }
  static Layer softmax() {
    Layer l;
    l.kind = LayerKind::softmax;
    return l;
  }
};

/// Which scalar of the classifier output an explanation targets.
enum class Head { probability, logit };

/// Per-layer gradients of trainable parameters, aligned with Model::layers().
struct ParamGrads {
  std::vector<Vec> weight, bias, gamma, beta;
};

/// Backward rule applied at ReLU units; every other layer is linear in its
/// input and propagates by its transpose under all rules.
enum class BackwardRule {
  gradient,  // d relu = 1[in > 0]
  guided,    // 1[in > 0] * 1[upstream > 0]
  rescale,   // DeepLIFT Rescale: delta_out / delta_in against a reference trace
};

namespace detail {

inline Vec softmax(std::span<const double> logits) {
  Vec p(logits.begin(), logits.end());
  const double hi = *std::max_element(p.begin(), p.end());
  double total = 0.0;
  for (double& v : p) {
    v = std::exp(v - hi);
    total += v;
  }
  for (double& v : p) v /= total;
  return p;
}

// d p_c / d logits = p_c (e_c - p).
inline Vec softmax_row_gradient(std::span<const double> p, std::size_t c) {
  Vec g(p.size());
  for (std::size_t j = 0; j < p.size(); ++j) g[j] = p[c] * ((j == c ? 1.0 : 0.0) - p[j]);
  return g;
}

// Average of d p_c / d logits along the segment from ref to cur, by composite
// 8-point Gauss-Legendre quadrature. Used as the multi-input analogue of the
// Rescale rule at the softmax head; exact path averages satisfy
// summation-to-delta by the fundamental theorem of calculus.
inline Vec softmax_path_gradient(std::span<const double> cur, std::span<const double> ref, std::size_t c) {
  static constexpr std::array<double, 8> nodes = {-0.9602898564975363, -0.7966664774136267, -0.5255324099163290,
                                                  -0.1834346424956498, 0.1834346424956498,  0.5255324099163290,
                                                  0.7966664774136267,  0.9602898564975363};
  static constexpr std::array<double, 8> weights = {0.1012285362903763, 0.2223810344533745, 0.3137066458778873,
                                                    0.3626837833783620, 0.3626837833783620, 0.3137066458778873,
                                                    0.2223810344533745, 0.1012285362903763};
  constexpr int panels = 16;
  const std::size_t k = cur.size();
  Vec avg(k, 0.0), point(k);
  for (int p = 0; p < panels; ++p) {
    const double a = static_cast<double>(p) / panels;
    const double half = 0.5 / panels;
    for (std::size_t q = 0; q < nodes.size(); ++q) {
      const double t = a + half * (nodes[q] + 1.0);
      for (std::size_t j = 0; j < k; ++j) point[j] = ref[j] + t * (cur[j] - ref[j]);
      const Vec g = softmax_row_gradient(softmax(point), c);
      for (std::size_t j = 0; j < k; ++j) avg[j] += half * weights[q] * g[j];
    }
  }
  return avg;
}

inline void check_finite(std::span<const double> v, std::string_view what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw Error(Errc::non_finite, std::string(what) + " produced a non-finite value");
  }
}

}  // namespace detail

/// Activations of one forward pass: acts[0] is the input, acts[i + 1] the
/// output of layer i. The last entry holds the logits.
struct Trace {
  std::vector<Vec> acts;
  const Vec& logits() const { return acts.back(); }
};

/// A feed-forward classifier over series of length input_len producing
/// num_classes logits. predict() applies softmax to the logits.
///
/// Immutable in use; training mutates parameters through mutable_layers()
/// without changing shapes.
class Model {
 public:
  Model() = default;
  Model(std::size_t input_len, std::size_t num_classes, std::vector<Layer> layers)
      : input_len_(input_len), num_classes_(num_classes), layers_(std::move(layers)) {
    validate();
  }

  std::size_t input_len() const noexcept { return input_len_; }
  std::size_t num_classes() const noexcept { return num_classes_; }
  const std::vector<Layer>& layers() const noexcept { return layers_; }
  std::vector<Layer>& mutable_layers() noexcept { return layers_; }
  const std::vector<Shape>& shapes() const noexcept { return shapes_; }

  Trace trace(std::span<const double> x, std::size_t upto = static_cast<std::size_t>(-1)) const {
    require_length(x.size(), input_len_, "Model::trace");
    const std::size_t count = std::min(upto, layers_.size());
    Trace t;
    t.acts.reserve(count + 1);
    t.acts.emplace_back(x.begin(), x.end());
    for (std::size_t i = 0; i < count; ++i) t.acts.push_back(apply(i, t.acts));
    return t;
  }

  Vec logits(std::span<const double> x) const {
    Trace t = trace(x);
    detail::check_finite(t.logits(), "Model::logits");
    return std::move(t.acts.back());
  }

  Vec predict(std::span<const double> x) const { return detail::softmax(logits(x)); }

  /// Backpropagates `upstream` (a cotangent on the logits) to the input.
  ///
  /// With BackwardRule::rescale, `reference` must be the trace of the
  /// baseline input; ReLU units whose input moved by at most `delta` fall
  /// back to their local gradient. When `grads` is given, parameter
  /// gradients are accumulated into it.
  Vec backward(const Trace& trace, std::span<const double> upstream, BackwardRule rule,
               const Trace* reference = nullptr, double delta = 1e-7, ParamGrads* grads = nullptr) const {
    require_length(upstream.size(), num_classes_, "Model::backward");
    require(rule != BackwardRule::rescale || reference != nullptr, Errc::invalid_params,
            "rescale rule needs a reference trace");
    std::vector<Vec> g(layers_.size() + 1);
    for (std::size_t i = 0; i <= layers_.size(); ++i) g[i].assign(shapes_[i].size(), 0.0);
    std::copy(upstream.begin(), upstream.end(), g.back().begin());

    for (std::size_t i = layers_.size(); i-- > 0;) {
      const Layer& l = layers_[i];
      const Vec& in = trace.acts[i];
      const Vec& go = g[i + 1];
      Vec& gi = g[i];
      const Shape& si = shapes_[i];
      switch (l.kind) {
        case LayerKind::dense:
          for (std::size_t o = 0; o < l.out; ++o) {
            const double* w = &l.weight[o * l.in];
            const double u = go[o];
            if (u == 0.0) continue;
            for (std::size_t j = 0; j < l.in; ++j) gi[j] += w[j] * u;
          }
          if (grads) {
            Vec& dw = grads->weight[i];
            for (std::size_t o = 0; o < l.out; ++o) {
              for (std::size_t j = 0; j < l.in; ++j) dw[o * l.in + j] += go[o] * in[j];
              grads->bias[i][o] += go[o];
            }
          }
          break;
        case LayerKind::conv1d: {
          const std::size_t len = si.length, k = l.kernel_len, pad = (k - 1) / 2;
          for (std::size_t o = 0; o < l.out; ++o) {
            for (std::size_t c = 0; c < l.in; ++c) {
              const double* w = &l.weight[(o * l.in + c) * k];
              for (std::size_t q = 0; q < k; ++q) {
                double dw = 0.0;
                for (std::size_t t = 0; t < len; ++t) {
                  const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t + q) - static_cast<std::ptrdiff_t>(pad);
                  if (s < 0 || s >= static_cast<std::ptrdiff_t>(len)) continue;
                  const double u = go[o * len + t];
                  gi[c * len + static_cast<std::size_t>(s)] += w[q] * u;
                  dw += u * in[c * len + static_cast<std::size_t>(s)];
                }
                if (grads) grads->weight[i][(o * l.in + c) * k + q] += dw;
              }
            }
            if (grads) {
              for (std::size_t t = 0; t < len; ++t) grads->bias[i][o] += go[o * len + t];
            }
          }
          break;
        }
        case LayerKind::relu:
          for (std::size_t j = 0; j < in.size(); ++j) {
            double m = in[j] > 0.0 ? 1.0 : 0.0;
            if (rule == BackwardRule::guided && go[j] <= 0.0) m = 0.0;
            if (rule == BackwardRule::rescale) {
              const double r = reference->acts[i][j];
              const double d = in[j] - r;
              if (std::abs(d) > delta) m = (std::max(in[j], 0.0) - std::max(r, 0.0)) / d;
            }
            gi[j] += m * go[j];
          }
          break;
        case LayerKind::global_avg_pool: {
          const double inv = 1.0 / static_cast<double>(si.length);
          for (std::size_t c = 0; c < si.channels; ++c)
            for (std::size_t t = 0; t < si.length; ++t) gi[c * si.length + t] += go[c] * inv;
          break;
        }
        case LayerKind::residual_add:
          for (std::size_t j = 0; j < go.size(); ++j) {
            gi[j] += go[j];
            g[l.skip][j] += go[j];
          }
          break;
        case LayerKind::batch_norm_inference:
          for (std::size_t c = 0; c < si.channels; ++c) {
            const double inv_std = 1.0 / std::sqrt(l.var[c] + l.eps);
            const double a = l.gamma[c] * inv_std;
            for (std::size_t t = 0; t < si.length; ++t) {
              const std::size_t j = c * si.length + t;
              gi[j] += a * go[j];
              if (grads) {
                grads->gamma[i][c] += go[j] * (in[j] - l.mean[c]) * inv_std;
                grads->beta[i][c] += go[j];
              }
            }
          }
          break;
        case LayerKind::softmax:
          for (std::size_t j = 0; j < go.size(); ++j) gi[j] += go[j];
          break;
      }
    }
    return std::move(g[0]);
  }

  ParamGrads zero_grads() const {
    ParamGrads pg;
    for (const Layer& l : layers_) {
      pg.weight.emplace_back(l.weight.size(), 0.0);
      pg.bias.emplace_back(l.bias.size(), 0.0);
      pg.gamma.emplace_back(l.gamma.size(), 0.0);
      pg.beta.emplace_back(l.beta.size(), 0.0);
    }
    return pg;
  }

  /// Checks that layer shapes chain, parameter sizes match, and all
  /// parameters are finite. Throws shape_mismatch / non_finite.
  void validate() {
    shapes_.clear();
    require(input_len_ >= 1, Errc::shape_mismatch, "input_len must be positive");
    require(num_classes_ >= 1, Errc::shape_mismatch, "num_classes must be positive");
    shapes_.push_back(Shape{1, input_len_});
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const Layer& l = layers_[i];
      const Shape s = shapes_.back();
      const std::string at = "layer " + std::to_string(i) + " (" + std::string(to_string(l.kind)) + ")";
      auto need = [&](bool ok, const std::string& msg) { require(ok, Errc::shape_mismatch, at + ": " + msg); };
      switch (l.kind) {
        case LayerKind::dense:
          need(l.in == s.size(), "expects " + std::to_string(l.in) + " inputs, got " + std::to_string(s.size()));
          need(l.out >= 1, "needs at least one output");
          need(l.weight.size() == l.in * l.out, "weight size does not match out x in");
          need(l.bias.size() == l.out, "bias size does not match out");
          shapes_.push_back(Shape{l.out, 1});
          break;
        case LayerKind::conv1d:
          need(l.in == s.channels, "expects " + std::to_string(l.in) + " channels, got " + std::to_string(s.channels));
          need(l.out >= 1 && l.kernel_len >= 1, "needs positive channels_out and kernel_len");
          need(l.weight.size() == l.out * l.in * l.kernel_len, "weight size does not match out x in x kernel");
          need(l.bias.size() == l.out, "bias size does not match channels_out");
          shapes_.push_back(Shape{l.out, s.length});
          break;
        case LayerKind::relu:
          shapes_.push_back(s);
          break;
        case LayerKind::global_avg_pool:
          shapes_.push_back(Shape{s.channels, 1});
          break;
        case LayerKind::residual_add:
          need(l.skip <= i, "skip index must refer to an earlier activation");
          need(shapes_[l.skip] == s, "skip activation shape differs");
          shapes_.push_back(s);
          break;
        case LayerKind::batch_norm_inference:
          need(l.gamma.size() == s.channels && l.beta.size() == s.channels && l.mean.size() == s.channels &&
                   l.var.size() == s.channels,
               "per-channel parameter count differs from channel count");
          for (double v : l.var) need(v + l.eps > 0.0, "variance plus eps must be positive");
          shapes_.push_back(s);
          break;
        case LayerKind::softmax:
          need(i + 1 == layers_.size(), "softmax must be the last layer");
          shapes_.push_back(s);
          break;
      }
      for (const Vec* p : {&l.weight, &l.bias, &l.gamma, &l.beta, &l.mean, &l.var}) {
        for (double v : *p) require(std::isfinite(v), Errc::non_finite, at + ": parameter is not finite");
      }
    }
    require(shapes_.back().size() == num_classes_, Errc::shape_mismatch,
            "final layer outputs " + std::to_string(shapes_.back().size()) + " values, expected " +
                std::to_string(num_classes_));
  }

 private:
  Vec apply(std::size_t i, const std::vector<Vec>& acts) const {
    const Layer& l = layers_[i];
    const Vec& in = acts[i];
    const Shape& si = shapes_[i];
    Vec out(shapes_[i + 1].size(), 0.0);
    switch (l.kind) {
      case LayerKind::dense:
        for (std::size_t o = 0; o < l.out; ++o) {
          const double* w = &l.weight[o * l.in];
          double acc = l.bias[o];
          for (std::size_t j = 0; j < l.in; ++j) acc += w[j] * in[j];
          out[o] = acc;
        }
        break;
      case LayerKind::conv1d: {
        const std::size_t len = si.length, k = l.kernel_len, pad = (k - 1) / 2;
        for (std::size_t o = 0; o < l.out; ++o) {
          double* y = &out[o * len];
          std::fill(y, y + len, l.bias[o]);
          for (std::size_t c = 0; c < l.in; ++c) {
            const double* w = &l.weight[(o * l.in + c) * k];
            const double* x = &in[c * len];
            for (std::size_t q = 0; q < k; ++q) {
              const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(q) - static_cast<std::ptrdiff_t>(pad);
              const std::size_t t0 = shift < 0 ? static_cast<std::size_t>(-shift) : 0;
              const std::size_t t1 = shift > 0 ? len - static_cast<std::size_t>(shift) : len;
              for (std::size_t t = t0; t < t1; ++t) y[t] += w[q] * x[static_cast<std::ptrdiff_t>(t) + shift];
            }
          }
        }
        break;
      }
      case LayerKind::relu:
        for (std::size_t j = 0; j < in.size(); ++j) out[j] = std::max(in[j], 0.0);
        break;
      case LayerKind::global_avg_pool:
        for (std::size_t c = 0; c < si.channels; ++c) {
          double acc = 0.0;
          for (std::size_t t = 0; t < si.length; ++t) acc += in[c * si.length + t];
          out[c] = acc / static_cast<double>(si.length);
        }
        break;
      case LayerKind::residual_add:
        for (std::size_t j = 0; j < in.size(); ++j) out[j] = in[j] + acts[l.skip][j];
        break;
      case LayerKind::batch_norm_inference:
        for (std::size_t c = 0; c < si.channels; ++c) {
          const double a = l.gamma[c] / std::sqrt(l.var[c] + l.eps);
          for (std::size_t t = 0; t < si.length; ++t) {
            const std::size_t j = c * si.length + t;
            out[j] = a * (in[j] - l.mean[c]) + l.beta[c];
          }
        }
        break;
      case LayerKind::softmax:
        out = in;
        break;
    }
    return out;
  }

  std::size_t input_len_ = 0;
  std::size_t num_classes_ = 0;
  std::vector<Layer> layers_;
  std::vector<Shape> shapes_;
};

/// Cotangent on the logits selecting the target head at class c.
inline Vec head_cotangent(std::span<const double> logits, std::size_t c, Head head) {
  if (head == Head::logit) {
    Vec e(logits.size(), 0.0);
    e[c] = 1.0;
    return e;
  }
  return detail::softmax_row_gradient(detail::softmax(logits), c);
}

inline double head_value(std::span<const double> logits, std::size_t c, Head head) {
  return head == Head::logit ? logits[c] : detail::softmax(logits)[c];
}

// ---------------------------------------------------------------------------
// JSON model files.
//
// {"input_len": N, "num_classes": C, "layers": [{"kind": "dense",
//   "weight": [...], "weight_shape": [out, in], "bias": [...]}, ...]}

inline nlohmann::json to_json(const Model& m) {
  nlohmann::json layers = nlohmann::json::array();
  for (const Layer& l : m.layers()) {
    nlohmann::json j{{"kind", to_string(l.kind)}};
    switch (l.kind) {
      case LayerKind::dense:
        j["weight_shape"] = {l.out, l.in};
        j["weight"] = l.weight;
        j["bias"] = l.bias;
        break;
      case LayerKind::conv1d:
        j["weight_shape"] = {l.out, l.in, l.kernel_len};
        j["weight"] = l.weight;
        j["bias"] = l.bias;
        break;
      case LayerKind::batch_norm_inference:
        j["gamma"] = l.gamma;
        j["beta"] = l.beta;
        j["mean"] = l.mean;
        j["var"] = l.var;
        j["eps"] = l.eps;
        break;
      case LayerKind::residual_add:
        j["skip"] = l.skip;
        break;
      default:
        break;
    }
    layers.push_back(std::move(j));
  }
  return {{"input_len", m.input_len()}, {"num_classes", m.num_classes()}, {"layers", layers}};
}

inline Model model_from_json(const nlohmann::json& doc) {
  std::size_t n = 0, c = 0;
  std::vector<Layer> layers;
  try {
    n = doc.at("input_len").get<std::size_t>();
    c = doc.at("num_classes").get<std::size_t>();
    for (const auto& j : doc.at("layers")) {
      Layer l;
      l.kind = parse_layer_kind(j.at("kind").get<std::string>());
      if (l.kind == LayerKind::dense || l.kind == LayerKind::conv1d) {
        const auto shape = j.at("weight_shape").get<std::vector<std::size_t>>();
        const std::size_t rank = l.kind == LayerKind::dense ? 2 : 3;
        require(shape.size() == rank, Errc::shape_mismatch, "weight_shape has wrong rank");
        l.out = shape[0];
        l.in = shape[1];
        if (rank == 3) l.kernel_len = shape[2];
        l.weight = j.at("weight").get<Vec>();
        l.bias = j.at("bias").get<Vec>();
      } else if (l.kind == LayerKind::batch_norm_inference) {
        l.gamma = j.at("gamma").get<Vec>();
        l.beta = j.at("beta").get<Vec>();
        l.mean = j.at("mean").get<Vec>();
        l.var = j.at("var").get<Vec>();
        l.eps = j.value("eps", 1e-5);
      } else if (l.kind == LayerKind::residual_add) {
        l.skip = j.at("skip").get<std::size_t>();
      }
      layers.push_back(std::move(l));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::malformed_file, std::string("model document: ") + e.what());
  }
  return Model(n, c, std::move(layers));
}

inline void save_model(const Model& m, const std::string& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), Errc::io_error, "cannot open '" + path + "' for writing");
  out << to_json(m).dump() << '\n';
  require(static_cast<bool>(out), Errc::io_error, "write to '" + path + "' failed");
}

inline Model load_model(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), Errc::io_error, "cannot open model file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(buf.str());
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::malformed_file, "'" + path + "': " + e.what());
  }
  return model_from_json(doc);
}

}  // namespace xspace
