#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "xspace/model.hpp"
#include "xspace/series.hpp"

namespace xspace {

/// Shape-only description of one layer; parameters are drawn by build_model.
/// `units` is dense outputs or conv channels_out; 0 on a dense layer means
/// "number of classes".
struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::size_t units = 0;
  std::size_t kernel_len = 0;
  std::size_t skip = 0;
};

using Arch = std::vector<LayerSpec>;

/// Named desk-scale architectures: linear, mlp, conv, resnet.
inline Arch arch_preset(const std::string& name) {
  using K = LayerKind;
  if (name == "linear") return {{K::dense}};
  if (name == "mlp") return {{K::dense, 32}, {K::relu}, {K::dense}};
  if (name == "conv") {
    return {{K::conv1d, 8, 7}, {K::relu}, {K::conv1d, 8, 5}, {K::relu}, {K::global_avg_pool}, {K::dense}};
  }
  if (name == "resnet") {
    return {{K::conv1d, 8, 7},
            {K::batch_norm_inference},
            {K::relu},
            {K::conv1d, 8, 5},
            {K::batch_norm_inference},
            {K::relu},
            {K::conv1d, 8, 3},
            {K::batch_norm_inference},
            {K::residual_add, 0, 0, 3},
            {K::relu},
            {K::global_avg_pool},
            {K::dense}};
  }
  throw Error(Errc::invalid_params, "unknown architecture preset '" + name + "'");
}

inline Arch arch_from_json(const nlohmann::json& j) {
  if (j.is_string()) return arch_preset(j.get<std::string>());
  Arch arch;
  try {
    for (const auto& l : j) {
      LayerSpec s;
      s.kind = parse_layer_kind(l.at("kind").get<std::string>());
      s.units = l.value("units", l.value("channels_out", std::size_t{0}));
      s.kernel_len = l.value("kernel_len", std::size_t{0});
      s.skip = l.value("skip", std::size_t{0});
      arch.push_back(s);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::invalid_params, std::string("bad architecture: ") + e.what());
  }
  return arch;
}

/// Instantiates an architecture with He-normal weights and zero biases.
inline Model build_model(const Arch& arch, std::size_t input_len, std::size_t num_classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Layer> layers;
  Shape shape{1, input_len};
  auto draw = [&rng](std::size_t count, double sd) {
    std::normal_distribution<double> d(0.0, sd);
    Vec v(count);
    for (double& x : v) x = d(rng);
    return v;
  };
  for (const LayerSpec& s : arch) {
    switch (s.kind) {
      case LayerKind::dense: {
        const std::size_t out = s.units == 0 ? num_classes : s.units;
        const std::size_t in = shape.size();
        layers.push_back(Layer::dense(in, out, draw(in * out, std::sqrt(2.0 / static_cast<double>(in))), Vec(out, 0.0)));
        shape = Shape{out, 1};
        break;
      }
      case LayerKind::conv1d: {
        require(s.units >= 1 && s.kernel_len >= 1, Errc::invalid_params, "conv1d needs units and kernel_len");
        const std::size_t fan_in = shape.channels * s.kernel_len;
        layers.push_back(Layer::conv1d(shape.channels, s.units, s.kernel_len,
                                       draw(s.units * fan_in, std::sqrt(2.0 / static_cast<double>(fan_in))),
                                       Vec(s.units, 0.0)));
        shape = Shape{s.units, shape.length};
        break;
      }
      case LayerKind::batch_norm_inference:
        layers.push_back(Layer::batch_norm(Vec(shape.channels, 1.0), Vec(shape.channels, 0.0),
                                           Vec(shape.channels, 0.0), Vec(shape.channels, 1.0)));
        break;
      case LayerKind::global_avg_pool:
        layers.push_back(Layer::global_avg_pool());
        shape = Shape{shape.channels, 1};
        break;
      case LayerKind::residual_add:
        layers.push_back(Layer::residual_add(s.skip));
        break;
      case LayerKind::relu:
        layers.push_back(Layer::relu());
        break;
      case LayerKind::softmax:
        layers.push_back(Layer::softmax());
        break;
    }
  }
  return Model(input_len, num_classes, std::move(layers));
}

enum class Optimizer { sgd, adam };

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  double learning_rate = 1e-2;
  std::uint64_t seed = 0;
  Optimizer optimizer = Optimizer::adam;

  void validate() const {
    require(epochs >= 1, Errc::invalid_params, "epochs must be >= 1");
    require(batch_size >= 1, Errc::invalid_params, "batch_size must be >= 1");
    require(learning_rate > 0.0, Errc::invalid_params, "learning_rate must be > 0");
  }
};

struct TrainResult {
  Model model;
  double train_accuracy = 0.0;
  double validation_accuracy = std::numeric_limits<double>::quiet_NaN();
};

inline double accuracy(const Model& m, const Dataset& data) {
  if (data.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::size_t hits = 0;
  for (const auto& s : data.samples) {
    if (static_cast<int>(detail::argmax(m.logits(s.values))) == s.label.value_or(-1)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

namespace detail {

// Sets every batch-norm layer's mean/var to the statistics of its input over
// the training set, layer by layer so later layers see normalized inputs.
inline void refresh_batch_norm(Model& m, const Dataset& data) {
  auto& layers = m.mutable_layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].kind != LayerKind::batch_norm_inference) continue;
    const Shape s = m.shapes()[i];
    Vec sum(s.channels, 0.0), sq(s.channels, 0.0);
    for (const auto& sample : data.samples) {
      const Trace t = m.trace(sample.values, i);
      const Vec& a = t.acts[i];
      for (std::size_t c = 0; c < s.channels; ++c)
        for (std::size_t k = 0; k < s.length; ++k) {
          const double v = a[c * s.length + k];
          sum[c] += v;
          sq[c] += v * v;
        }
    }
    const double count = static_cast<double>(data.size() * s.length);
    for (std::size_t c = 0; c < s.channels; ++c) {
      const double mu = sum[c] / count;
      layers[i].mean[c] = mu;
      layers[i].var[c] = std::max(sq[c] / count - mu * mu, 0.0);
    }
  }
}

struct AdamSlot {
  Vec m, v;
};

}  // namespace detail

/// Minibatch training of softmax cross-entropy. Batch-norm statistics are
/// re-estimated from the training set before every epoch and once more at
/// the end, then frozen. Single-threaded and bit-reproducible for a seed.
inline TrainResult train(const Dataset& data, const Arch& arch, const TrainConfig& cfg,
                         const Dataset* validation = nullptr) {
  cfg.validate();
  require(!data.empty(), Errc::empty_dataset, "training set is empty");
  const std::size_t n = data.series_length();
  const int classes = data.num_classes();
  for (const auto& s : data.samples) {
    require(s.label.has_value() && *s.label >= 0, Errc::invalid_params, "training sample without a valid label");
  }
  require(classes >= 2, Errc::invalid_params, "training needs at least two classes");

  Model model = build_model(arch, n, static_cast<std::size_t>(classes), cfg.seed);
  std::mt19937_64 rng(mix_seed(cfg.seed, 1));
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  auto& layers = model.mutable_layers();
  std::vector<std::vector<detail::AdamSlot>> slots(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    for (const Vec* p : {&layers[i].weight, &layers[i].bias, &layers[i].gamma, &layers[i].beta}) {
      slots[i].push_back({Vec(p->size(), 0.0), Vec(p->size(), 0.0)});
    }
  }
  constexpr double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    detail::refresh_batch_norm(model, data);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      ParamGrads grads = model.zero_grads();
      for (std::size_t b = start; b < stop; ++b) {
        const Series& s = data.samples[order[b]];
        const Trace t = model.trace(s.values);
        Vec up = detail::softmax(t.logits());
        up[static_cast<std::size_t>(*s.label)] -= 1.0;
        model.backward(t, up, BackwardRule::gradient, nullptr, 0.0, &grads);
      }
      const double scale = 1.0 / static_cast<double>(stop - start);
      ++step;
      const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      for (std::size_t i = 0; i < layers.size(); ++i) {
        Vec* params[] = {&layers[i].weight, &layers[i].bias, &layers[i].gamma, &layers[i].beta};
        const Vec* g[] = {&grads.weight[i], &grads.bias[i], &grads.gamma[i], &grads.beta[i]};
        for (std::size_t p = 0; p < 4; ++p) {
          Vec& w = *params[p];
          auto& slot = slots[i][p];
          for (std::size_t j = 0; j < w.size(); ++j) {
            const double gj = (*g[p])[j] * scale;
            if (cfg.optimizer == Optimizer::sgd) {
              w[j] -= cfg.learning_rate * gj;
            } else {
              slot.m[j] = beta1 * slot.m[j] + (1.0 - beta1) * gj;
              slot.v[j] = beta2 * slot.v[j] + (1.0 - beta2) * gj * gj;
              w[j] -= cfg.learning_rate * (slot.m[j] / c1) / (std::sqrt(slot.v[j] / c2) + adam_eps);
            }
          }
        }
      }
    }
  }
  detail::refresh_batch_norm(model, data);
  model.validate();

  TrainResult result{std::move(model), 0.0, std::numeric_limits<double>::quiet_NaN()};
  result.train_accuracy = accuracy(result.model, data);
  if (validation != nullptr && !validation->empty()) result.validation_accuracy = accuracy(result.model, *validation);
  return result;
}

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"seed", c.seed},
          {"optimizer", c.optimizer == Optimizer::adam ? "adam" : "sgd"}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.seed = j.value("seed", c.seed);
  const std::string opt = j.value("optimizer", std::string("adam"));
  require(opt == "adam" || opt == "sgd", Errc::invalid_params, "optimizer must be adam or sgd");
  c.optimizer = opt == "adam" ? Optimizer::adam : Optimizer::sgd;
  return c;
}

}  // namespace xspace
