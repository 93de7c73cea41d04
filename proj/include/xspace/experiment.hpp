#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xspace/attribution.hpp"
#include "xspace/classifier.hpp"
#include "xspace/error.hpp"
#include "xspace/metrics.hpp"
#include "xspace/model.hpp"
#include "xspace/plot.hpp"
#include "xspace/report.hpp"
#include "xspace/space.hpp"
#include "xspace/synth.hpp"
#include "xspace/train.hpp"
#include "xspace/ucr.hpp"

namespace xspace {

enum class CalibrationMode { automatic, always, never };

/// A space entry before the dataset length is known.
struct SpaceConfig {
  SpaceKind kind = SpaceKind::time;
  SpaceParams params;
};

struct ExperimentConfig {
  std::string name;  // dataset column of the report; defaults to the synth kind or test file stem

  // Exactly one dataset source: a synthetic spec or UCR files.
  std::optional<SynthSpec> synth;
  std::string train_path;
  std::string test_path;

  // Either a saved model or an architecture trained on the training split.
  std::string model_path;
  Arch arch;
  TrainConfig train;
  Head head = Head::probability;

  std::vector<SpaceConfig> spaces;
  std::vector<MethodId> methods;
  MethodConfig method_config;
  RobustnessConfig robustness;
  FaithfulnessConfig faithfulness;
  SparsityConfig sparsity;
  CalibrationMode calibration = CalibrationMode::automatic;
  bool clamp_drops = false;

  std::size_t sample_limit = 100;
  std::uint64_t seed = 0;
  std::size_t plots_per_pair = 2;  // SVGs written per (space, method)

  void validate() const {
    require(!spaces.empty(), Errc::config_invalid, "spaces must not be empty");
    require(!methods.empty(), Errc::config_invalid, "methods must not be empty");
    require(synth.has_value() != !test_path.empty(), Errc::config_invalid,
            "dataset needs exactly one of a synth spec or a test path");
    require(!model_path.empty() || !arch.empty(), Errc::config_invalid, "model needs a path or an architecture");
    require(!model_path.empty() || synth || !train_path.empty(), Errc::config_invalid,
            "training a model needs a train path");
    require(sample_limit >= 1, Errc::config_invalid, "sample_limit must be >= 1");
    for (std::size_t i = 0; i < spaces.size(); ++i)
      for (std::size_t j = 0; j < i; ++j)
        require(spaces[i].kind != spaces[j].kind, Errc::config_invalid,
                "space '" + std::string(to_string(spaces[i].kind)) + "' listed twice");
    try {
      method_config.validate();
      robustness.validate();
      faithfulness.validate();
      sparsity.validate();
      if (model_path.empty()) train.validate();
    } catch (const Error& e) {
      throw Error(Errc::config_invalid, e.what());
    }
  }
};

inline MethodConfig method_config_from_json(const nlohmann::json& j) {
  MethodConfig c;
  c.baseline = j.value("baseline", c.baseline);
  c.ig_steps = j.value("ig_steps", c.ig_steps);
  c.gs_samples = j.value("gs_samples", c.gs_samples);
  c.gs_noise_sigma = j.value("gs_noise_sigma", c.gs_noise_sigma);
  c.occlusion_window = j.value("occlusion_window", c.occlusion_window);
  c.occlusion_stride = j.value("occlusion_stride", c.occlusion_stride);
  c.shap_segments = j.value("shap_segments", c.shap_segments);
  c.shap_coalitions = j.value("shap_coalitions", c.shap_coalitions);
  c.lime_samples = j.value("lime_samples", c.lime_samples);
  c.lime_kernel_width = j.value("lime_kernel_width", c.lime_kernel_width);
  c.lime_ridge = j.value("lime_ridge", c.lime_ridge);
  c.deeplift_delta = j.value("deeplift_delta", c.deeplift_delta);
  c.seed = j.value("seed", c.seed);
  return c;
}

/// Parses an experiment document. Relative paths resolve against `base_dir`.
inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j,
                                                    const std::filesystem::path& base_dir = {}) {
  const auto resolve = [&](const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() || base_dir.empty() ? p : (base_dir / path).string();
  };
  ExperimentConfig c;
  try {
    require(j.is_object(), Errc::config_invalid, "experiment config must be a JSON object");
    c.name = j.value("name", std::string());
    const auto& data = j.at("dataset");
    if (data.contains("synth")) {
      c.synth = synth_spec_from_json(data.at("synth"));
    } else {
      c.test_path = resolve(data.at("test").get<std::string>());
      if (data.contains("train")) c.train_path = resolve(data.at("train").get<std::string>());
    }
    const auto& model = j.at("model");
    if (model.contains("path")) c.model_path = resolve(model.at("path").get<std::string>());
    if (model.contains("arch")) c.arch = arch_from_json(model.at("arch"));
    if (model.contains("train")) c.train = train_config_from_json(model.at("train"));
    const std::string head = model.value("head", std::string("probability"));
    require(head == "probability" || head == "logit", Errc::config_invalid, "head must be probability or logit");
    c.head = head == "logit" ? Head::logit : Head::probability;

    for (const auto& s : j.at("spaces")) {
      SpaceConfig sc;
      if (s.is_string()) {
        sc.kind = parse_space_kind(s.get<std::string>());
      } else {
        sc.kind = parse_space_kind(s.at("kind").get<std::string>());
        const auto& p = s.contains("params") ? s.at("params") : s;
        sc.params.frame_len = p.value("frame_len", std::size_t{0});
        sc.params.window = p.value("window", std::size_t{0});
        sc.params.components = p.value("components", std::size_t{0});
      }
      c.spaces.push_back(sc);
    }
    for (const auto& m : j.at("methods")) c.methods.push_back(parse_method(m.get<std::string>()));
    if (j.contains("method_config")) c.method_config = method_config_from_json(j.at("method_config"));
    if (j.contains("robustness")) {
      const auto& r = j.at("robustness");
      c.robustness.lambda = r.value("lambda", c.robustness.lambda);
      c.robustness.num_perturbations = r.value("num_perturbations", c.robustness.num_perturbations);
    }
    if (j.contains("faithfulness")) {
      const auto& f = j.at("faithfulness");
      c.faithfulness.threshold_eps = f.value("threshold_eps", c.faithfulness.threshold_eps);
      c.faithfulness.mask_value = f.value("mask_value", c.faithfulness.mask_value);
    }
    if (j.contains("sparsity")) c.sparsity.beta = j.at("sparsity").value("beta", c.sparsity.beta);
    const std::string cal = j.value("calibration", std::string("auto"));
    require(cal == "auto" || cal == "always" || cal == "never", Errc::config_invalid,
            "calibration must be auto, always or never");
    c.calibration = cal == "auto" ? CalibrationMode::automatic
                    : cal == "always" ? CalibrationMode::always
                                      : CalibrationMode::never;
    c.clamp_drops = j.value("clamp_drops", c.clamp_drops);
    c.sample_limit = j.value("sample_limit", c.sample_limit);
    c.seed = j.value("seed", c.seed);
    c.plots_per_pair = j.value("plots_per_pair", c.plots_per_pair);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::config_invalid, std::string("bad experiment config: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == Errc::config_invalid) throw;
    throw Error(Errc::config_invalid, e.what());
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), Errc::io_error, "cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::config_invalid, path + ": " + e.what());
  }
  return experiment_config_from_json(j, std::filesystem::path(path).parent_path());
}

inline bool should_calibrate(CalibrationMode mode, SpaceKind kind, MethodId method) {
  if (kind != SpaceKind::decomposition || mode == CalibrationMode::never) return false;
  return mode == CalibrationMode::always || is_backprop_method(method);
}

/// Where run_experiment writes per-sample artifacts; empty skips them.
struct ExperimentOutputs {
  std::filesystem::path dir;
};

struct ExperimentResult {
  ExperimentReport report;
  double test_accuracy = 0.0;  // over the evaluated samples
  std::size_t samples = 0;
};

namespace detail {

struct LoadedData {
  Dataset train, test;
  std::string name;
};

inline LoadedData load_experiment_data(const ExperimentConfig& cfg) {
  LoadedData d;
  if (cfg.synth) {
    SynthData s = synth_dataset(*cfg.synth);
    d.train = std::move(s.train);
    d.test = std::move(s.test);
    d.name = std::string(to_string(cfg.synth->kind));
  } else {
    d.test = load_ucr_tsv(cfg.test_path);
    if (!cfg.train_path.empty()) d.train = load_ucr_tsv(cfg.train_path);
    d.name = std::filesystem::path(cfg.test_path).stem().string();
  }
  if (!cfg.name.empty()) d.name = cfg.name;
  return d;
}

template <class F>
auto with_context(const std::string& where, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(e.code(), where + ": " + e.what());
  }
}

}  // namespace detail

/// Evaluates every (space, method) pair on the first sample_limit test
/// samples. Each sample draws its own seeds from (seed, sample index), so the
/// result does not depend on evaluation order.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const ExperimentOutputs& out = {}) {
  cfg.validate();
  detail::LoadedData data = detail::load_experiment_data(cfg);
  const std::size_t n = data.test.series_length();

  Model model = [&] {
    if (!cfg.model_path.empty()) return load_model(cfg.model_path);
    TrainConfig tc = cfg.train;
    if (tc.seed == 0) tc.seed = cfg.seed;
    return train(data.train, cfg.arch, tc).model;
  }();
  require(model.input_len() == n, Errc::shape_mismatch,
          "model expects length " + std::to_string(model.input_len()) + ", dataset has " + std::to_string(n));

  const std::size_t count = std::min(cfg.sample_limit, data.test.size());
  ExperimentResult result;
  result.samples = count;
  {
    std::size_t hits = 0;
    for (std::size_t s = 0; s < count; ++s) {
      const auto& smp = data.test.samples[s];
      hits += smp.label && static_cast<int>(detail::argmax(model.predict(smp.values))) == *smp.label;
    }
    result.test_accuracy = static_cast<double>(hits) / static_cast<double>(count);
  }

  if (!out.dir.empty()) {
    std::filesystem::create_directories(out.dir / "attributions");
    std::filesystem::create_directories(out.dir / "plots");
  }

  for (const auto& sc : cfg.spaces) {
    const std::string space_name(to_string(sc.kind));
    const Space space = detail::with_context("space " + space_name, [&] { return make_space(sc.kind, n, sc.params); });
    const WrappedClassifier clf(model, space, cfg.head);
    const auto labels = space.bin_labels();

    std::vector<Vec> points(count);
    std::vector<double> cls_rob(count);
    for (std::size_t s = 0; s < count; ++s) {
      points[s] = space.forward(data.test.samples[s].values);
      RobustnessConfig rc = cfg.robustness;
      rc.seed = mix_seed(cfg.seed, 2 * s + 1);
      cls_rob[s] = detail::with_context("space " + space_name + ", sample " + std::to_string(s),
                                        [&] { return classifier_robustness(clf, points[s], rc); });
    }

    for (MethodId method : cfg.methods) {
      const std::string method_name(to_string(method));
      const bool calibrate = should_calibrate(cfg.calibration, sc.kind, method);
      std::ofstream csv;
      if (!out.dir.empty()) {
        const auto path = out.dir / "attributions" / (space_name + "_" + method_name + ".csv");
        csv.open(path);
        require(static_cast<bool>(csv), Errc::io_error, "cannot write " + path.string());
        write_attribution_csv_header(csv);
      }

      std::size_t flips = 0, entropy_n = 0;
      double spars = 0.0, xai_rob = 0.0, entropy = 0.0;
      for (std::size_t s = 0; s < count; ++s) {
        const std::string where =
            "space " + space_name + ", method " + method_name + ", sample " + std::to_string(s);
        detail::with_context(where, [&] {
          const Vec& z = points[s];
          MethodConfig mc = cfg.method_config;
          mc.seed = mix_seed(cfg.seed, 2 * s);
          const auto explainer = [&](std::span<const double> point, std::size_t c) {
            Attribution a = explain(method, clf, point, c, mc);
            if (calibrate) a = calibrate_decomposition(clf, point, c, a, {cfg.clamp_drops});
            return a;
          };
          const std::size_t c = detail::argmax(clf.predict(z));
          const Attribution a = explainer(z, c);

          flips += faithfulness_flip(clf, z, a.scores, cfg.faithfulness);
          spars += sparsity(a.scores, space, cfg.sparsity);
          bool nonzero = false;
          for (double v : a.scores) nonzero |= v != 0.0;
          if (nonzero) {
            entropy += shannon_entropy(a.scores);
            ++entropy_n;
          }
          RobustnessConfig rc = cfg.robustness;
          rc.seed = mix_seed(cfg.seed, 2 * s + 1);
          xai_rob += xai_robustness(
              clf, z, [&](std::span<const double> p, std::size_t k) { return explainer(p, k).scores; }, rc);

          if (csv.is_open()) write_attribution_csv_rows(csv, s, a, labels);
          if (!out.dir.empty() && s < cfg.plots_per_pair) {
            const auto path =
                out.dir / "plots" / (space_name + "_" + method_name + "_" + std::to_string(s) + ".svg");
            emit_attribution_plot(data.test.samples[s].values, space, a, path.string());
          }
          return 0;
        });
      }

      const double denom = static_cast<double>(count);
      ReportRow row;
      row.dataset = data.name;
      row.space = space_name;
      row.method = method_name;
      row.faithfulness_pct = 100.0 * static_cast<double>(flips) / denom;
      row.sparsity = suppress_sparsity(row.faithfulness_pct, spars / denom);
      double cls_total = 0.0;
      for (double v : cls_rob) cls_total += v;
      row.cls_robustness = cls_total / denom;
      row.xai_robustness = xai_rob / denom;
      if (entropy_n > 0) row.shannon_entropy = entropy / static_cast<double>(entropy_n);
      row.beta = cfg.sparsity.beta;
      row.eps = cfg.faithfulness.threshold_eps;
      row.lambda = cfg.robustness.lambda;
      result.report.rows.push_back(std::move(row));
    }
  }

  if (!out.dir.empty()) {
    emit_report(result.report, ReportFormat::csv, (out.dir / "report.csv").string());
    emit_report(result.report, ReportFormat::markdown, (out.dir / "report.md").string());
  }
  return result;
}

}  // namespace xspace
