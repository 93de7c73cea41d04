// Command-line front end: synth, train, explain, evaluate, report.
// Exit codes: 0 success, 1 usage error, 2 data or model error.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>

#include "xspace/experiment.hpp"

namespace {

namespace fs = std::filesystem;
using namespace xspace;

std::vector<std::string> names_of(auto&& range) {
  std::vector<std::string> out;
  for (auto v : range) out.emplace_back(to_string(v));
  return out;
}

struct SynthArgs {
  std::string kind, out, spec;
  std::uint64_t seed = 0;
  std::optional<std::size_t> n_samples, length;
  std::optional<double> noise;
};

int run_synth(const SynthArgs& a) {
  nlohmann::json j = nlohmann::json::object();
  if (!a.spec.empty()) {
    std::ifstream in(a.spec);
    require(static_cast<bool>(in), Errc::io_error, "cannot open " + a.spec);
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::invalid_spec, a.spec + ": " + e.what());
    }
  }
  if (!a.kind.empty()) j["kind"] = a.kind;
  j["seed"] = a.seed;
  if (a.n_samples) j["n_samples"] = *a.n_samples;
  if (a.length) j["length"] = *a.length;
  if (a.noise) j["noise_sigma"] = *a.noise;
  const SynthSpec spec = synth_spec_from_json(j);
  const SynthData d = synth_dataset(spec);
  fs::create_directories(a.out);
  save_ucr_tsv(d.train, (fs::path(a.out) / "train.tsv").string());
  save_ucr_tsv(d.test, (fs::path(a.out) / "test.tsv").string());
  std::ofstream(fs::path(a.out) / "spec.json") << to_json(spec).dump(2) << '\n';
  std::cout << "wrote " << d.train.size() << " train and " << d.test.size() << " test series to " << a.out << '\n';
  return 0;
}

struct TrainArgs {
  std::string data, arch = "conv", out, validation;
  TrainConfig cfg;
  std::string optimizer = "adam";
};

int run_train(TrainArgs a) {
  const Dataset data = load_ucr_tsv(a.data);
  a.cfg.optimizer = a.optimizer == "sgd" ? Optimizer::sgd : Optimizer::adam;
  std::optional<Dataset> val;
  if (!a.validation.empty()) val = load_ucr_tsv(a.validation);
  const TrainResult r = train(data, arch_preset(a.arch), a.cfg, val ? &*val : nullptr);
  save_model(r.model, a.out);
  std::cout << "train accuracy " << r.train_accuracy;
  if (val) std::cout << ", validation accuracy " << r.validation_accuracy;
  std::cout << "\nsaved " << a.out << '\n';
  return 0;
}

struct ExplainArgs {
  std::string model, data, space = "time", method = "saliency", out, plot_dir, calibration = "auto";
  SpaceParams params;
  std::size_t limit = 0;
  std::uint64_t seed = 0;
  std::string head = "probability";
};

int run_explain(const ExplainArgs& a) {
  const Model model = load_model(a.model);
  const Dataset data = load_ucr_tsv(a.data);
  const std::size_t n = data.series_length();
  require(model.input_len() == n, Errc::shape_mismatch,
          "model expects length " + std::to_string(model.input_len()) + ", data has " + std::to_string(n));
  const Space space = make_space(parse_space_kind(a.space), n, a.params);
  const WrappedClassifier clf(model, space, a.head == "logit" ? Head::logit : Head::probability);
  const MethodId method = parse_method(a.method);
  const CalibrationMode mode = a.calibration == "always" ? CalibrationMode::always
                               : a.calibration == "never" ? CalibrationMode::never
                                                          : CalibrationMode::automatic;
  const bool calibrate = should_calibrate(mode, space.kind(), method);
  const auto labels = space.bin_labels();

  std::ofstream out(a.out);
  require(static_cast<bool>(out), Errc::io_error, "cannot write " + a.out);
  write_attribution_csv_header(out);
  if (!a.plot_dir.empty()) fs::create_directories(a.plot_dir);
  const std::size_t count = a.limit ? std::min(a.limit, data.size()) : data.size();
  for (std::size_t s = 0; s < count; ++s) {
    const Vec z = space.forward(data.samples[s]);
    MethodConfig mc;
    mc.seed = mix_seed(a.seed, 2 * s);
    const std::size_t c = detail::argmax(clf.predict(z));
    Attribution attr = explain(method, clf, z, c, mc);
    if (calibrate) attr = calibrate_decomposition(clf, z, c, attr);
    write_attribution_csv_rows(out, s, attr, labels);
    if (!a.plot_dir.empty()) {
      const auto path = fs::path(a.plot_dir) / (a.space + "_" + a.method + "_" + std::to_string(s) + ".svg");
      emit_attribution_plot(data.samples[s].values, space, attr, path.string());
    }
  }
  require(static_cast<bool>(out), Errc::io_error, "failed writing " + a.out);
  std::cout << "explained " << count << " series in " << a.space << " space with " << a.method << '\n';
  return 0;
}

int run_evaluate(const std::string& config, const std::string& out_dir) {
  const ExperimentConfig cfg = load_experiment_config(config);
  const ExperimentResult r = run_experiment(cfg, {fs::path(out_dir)});
  std::cout << "evaluated " << r.samples << " samples (accuracy " << r.test_accuracy << "), "
            << r.report.rows.size() << " rows\n";
  write_report_markdown(r.report, std::cout);
  return 0;
}

int run_report(const std::string& in_path, const std::string& format, const std::string& out) {
  std::ifstream in(in_path);
  require(static_cast<bool>(in), Errc::io_error, "cannot open " + in_path);
  const ExperimentReport r = read_report_csv(in);
  const ReportFormat f = format == "csv" ? ReportFormat::csv : ReportFormat::markdown;
  if (!out.empty()) {
    emit_report(r, f, out);
  } else if (f == ReportFormat::csv) {
    write_report_csv(r, std::cout);
  } else {
    write_report_markdown(r, std::cout);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attribution in alternative explanation spaces for time series classifiers"};
  app.set_version_flag("--version", std::string("xspace ") + XSPACE_VERSION);
  app.require_subcommand(1);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset as train.tsv/test.tsv");
  synth->add_option("--kind", sa.kind, "Dataset kind")
      ->check(CLI::IsMember({"freq_disc", "event_level", "nonstationary_shapelet", "trend_season_shapelet"}));
  synth->add_option("--out", sa.out, "Output directory")->required();
  synth->add_option("--seed", sa.seed, "Random seed");
  synth->add_option("--n-samples", sa.n_samples, "Number of series");
  synth->add_option("--length", sa.length, "Series length");
  synth->add_option("--noise", sa.noise, "Noise standard deviation");
  synth->add_option("--spec", sa.spec, "JSON file with further generator parameters")->check(CLI::ExistingFile);

  TrainArgs ta;
  auto* trn = app.add_subcommand("train", "Train a classifier on a UCR-format file");
  trn->add_option("--data", ta.data, "Training data (tsv or csv)")->required();
  trn->add_option("--arch", ta.arch, "Architecture preset")->check(CLI::IsMember({"linear", "mlp", "conv", "resnet"}));
  trn->add_option("--out", ta.out, "Model JSON output")->required();
  trn->add_option("--epochs", ta.cfg.epochs, "Training epochs")->check(CLI::PositiveNumber);
  trn->add_option("--seed", ta.cfg.seed, "Random seed");
  trn->add_option("--lr", ta.cfg.learning_rate, "Learning rate")->check(CLI::PositiveNumber);
  trn->add_option("--batch-size", ta.cfg.batch_size, "Minibatch size")->check(CLI::PositiveNumber);
  trn->add_option("--optimizer", ta.optimizer, "adam or sgd")->check(CLI::IsMember({"adam", "sgd"}));
  trn->add_option("--validation", ta.validation, "Optional held-out data");

  ExplainArgs ea;
  auto* expl = app.add_subcommand("explain", "Write attributions for every series in a file");
  expl->add_option("--model", ea.model, "Model JSON")->required();
  expl->add_option("--data", ea.data, "Series to explain")->required();
  expl->add_option("--space", ea.space, "Explanation space")->check(CLI::IsMember(names_of(kAllSpaceKinds)));
  expl->add_option("--method", ea.method, "Attribution method")->check(CLI::IsMember(names_of(kAllMethods)));
  expl->add_option("--out", ea.out, "Attribution CSV output")->required();
  expl->add_option("--frame-len", ea.params.frame_len, "time_frequency frame length");
  expl->add_option("--window", ea.params.window, "decomposition window");
  expl->add_option("--components", ea.params.components, "decomposition component groups");
  expl->add_option("--calibration", ea.calibration, "auto, always or never")
      ->check(CLI::IsMember({"auto", "always", "never"}));
  expl->add_option("--head", ea.head, "probability or logit")->check(CLI::IsMember({"probability", "logit"}));
  expl->add_option("--limit", ea.limit, "Explain only the first N series");
  expl->add_option("--seed", ea.seed, "Random seed for sampling methods");
  expl->add_option("--plot-dir", ea.plot_dir, "Also write one SVG per series here");

  std::string config, out_dir;
  auto* eval = app.add_subcommand("evaluate", "Run an experiment config and write reports");
  eval->add_option("--config", config, "Experiment JSON")->required();
  eval->add_option("--out-dir", out_dir, "Output directory")->required();

  std::string report_in, report_format = "markdown", report_out;
  auto* rep = app.add_subcommand("report", "Render a report.csv as csv or markdown");
  rep->add_option("--in", report_in, "report.csv")->required();
  rep->add_option("--format", report_format, "csv or markdown")->check(CLI::IsMember({"csv", "markdown", "md"}));
  rep->add_option("--out", report_out, "Output file (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*synth) return run_synth(sa);
    if (*trn) return run_train(ta);
    if (*expl) return run_explain(ea);
    if (*eval) return run_evaluate(config, out_dir);
    if (*rep) return run_report(report_in, report_format, report_out);
  } catch (const xspace::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
