#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "test_util.hpp"
#include "xml_check.hpp"
#include "xspace/experiment.hpp"

namespace xspace {
namespace {

namespace fs = std::filesystem;

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return Errc::invalid_params;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("xspace_harness_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

TEST(Synth, FreqDiscEnergySitsInItsBin) {
  SynthSpec spec;
  spec.kind = SynthKind::freq_disc;
  spec.noise_sigma = 0.0;
  spec.n_samples = 20;
  const SynthData d = synth_dataset(spec);
  const Space fs_ = make_space(SpaceKind::frequency, spec.length);
  for (const auto* part : {&d.train, &d.test}) {
    for (const auto& s : part->samples) {
      const Vec z = fs_.forward(s);
      const auto k = static_cast<std::size_t>(spec.frequencies[static_cast<std::size_t>(*s.label)]);
      double total = 0.0;
      for (double v : z) total += v * v;
      const double re = z[PackedDft::re_index(k)], im = z[PackedDft::im_index(k)];
      EXPECT_GE((re * re + im * im) / total, 0.99);
    }
  }
}

TEST(Synth, EventLevelRawHasSilentZeros) {
  SynthSpec spec;
  spec.kind = SynthKind::event_level;
  spec.n_samples = 30;
  const SynthData d = synth_dataset(spec);
  const Space mz = make_space(SpaceKind::min_zero, spec.length);
  for (std::size_t i = 0; i < d.train.size(); ++i) {
    const Vec& raw = d.train_truth[i].raw;
    EXPECT_EQ(*std::min_element(raw.begin(), raw.end()), 0.0);
    const Vec z = mz.forward(raw);
    EXPECT_EQ(z[*mz.placeholder_index()], 0.0);
    for (std::size_t t = 0; t < raw.size(); ++t)
      if (raw[t] == 0.0) {
        EXPECT_EQ(z[t], 0.0);
      }
    // The stored sample is the z-normalized raw series.
    EXPECT_NEAR(detail::mean(d.train.samples[i].values), 0.0, 1e-12);
  }
}

TEST(Synth, DeterministicAndSeedSensitive) {
  for (SynthKind k : {SynthKind::freq_disc, SynthKind::event_level, SynthKind::nonstationary_shapelet,
                      SynthKind::trend_season_shapelet}) {
    SynthSpec spec;
    spec.kind = k;
    spec.n_samples = 12;
    spec.seed = 9;
    const SynthData a = synth_dataset(spec), b = synth_dataset(spec);
    ASSERT_EQ(a.train.size(), b.train.size());
    for (std::size_t i = 0; i < a.train.size(); ++i) EXPECT_EQ(a.train.samples[i].values, b.train.samples[i].values);
    spec.seed = 10;
    EXPECT_NE(synth_dataset(spec).train.samples[0].values, a.train.samples[0].values);
  }
}

TEST(Synth, StratifiedEightyTwentySplit) {
  SynthSpec spec;
  spec.kind = SynthKind::trend_season_shapelet;
  spec.n_samples = 300;
  const SynthData d = synth_dataset(spec);
  EXPECT_EQ(d.test.size(), 60u);
  EXPECT_EQ(d.train.size(), 240u);
  std::vector<int> per(3, 0);
  for (const auto& s : d.test.samples) ++per[static_cast<std::size_t>(*s.label)];
  EXPECT_EQ(per, (std::vector<int>{20, 20, 20}));
}

TEST(Synth, ShapeletTruthMatchesSeries) {
  SynthSpec spec;
  spec.kind = SynthKind::trend_season_shapelet;
  spec.n_samples = 30;
  const SynthData d = synth_dataset(spec);
  for (std::size_t i = 0; i < d.train.size(); ++i) {
    const auto& t = d.train_truth[i];
    const Vec& x = d.train.samples[i].values;
    for (std::size_t j = 0; j < x.size(); ++j) {
      const bool inside = j >= t.shapelet_start && j < t.shapelet_start + t.shapelet_len;
      if (!inside) {
        EXPECT_NEAR(x[j], t.clean[j], 1e-12);
      }
    }
    EXPECT_EQ(t.shapelet_len == 0, *d.train.samples[i].label == 2);
  }
}

TEST(Synth, InvalidSpecs) {
  SynthSpec s;
  s.n_samples = 1;
  EXPECT_EQ(code_of([&] { synth_dataset(s); }), Errc::invalid_spec);
  s = {};
  s.length = 8;
  EXPECT_EQ(code_of([&] { synth_dataset(s); }), Errc::invalid_spec);
  s = {};
  s.frequencies = {5.0, 70.0};
  EXPECT_EQ(code_of([&] { synth_dataset(s); }), Errc::invalid_spec);
  EXPECT_EQ(code_of([] { synth_spec_from_json({{"kind", "sawtooth"}}); }), Errc::invalid_spec);
  EXPECT_EQ(code_of([] { synth_spec_from_json({{"kind", "freq_disc"}, {"length", "long"}}); }), Errc::invalid_spec);
}

TEST(Synth, JsonRoundTrip) {
  SynthSpec s;
  s.kind = SynthKind::nonstationary_shapelet;
  s.walk_sigma = 0.01;
  s.level_sigma = 0.5;
  s.seed = 42;
  const SynthSpec back = synth_spec_from_json(to_json(s));
  EXPECT_EQ(to_json(back), to_json(s));
}

TEST(Ucr, ParsesTabsAndRemapsLabels) {
  std::istringstream in("1\t0.5\t0.7\n2\t0.1\t0.2");
  const Dataset d = parse_ucr(in);
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d.series_length(), 2u);
  EXPECT_EQ(*d.samples[0].label, 0);
  EXPECT_EQ(*d.samples[1].label, 1);
  EXPECT_EQ(d.samples[0].values, (Vec{0.5, 0.7}));
}

TEST(Ucr, CommasSortedLabelsAndBlankLines) {
  std::istringstream in("3,1,2,3\n\n-1,4,5,6\r\n3,7,8,9\n");
  const Dataset d = parse_ucr(in);
  ASSERT_EQ(d.size(), 3u);
  EXPECT_EQ(*d.samples[0].label, 1);
  EXPECT_EQ(*d.samples[1].label, 0);
  EXPECT_EQ(d.samples[1].values, (Vec{4.0, 5.0, 6.0}));
}

TEST(Ucr, Errors) {
  std::istringstream ragged("1\t0.5\t0.7\n2\t0.1");
  EXPECT_EQ(code_of([&] { parse_ucr(ragged); }), Errc::ragged_rows);
  std::istringstream empty("");
  EXPECT_EQ(code_of([&] { parse_ucr(empty); }), Errc::empty_file);
  std::istringstream blank("\n  \n");
  EXPECT_EQ(code_of([&] { parse_ucr(blank); }), Errc::empty_file);
  std::istringstream text("1\t0.5\tabc\n");
  EXPECT_EQ(code_of([&] { parse_ucr(text); }), Errc::non_numeric);
  EXPECT_EQ(code_of([] { load_ucr_tsv("/nonexistent/file.tsv"); }), Errc::io_error);
}

TEST(Ucr, SaveLoadRoundTrip) {
  const fs::path dir = fresh_dir("ucr");
  Dataset d;
  d.samples.push_back({{0.1, -2.5, 1e-17}, 0, ""});
  d.samples.push_back({{3.0, 0.0, 7.25}, 1, ""});
  save_ucr_tsv(d, (dir / "d.tsv").string());
  const Dataset back = load_ucr_tsv((dir / "d.tsv").string());
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back.samples[0].values, d.samples[0].values);
  EXPECT_EQ(*back.samples[1].label, 1);
}

TEST(Report, Cells) {
  ReportRow r;
  r.faithfulness_pct = 88.0;
  r.sparsity = 0.87;
  EXPECT_EQ(report_cell(r), "88% (0.87)");
  r.faithfulness_pct = 45.0;
  r.sparsity = suppress_sparsity(45.0, 0.9);
  EXPECT_EQ(report_cell(r), "45% (-)");
  EXPECT_EQ(suppress_sparsity(50.0, 0.25), 0.25);
}

TEST(Report, EmptyIsHeaderOnly) {
  std::ostringstream md, csv;
  write_report_markdown({}, md);
  write_report_csv({}, csv);
  EXPECT_EQ(md.str(), "| Dataset | Space |\n|---|---|\n");
  EXPECT_EQ(csv.str(), std::string(kReportCsvHeader) + "\n");
}

TEST(Report, CsvRoundTrip) {
  ExperimentReport r;
  ReportRow a;
  a.dataset = "d";
  a.space = "time";
  a.method = "saliency";
  a.faithfulness_pct = 62.5;
  a.sparsity = 0.123456789;
  a.cls_robustness = 1e-3;
  a.xai_robustness = 2e-4;
  a.shannon_entropy = 3.5;
  r.rows.push_back(a);
  a.method = "lime";
  a.sparsity.reset();
  a.shannon_entropy.reset();
  r.rows.push_back(a);
  std::ostringstream out;
  write_report_csv(r, out);
  std::istringstream in(out.str());
  const ExperimentReport back = read_report_csv(in);
  ASSERT_EQ(back.rows.size(), 2u);
  EXPECT_EQ(*back.rows[0].sparsity, 0.123456789);
  EXPECT_FALSE(back.rows[1].sparsity);
  EXPECT_FALSE(back.rows[1].shannon_entropy);
  std::ostringstream again;
  write_report_csv(back, again);
  EXPECT_EQ(again.str(), out.str());
  std::istringstream bad("dataset,space\n");
  EXPECT_EQ(code_of([&] { read_report_csv(bad); }), Errc::malformed_file);
}

TEST(Report, EmitToUnwritablePathFails) {
  EXPECT_EQ(code_of([] { emit_report({}, ReportFormat::csv, "/nonexistent/dir/r.csv"); }), Errc::io_error);
}

Attribution attribution_in(const Space& s, Vec scores) {
  return Attribution{std::move(scores), s.id(), MethodId::saliency, 0};
}

std::vector<std::string> fills(const std::string& svg) {
  std::vector<std::string> out;
  for (std::size_t p = svg.find("<rect"); p != std::string::npos; p = svg.find("<rect", p + 1)) {
    const std::size_t f = svg.find("fill=\"", p) + 6;
    out.push_back(svg.substr(f, 7));
  }
  return out;
}

TEST(Plot, ZeroAttributionIsUniform) {
  const Space s = make_space(SpaceKind::time, 16);
  std::mt19937_64 rng(1);
  const std::string svg = attribution_svg(testing::random_vec(rng, 16), s, attribution_in(s, Vec(16, 0.0)));
  const auto f = fills(svg);
  ASSERT_EQ(f.size(), 16u);
  for (const auto& c : f) EXPECT_EQ(c, "#ffffff");
  EXPECT_TRUE(testing::well_formed_xml(svg));
}

TEST(Plot, OneHotGivesSingleSaturatedBand) {
  const Space s = make_space(SpaceKind::frequency, 16);
  std::mt19937_64 rng(2);
  Vec scores(s.dim(), 0.0);
  scores[5] = -3.0;
  const std::string svg = attribution_svg(testing::random_vec(rng, 16), s, attribution_in(s, scores));
  const auto f = fills(svg);
  // Frequency has no time-aligned strip: one placeholder rect, then one cell per coordinate.
  ASSERT_EQ(f.size(), 1u + s.dim());
  for (std::size_t i = 0; i < s.dim(); ++i) EXPECT_EQ(f[1 + i], i == 5 ? "#0000ff" : "#ffffff");
  EXPECT_NE(svg.find("<title>f3:Re</title>"), std::string::npos);
  EXPECT_TRUE(testing::well_formed_xml(svg));
}

TEST(Plot, DifferenceOverlayMapsScoreToTimeStep) {
  const Space s = make_space(SpaceKind::difference, 10);
  Vec scores(10, 0.0);
  scores[7] = 1.0;
  const std::string svg = attribution_svg(Vec(10, 1.0), s, attribution_in(s, scores));
  const auto f = fills(svg);
  ASSERT_EQ(f.size(), 20u);
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(f[i], i == 7 ? "#ff0000" : "#ffffff");
    EXPECT_EQ(f[10 + i], f[i]);
  }
  PlotOptions no_overlay;
  no_overlay.overlay_difference = false;
  EXPECT_EQ(fills(attribution_svg(Vec(10, 1.0), s, attribution_in(s, scores), no_overlay)).size(), 11u);
}

TEST(Plot, EverySpaceIsWellFormed) {
  std::mt19937_64 rng(3);
  for (SpaceKind k : kAllSpaceKinds) {
    const Space s = make_space(k, 24, {8, 6, 3});
    const std::string svg =
        attribution_svg(testing::random_vec(rng, 24), s, attribution_in(s, testing::random_vec(rng, s.dim())));
    EXPECT_TRUE(testing::well_formed_xml(svg)) << to_string(k);
  }
  const Space s = make_space(SpaceKind::time, 4);
  EXPECT_EQ(code_of([&] { attribution_svg(Vec(4, 0.0), s, attribution_in(s, Vec(3, 0.0))); }),
            Errc::length_mismatch);
  EXPECT_EQ(code_of([&] { emit_attribution_plot(Vec(4, 0.0), s, attribution_in(s, Vec(4, 0.0)), "/nonexistent/a.svg"); }),
            Errc::io_error);
}

nlohmann::json small_config() {
  return {
      {"dataset", {{"synth", {{"kind", "freq_disc"}, {"n_samples", 20}, {"length", 32}, {"seed", 1}}}}},
      {"model", {{"arch", "linear"}, {"train", {{"epochs", 3}}}}},
      {"spaces", {"time"}},
      {"methods", {"saliency"}},
      {"sample_limit", 2},
      {"seed", 5},
  };
}

TEST(Experiment, OneRowWithCountedFaithfulness) {
  const ExperimentResult r = run_experiment(experiment_config_from_json(small_config()));
  ASSERT_EQ(r.report.rows.size(), 1u);
  const double f = r.report.rows[0].faithfulness_pct;
  EXPECT_TRUE(f == 0.0 || f == 50.0 || f == 100.0);
  EXPECT_EQ(r.report.rows[0].dataset, "freq_disc");
  EXPECT_EQ(r.samples, 2u);
}

TEST(Experiment, RowCountIsSpacesTimesMethods) {
  auto j = small_config();
  j["spaces"] = {"time", "frequency", {{"kind", "decomposition"}, {"params", {{"window", 8}, {"components", 3}}}}};
  j["methods"] = {"saliency", "occlusion"};
  j["name"] = "toy";
  const ExperimentReport r = run_experiment(experiment_config_from_json(j)).report;
  ASSERT_EQ(r.rows.size(), 6u);
  EXPECT_EQ(r.rows[4].space, "decomposition");
  EXPECT_EQ(r.rows[4].method, "saliency");
  EXPECT_EQ(r.rows[0].dataset, "toy");
  for (const auto& row : r.rows) {
    EXPECT_GE(row.cls_robustness, 0.0);
    EXPECT_GE(row.xai_robustness, 0.0);
  }
}

TEST(Experiment, CalibrationOnlyForBackpropInDecomposition) {
  EXPECT_TRUE(should_calibrate(CalibrationMode::automatic, SpaceKind::decomposition, MethodId::deeplift));
  EXPECT_FALSE(should_calibrate(CalibrationMode::automatic, SpaceKind::decomposition, MethodId::occlusion));
  EXPECT_FALSE(should_calibrate(CalibrationMode::automatic, SpaceKind::time, MethodId::deeplift));
  EXPECT_TRUE(should_calibrate(CalibrationMode::always, SpaceKind::decomposition, MethodId::kernel_shap));
  EXPECT_FALSE(should_calibrate(CalibrationMode::never, SpaceKind::decomposition, MethodId::saliency));

  auto j = small_config();
  j["spaces"] = {{{"kind", "decomposition"}, {"params", {{"window", 8}, {"components", 3}}}}};
  j["methods"] = {"input_x_gradient"};
  const auto with = run_experiment(experiment_config_from_json(j)).report.rows.at(0);
  j["calibration"] = "never";
  const auto without = run_experiment(experiment_config_from_json(j)).report.rows.at(0);
  EXPECT_NE(with.xai_robustness, without.xai_robustness);
}

TEST(Experiment, OutputsAreByteIdenticalOnRerun) {
  auto j = small_config();
  j["spaces"] = {"time", "min_zero"};
  j["methods"] = {"gradient_shap", "lime"};
  const ExperimentConfig cfg = experiment_config_from_json(j);
  const fs::path a = fresh_dir("run_a"), b = fresh_dir("run_b");
  run_experiment(cfg, {a});
  run_experiment(cfg, {b});
  std::size_t files = 0;
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    ++files;
    const fs::path rel = fs::relative(entry.path(), a);
    EXPECT_EQ(slurp(entry.path()), slurp(b / rel)) << rel;
  }
  // report.csv, report.md, 4 attribution CSVs, 2 plots for each of 4 pairs.
  EXPECT_EQ(files, 14u);
  EXPECT_TRUE(fs::exists(a / "plots" / "min_zero_lime_1.svg"));
  EXPECT_TRUE(testing::well_formed_xml(slurp(a / "plots" / "time_gradient_shap_0.svg")));
}

TEST(Experiment, SavedModelAndUcrFiles) {
  const fs::path dir = fresh_dir("ucr_run");
  SynthSpec spec;
  spec.n_samples = 20;
  spec.length = 32;
  const SynthData d = synth_dataset(spec);
  save_ucr_tsv(d.train, (dir / "train.tsv").string());
  save_ucr_tsv(d.test, (dir / "test.tsv").string());
  TrainConfig tc;
  tc.epochs = 2;
  save_model(train(d.train, arch_preset("linear"), tc).model, (dir / "m.json").string());
  const nlohmann::json j = {{"dataset", {{"test", "test.tsv"}}},
                            {"model", {{"path", "m.json"}}},
                            {"spaces", {"frequency"}},
                            {"methods", {"deeplift"}}};
  const ExperimentReport r = run_experiment(experiment_config_from_json(j, dir)).report;
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_EQ(r.rows[0].dataset, "test");
}

TEST(Experiment, InvalidConfigs) {
  auto j = small_config();
  j["methods"] = nlohmann::json::array();
  EXPECT_EQ(code_of([&] { experiment_config_from_json(j); }), Errc::config_invalid);
  j = small_config();
  j["spaces"] = nlohmann::json::array();
  EXPECT_EQ(code_of([&] { experiment_config_from_json(j); }), Errc::config_invalid);
  j = small_config();
  j["methods"] = {"magic"};
  EXPECT_EQ(code_of([&] { experiment_config_from_json(j); }), Errc::config_invalid);
  j = small_config();
  j["spaces"] = {"time", "time"};
  EXPECT_EQ(code_of([&] { experiment_config_from_json(j); }), Errc::config_invalid);
  j = small_config();
  j.erase("model");
  EXPECT_EQ(code_of([&] { experiment_config_from_json(j); }), Errc::config_invalid);
  j = small_config();
  j["sparsity"] = {{"beta", 0.5}};
  EXPECT_EQ(code_of([&] { experiment_config_from_json(j); }), Errc::config_invalid);
  j = small_config();
  j["calibration"] = "sometimes";
  EXPECT_EQ(code_of([&] { experiment_config_from_json(j); }), Errc::config_invalid);
  EXPECT_EQ(code_of([] { load_experiment_config("/nonexistent/cfg.json"); }), Errc::io_error);
}

TEST(Experiment, ErrorsCarryContext) {
  auto j = small_config();
  j["methods"] = {"occlusion"};
  j["method_config"] = {{"occlusion_window", 64}};
  try {
    run_experiment(experiment_config_from_json(j));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::window_too_large);
    EXPECT_NE(std::string(e.what()).find("space time, method occlusion, sample 0"), std::string::npos) << e.what();
  }
  j = small_config();
  j["spaces"] = {{{"kind", "decomposition"}, {"params", {{"window", 40}, {"components", 2}}}}};
  try {
    run_experiment(experiment_config_from_json(j));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::invalid_params);
    EXPECT_NE(std::string(e.what()).find("space decomposition"), std::string::npos) << e.what();
  }
  j = small_config();
  j["model"] = {{"path", "/nonexistent/model.json"}};
  EXPECT_EQ(code_of([&] { run_experiment(experiment_config_from_json(j)); }), Errc::io_error);
}

TEST(Experiment, ModelLengthMustMatchDataset) {
  const fs::path dir = fresh_dir("mismatch");
  std::mt19937_64 rng(4);
  save_model(testing::random_model(rng, 16), (dir / "m.json").string());
  auto j = small_config();
  j["model"] = {{"path", (dir / "m.json").string()}};
  EXPECT_EQ(code_of([&] { run_experiment(experiment_config_from_json(j)); }), Errc::shape_mismatch);
}

}  // namespace
}  // namespace xspace
