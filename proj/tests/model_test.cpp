#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "test_util.hpp"
#include "xspace/classifier.hpp"
#include "xspace/model.hpp"

namespace xspace {
namespace {

using testing::finite_difference;
using testing::random_model;
using testing::random_vec;
using testing::relative_error;
using testing::space_for;

Model linear_model(Vec weight, std::size_t classes, Vec bias = {}) {
  const std::size_t in = weight.size() / classes;
  if (bias.empty()) bias.assign(classes, 0.0);
  return Model(in, classes, {Layer::dense(in, classes, std::move(weight), std::move(bias))});
}

TEST(Predict, ZeroWeightsGiveUniform) {
  const Model m = linear_model(Vec(8, 0.0), 2);
  const Vec p = m.predict(Vec{0.3, -2, 5, 1});
  EXPECT_DOUBLE_EQ(p[0], 0.5);
  EXPECT_DOUBLE_EQ(p[1], 0.5);
}

TEST(Predict, SymmetricLogits) {
  const Model m = linear_model(Vec{1, -1}, 2);
  const Vec p = m.predict(Vec{0.0});
  EXPECT_DOUBLE_EQ(p[0], 0.5);
  EXPECT_DOUBLE_EQ(p[1], 0.5);
}

TEST(Predict, ClosedFormSoftmax) {
  // logits ln3/2 and -ln3/2: p0 = 1 / (1 + e^{-ln 3}) = 3/4.
  const Model m = linear_model(Vec{1, -1}, 2);
  const Vec p = m.predict(Vec{std::log(3.0) / 2.0});
  EXPECT_NEAR(p[0], 0.75, 1e-15);
  EXPECT_NEAR(p[1], 0.25, 1e-15);
}

TEST(Predict, Errors) {
  const Model m = linear_model(Vec{1, -1}, 2);
  try {
    m.predict(Vec{1.0, 2.0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::length_mismatch);
  }
  const Model huge = linear_model(Vec{1e308, -1e308}, 2);
  try {
    huge.predict(Vec{1e10});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::non_finite);
  }
}

TEST(Predict, ProbabilityVector) {
  std::mt19937_64 rng(1);
  for (int rep = 0; rep < 50; ++rep) {
    const Model m = random_model(rng, 12);
    const Vec p = m.predict(random_vec(rng, 12));
    double total = 0.0;
    for (double v : p) {
      EXPECT_GE(v, 0.0);
      total += v;
    }
    EXPECT_NEAR(total, 1.0, 1e-9);
  }
}

TEST(ModelShape, Validation) {
  EXPECT_THROW(Model(4, 2, {Layer::dense(3, 2, Vec(6, 0.0), Vec(2, 0.0))}), Error);
  EXPECT_THROW(Model(4, 3, {Layer::dense(4, 2, Vec(8, 0.0), Vec(2, 0.0))}), Error);
  EXPECT_THROW(Model(4, 2, {Layer::softmax(), Layer::dense(4, 2, Vec(8, 0.0), Vec(2, 0.0))}), Error);
  EXPECT_THROW(Model(4, 2, {Layer::dense(4, 2, Vec(8, NAN), Vec(2, 0.0))}), Error);
}

TEST(InputGradient, LinearSoftmaxClosedForm) {
  std::mt19937_64 rng(4);
  const std::size_t n = 5, classes = 3;
  const Vec w = random_vec(rng, n * classes);
  const Model m = linear_model(w, classes);
  const ModelClassifier clf(m);
  const Vec x = random_vec(rng, n);
  const Vec p = m.predict(x);
  for (std::size_t c = 0; c < classes; ++c) {
    const Vec g = clf.gradient(x, c);
    for (std::size_t i = 0; i < n; ++i) {
      double want = 0.0;
      for (std::size_t k = 0; k < classes; ++k) want += p[c] * ((k == c) - p[k]) * w[k * n + i];
      EXPECT_NEAR(g[i], want, 1e-14);
    }
  }
}

TEST(InputGradient, MatchesFiniteDifferences) {
  std::mt19937_64 rng(12);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t n = 6 + rep % 7;
    const Model m = random_model(rng, n);
    const ModelClassifier clf(m);
    const Vec x = random_vec(rng, n);
    const std::size_t c = static_cast<std::size_t>(rep) % 3;
    const Vec fd = finite_difference([&](const Vec& v) { return clf.value(v, c); }, x);
    EXPECT_LE(relative_error(clf.gradient(x, c), fd), 1e-4) << "rep " << rep;
  }
}

TEST(InputGradient, DeadReluGivesZero) {
  // Hidden unit pre-activation is -1 - x^2 < 0 for every input.
  const Model m(2, 2,
                {Layer::dense(2, 1, Vec{0.0, 0.0}, Vec{-1.0}), Layer::relu(),
                 Layer::dense(1, 2, Vec{1.0, -1.0}, Vec{0.0, 0.0})});
  const ModelClassifier clf(m);
  for (double v : clf.gradient(Vec{0.7, -3.0}, 0)) EXPECT_EQ(v, 0.0);
}

TEST(InputGradient, ClassGradientsSumToZero) {
  std::mt19937_64 rng(31);
  for (int rep = 0; rep < 30; ++rep) {
    const Model m = random_model(rng, 10);
    const ModelClassifier clf(m);
    const Vec x = random_vec(rng, 10);
    Vec total(10, 0.0);
    for (std::size_t c = 0; c < 3; ++c) {
      const Vec g = clf.gradient(x, c);
      for (std::size_t i = 0; i < 10; ++i) total[i] += g[i];
    }
    for (double v : total) EXPECT_NEAR(v, 0.0, 1e-9);
  }
}

TEST(InputGradient, RejectsBadClass) {
  const Model m = linear_model(Vec{1, -1}, 2);
  EXPECT_THROW(ModelClassifier(m).gradient(Vec{1.0}, 2), Error);
}

TEST(Wrap, TimeSpaceIsIdentity) {
  std::mt19937_64 rng(2);
  const Model m = random_model(rng, 16);
  const auto w = wrap(m, make_space(SpaceKind::time, 16));
  const Vec x = random_vec(rng, 16);
  EXPECT_EQ(w.predict(x), m.predict(x));
}

TEST(Wrap, PredictsLikeBaseInEverySpace) {
  std::mt19937_64 rng(21);
  for (SpaceKind kind : kAllSpaceKinds) {
    for (int rep = 0; rep < 20; ++rep) {
      const Model m = random_model(rng, 24);
      const auto w = wrap(m, space_for(kind, 24));
      const Vec x = random_vec(rng, 24);
      const Vec a = w.predict(w.space().forward(x)), b = m.predict(x);
      for (std::size_t c = 0; c < a.size(); ++c) EXPECT_NEAR(a[c], b[c], 1e-9) << to_string(kind);
    }
  }
}

TEST(Wrap, GradientMatchesFiniteDifferencesInZ) {
  std::mt19937_64 rng(23);
  for (SpaceKind kind : kAllSpaceKinds) {
    for (int rep = 0; rep < 10; ++rep) {
      const Model m = random_model(rng, 20);
      const auto w = wrap(m, space_for(kind, 20));
      const Vec z = w.space().forward(random_vec(rng, 20));
      const Vec fd = finite_difference([&](const Vec& v) { return w.value(v, 1); }, z);
      EXPECT_LE(relative_error(w.gradient(z, 1), fd), 1e-4) << to_string(kind);
    }
  }
}

TEST(Wrap, LengthMismatch) {
  const Model m = linear_model(Vec(8, 0.0), 2);
  EXPECT_THROW(wrap(m, make_space(SpaceKind::time, 5)), Error);
}

class ModelFile : public ::testing::Test {
 protected:
  std::filesystem::path dir = std::filesystem::temp_directory_path() / "xspace_model_test";
  void SetUp() override { std::filesystem::create_directories(dir); }
  void TearDown() override { std::filesystem::remove_all(dir); }
};

TEST_F(ModelFile, RoundTripPreservesPredictions) {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 8; ++rep) {
    const Model m = random_model(rng, 14);
    const auto path = (dir / "m.json").string();
    save_model(m, path);
    const Model back = load_model(path);
    const Vec x = random_vec(rng, 14);
    const Vec a = m.predict(x), b = back.predict(x);
    for (std::size_t c = 0; c < a.size(); ++c) EXPECT_NEAR(a[c], b[c], 1e-12);
  }
}

TEST_F(ModelFile, TruncatedIsMalformed) {
  std::mt19937_64 rng(6);
  const auto path = (dir / "m.json").string();
  save_model(random_model(rng, 8), path);
  std::string text;
  {
    std::ifstream in(path);
    std::getline(in, text);
  }
  {
    std::ofstream out(path, std::ios::trunc);
    out << text.substr(0, text.size() / 2);
  }
  try {
    load_model(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::malformed_file);
  }
}

TEST_F(ModelFile, ShapeMismatch) {
  auto doc = to_json(linear_model(Vec{1, 2, 3, 4}, 2));
  doc["layers"][0]["weight"] = Vec{1, 2, 3};
  try {
    model_from_json(doc);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::shape_mismatch);
  }
}

TEST_F(ModelFile, MissingFileIsIoError) {
  try {
    load_model((dir / "absent.json").string());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::io_error);
  }
}

}  // namespace
}  // namespace xspace
