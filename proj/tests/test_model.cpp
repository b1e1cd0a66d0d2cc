#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "doctest.h"

#include "ctg/model.hpp"
#include "testutil.hpp"

using namespace ctg;
using namespace ctg::model;
using feat::FeatureVector;
using feat::kFeatureDim;

namespace {

// independent reference walker, deliberately written apart from Tree::evaluate
double naive_tree_value(const Tree& t, std::size_t at, const FeatureVector& x) {
  const TreeNode& n = t.nodes[at];
  if (n.is_leaf) return n.value;
  if (x[static_cast<std::size_t>(n.feature)] < n.threshold)
    return naive_tree_value(t, static_cast<std::size_t>(n.left), x);
  return naive_tree_value(t, static_cast<std::size_t>(n.right), x);
}

double naive_predict(const TreeEnsemble& e, const FeatureVector& x) {
  double acc = e.base_score;
  for (const Tree& t : e.trees) acc += e.shrinkage * naive_tree_value(t, 0, x);
  return acc;
}

FeatureVector random_vector(testutil::Rng& rng) {
  FeatureVector x{};
  std::uniform_real_distribution<double> unit(-1.0, 5.0);
  std::uniform_int_distribution<int> count(0, 8);
  for (int k = 0; k < kFeatureDim; ++k) {
    if (k >= 51 && k <= 54) {
      x[static_cast<std::size_t>(k)] = count(rng) % (k == 54 ? 2 : 9);
    } else if (k == 59) {
      x[static_cast<std::size_t>(k)] = 1 + count(rng);
    } else {
      x[static_cast<std::size_t>(k)] = unit(rng);
    }
  }
  return x;
}

std::vector<FeatureVector> random_matrix(testutil::Rng& rng, std::size_t rows) {
  std::vector<FeatureVector> X;
  for (std::size_t r = 0; r < rows; ++r) X.push_back(random_vector(rng));
  return X;
}

}  // namespace

TEST_CASE("constant targets collapse to the base score") {
  testutil::Rng rng(1);
  std::vector<FeatureVector> X = random_matrix(rng, 12);
  std::vector<double> y(X.size(), 0.3);
  TrainConfig cfg;
  cfg.rounds = 10;
  TreeEnsemble e = train_gbrt(X, y, cfg);
  CHECK(e.base_score == doctest::Approx(0.3));
  CHECK(e.trees.size() == 1);  // one all-zero tree, then early stop
  for (int round = 0; round < 20; ++round)
    CHECK(predict(e, random_vector(rng)) == doctest::Approx(0.3));
}

TEST_CASE("separable synthetic data trains to low error") {
  testutil::Rng rng(2);
  std::vector<FeatureVector> X = random_matrix(rng, 200);
  std::vector<double> y;
  for (const auto& x : X) y.push_back(x[59] >= 4.0 ? 1.0 : 0.0);
  TrainConfig cfg;
  cfg.rounds = 20;
  cfg.max_depth = 3;
  cfg.shrinkage = 0.5;
  TreeEnsemble e = train_gbrt(X, y, cfg);
  std::vector<double> preds;
  for (const auto& x : X) preds.push_back(predict(e, x));
  CHECK(rmse(preds, y) < 0.05);
}

TEST_CASE("training error is non-increasing per boosting round") {
  testutil::Rng rng(3);
  std::vector<FeatureVector> X = random_matrix(rng, 80);
  std::vector<double> y;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t i = 0; i < X.size(); ++i) y.push_back(unit(rng));
  TrainConfig cfg;
  cfg.rounds = 25;
  cfg.max_depth = 3;
  TreeEnsemble e = train_gbrt(X, y, cfg);

  // evaluate the prefix ensembles
  std::vector<double> acc(X.size(), e.base_score);
  double prev = std::numeric_limits<double>::infinity();
  for (const Tree& t : e.trees) {
    for (std::size_t i = 0; i < X.size(); ++i) acc[i] += e.shrinkage * t.evaluate(X[i]);
    double err = rmse(acc, y);
    CHECK(err <= prev + 1e-12);
    prev = err;
  }
}

TEST_CASE("training validates its inputs") {
  testutil::Rng rng(4);
  std::vector<FeatureVector> X = random_matrix(rng, 4);
  CHECK_THROWS_AS(train_gbrt(X, {0.1, 0.2}, {}), DomainError);
  CHECK_THROWS_AS(train_gbrt({X[0]}, {0.1}, {}), DomainError);
  CHECK_THROWS_AS(train_gbrt(X, {0.1, 0.2, 0.3, 1.7}, {}), DomainError);
  TrainConfig bad;
  bad.shrinkage = 0.0;
  CHECK_THROWS_AS(train_gbrt(X, {0.1, 0.2, 0.3, 0.4}, bad), DomainError);
}

TEST_CASE("integer-valued features get half-integer thresholds") {
  std::vector<FeatureVector> X;
  std::vector<double> y;
  for (int v : {1, 1, 3, 3}) {
    FeatureVector x{};
    x[59] = v;
    X.push_back(x);
    y.push_back(v > 2 ? 1.0 : 0.0);
  }
  TrainConfig cfg;
  cfg.rounds = 1;
  cfg.max_depth = 1;
  cfg.shrinkage = 1.0;
  TreeEnsemble e = train_gbrt(X, y, cfg);
  REQUIRE_FALSE(e.trees.empty());
  const TreeNode& root = e.trees[0].nodes[0];
  REQUIRE_FALSE(root.is_leaf);
  CHECK(root.feature == 59);
  CHECK(root.threshold == doctest::Approx(2.5));  // snapped from the midpoint 2.0
}

TEST_CASE("two stumps add up") {
  TreeEnsemble e;
  e.base_score = 0.0;
  e.shrinkage = 0.5;
  Tree a;
  a.nodes.push_back({true, 0.2, -1, 0.0, -1, -1});
  Tree b;
  b.nodes.push_back({true, 0.4, -1, 0.0, -1, -1});
  e.trees = {a, b};
  FeatureVector x{};
  CHECK(predict(e, x) == doctest::Approx(0.3));

  TreeEnsemble single;
  single.base_score = 0.0;
  single.shrinkage = 1.0;
  Tree leaf;
  leaf.nodes.push_back({true, 0.5, -1, 0.0, -1, -1});
  single.trees = {leaf};
  CHECK(predict(single, x) == 0.5);
}

TEST_CASE("predict matches an independent naive walker") {
  testutil::Rng rng(5);
  for (int round = 0; round < 40; ++round) {
    std::uniform_int_distribution<int> trees(1, 8), depth(1, 4);
    TreeEnsemble e = testutil::random_ensemble(rng, trees(rng), depth(rng));
    for (int it = 0; it < 25; ++it) {
      FeatureVector x = random_vector(rng);
      CHECK(predict(e, x) == naive_predict(e, x));
    }
  }
}

TEST_CASE("interval prediction encloses point predictions") {
  testutil::Rng rng(6);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int round = 0; round < 60; ++round) {
    TreeEnsemble e = testutil::random_ensemble(rng, 5, 3);

    FeatureVector x = random_vector(rng);
    auto [plo, phi] = predict_interval(e, FeatureBox::point(x));
    CHECK(plo == doctest::Approx(predict(e, x)).epsilon(1e-12));
    CHECK(phi == doctest::Approx(predict(e, x)).epsilon(1e-12));

    FeatureBox box = FeatureBox::everything();
    // random finite sub-box on a few dimensions
    for (int k = 0; k < kFeatureDim; k += 7) {
      double a = unit(rng) * 4.0, b = unit(rng) * 4.0;
      box.lo[static_cast<std::size_t>(k)] = std::min(a, b);
      box.hi[static_cast<std::size_t>(k)] = std::max(a, b);
    }
    auto [lo, hi] = predict_interval(e, box);
    CHECK(lo <= hi);
    for (int s = 0; s < 40; ++s) {
      FeatureVector sample = random_vector(rng);
      for (int k = 0; k < kFeatureDim; ++k) {
        double l = std::max(box.lo[static_cast<std::size_t>(k)], -10.0);
        double h = std::min(box.hi[static_cast<std::size_t>(k)], 10.0);
        sample[static_cast<std::size_t>(k)] = l + unit(rng) * (h - l);
      }
      double p = predict(e, sample);
      CHECK(p >= lo - 1e-12);
      CHECK(p <= hi + 1e-12);
    }
  }
}

TEST_CASE("full-space interval is the sum of leaf extremes") {
  TreeEnsemble e;
  e.base_score = 0.1;
  e.shrinkage = 0.5;
  Tree t;
  t.nodes.push_back({false, 0.0, 59, 2.5, 1, 2});
  t.nodes.push_back({true, 0.2, -1, 0.0, -1, -1});
  t.nodes.push_back({true, 0.8, -1, 0.0, -1, -1});
  e.trees = {t};
  auto [lo, hi] = predict_interval(e, FeatureBox::everything());
  CHECK(lo == doctest::Approx(0.1 + 0.5 * 0.2));
  CHECK(hi == doctest::Approx(0.1 + 0.5 * 0.8));
}

TEST_CASE("partial evaluation is equivalence-preserving") {
  testutil::Rng rng(7);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int round = 0; round < 30; ++round) {
    TreeEnsemble e = testutil::random_ensemble(rng, 6, 4);

    std::array<std::optional<double>, kFeatureDim> fixed;
    FeatureVector base = random_vector(rng);
    for (int k = 0; k < kFeatureDim; ++k) {
      if (unit(rng) < 0.6) fixed[static_cast<std::size_t>(k)] = base[static_cast<std::size_t>(k)];
    }
    TreeEnsemble reduced = partial_evaluate(e, fixed);
    CHECK(reduced.trees.size() == e.trees.size());

    for (int it = 0; it < 35; ++it) {
      FeatureVector x = random_vector(rng);
      for (int k = 0; k < kFeatureDim; ++k) {
        if (fixed[static_cast<std::size_t>(k)])
          x[static_cast<std::size_t>(k)] = *fixed[static_cast<std::size_t>(k)];
      }
      CHECK(predict(reduced, x) == predict(e, x));
    }
  }
}

TEST_CASE("partial evaluation extremes") {
  testutil::Rng rng(8);
  TreeEnsemble e = testutil::random_ensemble(rng, 4, 3);

  // fixing every feature collapses each tree to a single leaf
  FeatureVector x = random_vector(rng);
  std::array<std::optional<double>, kFeatureDim> all;
  for (int k = 0; k < kFeatureDim; ++k) all[static_cast<std::size_t>(k)] = x[static_cast<std::size_t>(k)];
  TreeEnsemble collapsed = partial_evaluate(e, all);
  for (const Tree& t : collapsed.trees) CHECK(t.nodes.size() == 1);
  CHECK(predict(collapsed, x) == predict(e, x));

  // fixing nothing keeps the structure
  std::array<std::optional<double>, kFeatureDim> none;
  TreeEnsemble same = partial_evaluate(e, none);
  REQUIRE(same.trees.size() == e.trees.size());
  for (std::size_t t = 0; t < e.trees.size(); ++t)
    CHECK(same.trees[t].nodes.size() == e.trees[t].nodes.size());
}

TEST_CASE("rmse and pearson fixtures") {
  std::vector<double> a = {0.25, 0.5, 1.0};
  std::vector<double> b = {0.0, 0.0, 0.5};
  CHECK(rmse(a, a) == 0.0);
  CHECK(rmse(a, b) == doctest::Approx(std::sqrt(0.1875)).epsilon(1e-13));

  std::vector<double> x = {1, 2, 3, 4};
  std::vector<double> y = {2, 4, 5, 7};
  CHECK(pearson(x, x) == doctest::Approx(1.0).epsilon(1e-13));
  std::vector<double> neg;
  for (double v : x) neg.push_back(-v);
  CHECK(pearson(x, neg) == doctest::Approx(-1.0).epsilon(1e-13));
  CHECK(pearson(x, y) == doctest::Approx(8.0 / std::sqrt(65.0)).epsilon(1e-13));

  // headline-scale fixture: every residual is exactly 0.285
  std::vector<double> p = {0.5, 0.5, 0.5, 0.5};
  std::vector<double> t = {0.215, 0.785, 0.215, 0.785};
  CHECK(rmse(p, t) == doctest::Approx(0.285).epsilon(1e-9));

  CHECK_THROWS_AS(pearson({1, 1, 1}, {1, 2, 3}), ZeroVarianceError);
  CHECK_THROWS_AS(rmse({1.0}, {}), DomainError);
}

TEST_CASE("model JSON round-trips and validates") {
  testutil::Rng rng(9);
  TreeEnsemble e = testutil::random_ensemble(rng, 5, 4);
  const std::string path = "test_model_roundtrip.json";
  save_model(e, path);
  TreeEnsemble back = load_model(path);
  CHECK(back.base_score == e.base_score);
  CHECK(back.shrinkage == e.shrinkage);
  REQUIRE(back.trees.size() == e.trees.size());
  for (std::size_t t = 0; t < e.trees.size(); ++t) {
    REQUIRE(back.trees[t].nodes.size() == e.trees[t].nodes.size());
    for (std::size_t at = 0; at < e.trees[t].nodes.size(); ++at) {
      const TreeNode& p = e.trees[t].nodes[at];
      const TreeNode& q = back.trees[t].nodes[at];
      CHECK(p.is_leaf == q.is_leaf);
      if (p.is_leaf) {
        CHECK(p.value == q.value);  // bit-exact values
      } else {
        CHECK(p.feature == q.feature);
        CHECK(p.threshold == q.threshold);
      }
    }
  }
  // serialized form is stable
  CHECK(model_to_json(e) == model_to_json(back));
  std::remove(path.c_str());

  CHECK_THROWS_AS(model_from_json(R"({"base_score":0,"shrinkage":0.1,"trees":[]})"),
                  SchemaError);
  std::vector<std::string> warnings;
  TreeEnsemble ok = model_from_json(
      R"({"base_score":0,"shrinkage":1,"trees":[{"nodes":[{"v":0.5}]}],
          "surprise":true})",
      &warnings);
  CHECK(ok.trees.size() == 1);
  REQUIRE(warnings.size() == 2);  // unknown field + missing feature_names
  CHECK(warnings[0].find("surprise") != std::string::npos);

  // malformed trees are rejected
  CHECK_THROWS_AS(model_from_json(
                      R"({"base_score":0,"shrinkage":1,
                          "trees":[{"nodes":[{"k":99,"t":0,"l":1,"r":2},{"v":0},{"v":0}]}]})"),
                  SchemaError);
  CHECK_THROWS_AS(model_from_json(
                      R"({"base_score":0,"shrinkage":1,
                          "trees":[{"nodes":[{"k":1,"t":0,"l":0,"r":0}]}]})"),
                  SchemaError);
}

TEST_CASE("training is deterministic") {
  testutil::Rng rng(10);
  std::vector<FeatureVector> X = random_matrix(rng, 60);
  std::vector<double> y;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t i = 0; i < X.size(); ++i) y.push_back(unit(rng));
  TrainConfig cfg;
  cfg.rounds = 8;
  TreeEnsemble a = train_gbrt(X, y, cfg);
  TreeEnsemble b = train_gbrt(X, y, cfg);
  CHECK(model_to_json(a) == model_to_json(b));
}
