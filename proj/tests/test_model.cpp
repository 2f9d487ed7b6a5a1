// Copyright 2026 The scfa Authors
// SPDX-License-Identifier: Apache-2.0

#include "scfa/model.hpp"

#include <cmath>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "scfa/rng.hpp"

using namespace scfa;

namespace {

ModelSpec logistic(int p) { return {ModelKind::kLogisticRegression, p, 0}; }
ModelSpec linear(int p) { return {ModelKind::kLinearRegression, p, 0}; }
ModelSpec mlp(int p, int h) { return {ModelKind::kMlpOneHidden, p, h}; }

Dataset random_batch(const ModelSpec& spec, int n, RngStream& s) {
  Dataset batch(n);
  for (Example& ex : batch) {
    ex.features.resize(spec.input_dim);
    for (double& f : ex.features) f = s.next_gaussian();
    ex.label = is_classifier(spec) ? (s.next_unit() < 0.5 ? 0.0 : 1.0)
                                   : s.next_gaussian();
  }
  return batch;
}

ParamVector random_params(const ModelSpec& spec, RngStream& s) {
  ParamVector w(param_count(spec));
  for (double& x : w) x = 0.5 * s.next_gaussian();
  return w;
}

}  // namespace

TEST_CASE("zero-parameter logistic loss is ln 2") {
  const ModelSpec spec = logistic(3);
  const ParamVector w(4, 0.0);
  RngStream s(1);
  const Dataset batch = random_batch(spec, 16, s);
  REQUIRE_THAT(loss(spec, w, batch),
               Catch::Matchers::WithinAbs(std::log(2.0), 1e-12));
}

TEST_CASE("interpolating linear model has zero loss and zero gradient") {
  const ModelSpec spec = linear(2);
  const ParamVector w = {2.0, -1.0, 0.5};
  Dataset batch(5);
  RngStream s(2);
  for (Example& ex : batch) {
    ex.features = {s.next_gaussian(), s.next_gaussian()};
    ex.label = predict_raw(spec, w, ex.features);
  }
  REQUIRE_THAT(loss(spec, w, batch), Catch::Matchers::WithinAbs(0.0, 1e-24));
  const GradientEstimate g = gradient(spec, w, batch);
  for (double v : g.values) REQUIRE_THAT(v, Catch::Matchers::WithinAbs(0.0, 1e-12));
}

TEST_CASE("logistic loss matches per-sample cross-entropy summation") {
  // Independent oracle: direct sigmoid + log on each of 4 hand-built rows.
  const ModelSpec spec = logistic(2);
  const ParamVector w = {0.7, -1.2, 0.3};
  const Dataset batch = {{{1.0, 0.5}, 1.0},
                         {{-2.0, 1.0}, 0.0},
                         {{0.0, 0.0}, 1.0},
                         {{3.0, -1.0}, 0.0}};
  double expected = 0.0;
  for (const Example& ex : batch) {
    const double z = w[0] * ex.features[0] + w[1] * ex.features[1] + w[2];
    const double p = 1.0 / (1.0 + std::exp(-z));
    expected += -(ex.label * std::log(p) + (1.0 - ex.label) * std::log(1.0 - p));
  }
  expected /= 4.0;
  REQUIRE_THAT(loss(spec, w, batch), Catch::Matchers::WithinAbs(expected, 1e-12));
}

TEST_CASE("logistic gradient at zero is (p - y) x with p = 0.5") {
  const ModelSpec spec = logistic(3);
  const ParamVector w(4, 0.0);
  const Dataset batch = {{{2.0, -1.0, 0.5}, 1.0}};
  const GradientEstimate g = gradient(spec, w, batch);
  for (int j = 0; j < 3; ++j) {
    REQUIRE_THAT(g.values[j],
                 Catch::Matchers::WithinAbs((0.5 - 1.0) * batch[0].features[j], 1e-15));
  }
  REQUIRE_THAT(g.values[3], Catch::Matchers::WithinAbs(-0.5, 1e-15));
}

TEST_CASE("analytic gradients agree with central finite differences") {
  RngStream s(3);
  const std::vector<ModelSpec> specs = {linear(4), logistic(4), mlp(3, 5)};
  for (const ModelSpec& spec : specs) {
    for (int rep = 0; rep < 5; ++rep) {
      const Dataset batch = random_batch(spec, 12, s);
      ParamVector w = random_params(spec, s);
      const GradientEstimate g = gradient(spec, w, batch);
      const double h = 1e-5;
      for (std::size_t j = 0; j < w.size(); ++j) {
        const double keep = w[j];
        w[j] = keep + h;
        const double up = loss(spec, w, batch);
        w[j] = keep - h;
        const double down = loss(spec, w, batch);
        w[j] = keep;
        const double fd = (up - down) / (2.0 * h);
        REQUIRE_THAT(g.values[j], Catch::Matchers::WithinAbs(fd, 1e-4));
        // Relative agreement, tolerance scaled by component magnitude.
        REQUIRE(std::abs(g.values[j] - fd) <=
                1e-3 * std::max(1.0, std::abs(g.values[j])));
      }
    }
  }
}

TEST_CASE("loss is permutation-invariant over the batch") {
  const ModelSpec spec = logistic(4);
  RngStream s(4);
  Dataset batch = random_batch(spec, 20, s);
  const ParamVector w = random_params(spec, s);
  const double base = loss(spec, w, batch);
  for (int rep = 0; rep < 5; ++rep) {
    s.shuffle(batch);
    REQUIRE_THAT(loss(spec, w, batch),
                 Catch::Matchers::WithinRel(base, 1e-12));
  }
}

TEST_CASE("global objective weighting") {
  const ModelSpec spec = linear(1);
  const ParamVector w = {0.0, 0.0};  // predictions identically zero

  // Per-client constant labels give loss = label^2 / 2 exactly.
  auto make_client = [](int id, int n, double label) {
    ClientDataset c;
    c.client_id = id;
    c.examples.assign(n, Example{{0.0}, label});
    return c;
  };

  SECTION("single client equals plain loss") {
    std::vector<ClientDataset> parts = {make_client(0, 8, 1.5)};
    REQUIRE_THAT(global_objective(spec, w, parts),
                 Catch::Matchers::WithinRel(loss(spec, w, parts[0].examples), 1e-15));
  }

  SECTION("two identical equal-size clients equal either one") {
    std::vector<ClientDataset> parts = {make_client(0, 6, 2.0),
                                        make_client(1, 6, 2.0)};
    REQUIRE_THAT(global_objective(spec, w, parts),
                 Catch::Matchers::WithinRel(loss(spec, w, parts[0].examples), 1e-15));
  }

  SECTION("n = (10, 20, 70) with losses (1, 2, 3) gives 2.6") {
    std::vector<ClientDataset> parts = {make_client(0, 10, std::sqrt(2.0)),
                                        make_client(1, 20, 2.0),
                                        make_client(2, 70, std::sqrt(6.0))};
    REQUIRE_THAT(loss(spec, w, parts[0].examples),
                 Catch::Matchers::WithinRel(1.0, 1e-12));
    REQUIRE_THAT(loss(spec, w, parts[1].examples),
                 Catch::Matchers::WithinRel(2.0, 1e-12));
    REQUIRE_THAT(loss(spec, w, parts[2].examples),
                 Catch::Matchers::WithinRel(3.0, 1e-12));
    REQUIRE_THAT(global_objective(spec, w, parts),
                 Catch::Matchers::WithinAbs(2.6, 1e-12));
  }

  SECTION("uniform sizes reduce to the unweighted mean") {
    std::vector<ClientDataset> parts = {make_client(0, 5, 1.0),
                                        make_client(1, 5, 2.0),
                                        make_client(2, 5, 3.0)};
    double mean = 0.0;
    for (const auto& c : parts) mean += loss(spec, w, c.examples) / 3.0;
    REQUIRE_THAT(global_objective(spec, w, parts),
                 Catch::Matchers::WithinRel(mean, 1e-12));
  }
}

TEST_CASE("dimension mismatches raise configuration errors") {
  const ModelSpec spec = logistic(3);
  const ParamVector w(4, 0.0);
  const Dataset bad = {{{1.0, 2.0}, 1.0}};  // two features, spec wants three
  REQUIRE_THROWS_AS(loss(spec, w, bad), ConfigError);
  REQUIRE_THROWS_AS(gradient(spec, w, bad), ConfigError);
  const ParamVector short_w(3, 0.0);
  const Dataset ok = {{{1.0, 2.0, 3.0}, 1.0}};
  REQUIRE_THROWS_AS(loss(spec, short_w, ok), ConfigError);
  REQUIRE_THROWS_AS(loss(spec, w, Dataset{}), ConfigError);
  REQUIRE_THROWS_AS(global_objective(spec, w, std::vector<ClientDataset>{}),
                    ConfigError);
}

TEST_CASE("mlp parameter count and forward shape") {
  const ModelSpec spec = mlp(4, 3);
  REQUIRE(param_count(spec) == 3 * 4 + 2 * 3 + 1);
  RngStream s(5);
  const ParamVector w = random_params(spec, s);
  const std::vector<double> x = {0.1, -0.2, 0.3, 0.4};
  const double prob = predict(spec, w, x);
  REQUIRE(prob > 0.0);
  REQUIRE(prob < 1.0);
}
