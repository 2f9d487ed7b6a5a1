// Copyright 2026 The scfa Authors
// SPDX-License-Identifier: Apache-2.0

#include "scfa/data.hpp"

#include <algorithm>
#include <filesystem>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "scfa/csv.hpp"

using namespace scfa;

namespace {

SynthSpec logistic_spec(int n, int p, double rate, double noise,
                        double truth_scale = 1.0) {
  SynthSpec s;
  s.num_samples = n;
  s.feature_dim = p;
  s.positive_rate = rate;
  s.noise_std = noise;
  s.model = {ModelKind::kLogisticRegression, p, 0};
  s.ground_truth.assign(p + 1, 0.0);
  for (int j = 0; j < p; ++j) s.ground_truth[j] = truth_scale * (j % 2 ? -1.0 : 1.0);
  return s;
}

bool same_dataset(const Dataset& a, const Dataset& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].label != b[i].label || a[i].features != b[i].features) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("noiseless linear labels equal the truth predictions") {
  SynthSpec s;
  s.num_samples = 200;
  s.feature_dim = 3;
  s.noise_std = 0.0;
  s.model = {ModelKind::kLinearRegression, 3, 0};
  s.ground_truth = {1.0, -2.0, 0.5, 0.25};
  const Dataset data = generate(s, 9);
  for (const Example& ex : data) {
    REQUIRE(ex.label == predict_raw(s.model, s.ground_truth, ex.features));
  }
}

TEST_CASE("generation is deterministic in (spec, seed)") {
  const SynthSpec s = logistic_spec(500, 4, 0.3, 0.5);
  REQUIRE(same_dataset(generate(s, 77), generate(s, 77)));
  REQUIRE_FALSE(same_dataset(generate(s, 77), generate(s, 78)));
}

TEST_CASE("severe class imbalance hits the target rate") {
  // 0.58% positives at n = 200000.
  const SynthSpec s = logistic_spec(200000, 4, 0.0058, 0.5);
  const Dataset data = generate(s, 123);
  double positives = 0.0;
  for (const Example& ex : data) positives += ex.label;
  const double rate = positives / static_cast<double>(data.size());
  REQUIRE(rate >= 0.0038);
  REQUIRE(rate <= 0.0078);
}

TEST_CASE("moderate positive rate within two points at 10k samples") {
  const SynthSpec s = logistic_spec(10000, 6, 0.3, 1.0);
  const Dataset data = generate(s, 5);
  double positives = 0.0;
  for (const Example& ex : data) positives += ex.label;
  REQUIRE_THAT(positives / 10000.0, Catch::Matchers::WithinAbs(0.3, 0.02));
}

TEST_CASE("single-client partition holds everything") {
  const SynthSpec s = logistic_spec(120, 3, 0.4, 0.5);
  const Dataset data = generate(s, 3);
  const auto parts = dirichlet_partition(data, {1, 0.5, 9});
  REQUIRE(parts.size() == 1);
  REQUIRE(parts[0].examples.size() == data.size());
}

TEST_CASE("partitions are disjoint and complete") {
  const SynthSpec s = logistic_spec(500, 3, 0.4, 0.5);
  const Dataset data = generate(s, 31);
  const auto parts = dirichlet_partition(data, {5, 0.3, 13});
  std::size_t total = 0;
  std::vector<std::vector<double>> rows;
  for (const auto& c : parts) {
    REQUIRE(c.examples.size() >= 1);
    total += c.examples.size();
    for (const Example& ex : c.examples) {
      std::vector<double> row = ex.features;
      row.push_back(ex.label);
      rows.push_back(std::move(row));
    }
  }
  REQUIRE(total == data.size());
  std::vector<std::vector<double>> expected;
  for (const Example& ex : data) {
    std::vector<double> row = ex.features;
    row.push_back(ex.label);
    expected.push_back(std::move(row));
  }
  std::sort(rows.begin(), rows.end());
  std::sort(expected.begin(), expected.end());
  REQUIRE(rows == expected);
}

TEST_CASE("partitioning is deterministic and seed-sensitive") {
  const SynthSpec s = logistic_spec(300, 3, 0.4, 0.5);
  const Dataset data = generate(s, 41);
  const auto a = dirichlet_partition(data, {4, 0.5, 99});
  const auto b = dirichlet_partition(data, {4, 0.5, 99});
  const auto c = dirichlet_partition(data, {4, 0.5, 100});
  REQUIRE(a.size() == b.size());
  bool identical = true, same_as_c = true;
  for (std::size_t k = 0; k < a.size(); ++k) {
    identical = identical && same_dataset(a[k].examples, b[k].examples);
    same_as_c = same_as_c && a[k].examples.size() == c[k].examples.size() &&
                same_dataset(a[k].examples, c[k].examples);
  }
  REQUIRE(identical);
  REQUIRE_FALSE(same_as_c);
}

TEST_CASE("fewer samples than clients is a configuration error") {
  const SynthSpec s = logistic_spec(3, 2, 0.4, 0.5);
  const Dataset data = generate(s, 1);
  REQUIRE_THROWS_AS(dirichlet_partition(data, {5, 1.0, 1}), ConfigError);
}

TEST_CASE("alpha = 10 keeps per-client mean sizes near uniform across seeds") {
  const SynthSpec s = logistic_spec(2000, 4, 0.4, 0.8);
  const Dataset data = generate(s, 55);
  const int k = 5;
  std::vector<double> mean_size(k, 0.0);
  const int seeds = 100;
  for (int seed = 0; seed < seeds; ++seed) {
    const auto parts =
        dirichlet_partition(data, {k, 10.0, static_cast<std::uint64_t>(seed)});
    for (int j = 0; j < k; ++j) {
      mean_size[j] += static_cast<double>(parts[j].examples.size()) / seeds;
    }
  }
  const double uniform = 2000.0 / k;
  for (int j = 0; j < k; ++j) {
    REQUIRE(mean_size[j] >= 0.75 * uniform);
    REQUIRE(mean_size[j] <= 1.25 * uniform);
  }
}

TEST_CASE("alpha = 0.1 produces severe size skew") {
  const SynthSpec s = logistic_spec(2000, 4, 0.4, 0.8);
  const Dataset data = generate(s, 55);
  std::vector<double> ratios;
  for (int seed = 0; seed < 100; ++seed) {
    const auto parts =
        dirichlet_partition(data, {5, 0.1, static_cast<std::uint64_t>(seed)});
    std::size_t lo = parts[0].examples.size(), hi = lo;
    for (const auto& c : parts) {
      lo = std::min(lo, c.examples.size());
      hi = std::max(hi, c.examples.size());
    }
    ratios.push_back(static_cast<double>(hi) / static_cast<double>(lo));
  }
  std::sort(ratios.begin(), ratios.end());
  REQUIRE(ratios[50] > 3.0);  // median max/min ratio
}

TEST_CASE("identical client data yields zero gradient divergence") {
  const SynthSpec s = logistic_spec(60, 3, 0.4, 0.5);
  const Dataset data = generate(s, 2);
  std::vector<ClientDataset> parts(3);
  for (int j = 0; j < 3; ++j) {
    parts[j].client_id = j;
    parts[j].examples = data;
  }
  const ParamVector probe(4, 0.1);
  const auto rep = heterogeneity_report(parts, s.model, probe);
  REQUIRE_THAT(rep.gradient_divergence, Catch::Matchers::WithinAbs(0.0, 1e-12));
  REQUIRE(rep.size_ratio == 1.0);
}

TEST_CASE("single client has zero divergence") {
  const SynthSpec s = logistic_spec(80, 3, 0.4, 0.5);
  const Dataset data = generate(s, 6);
  const auto parts = dirichlet_partition(data, {1, 1.0, 7});
  const auto rep = heterogeneity_report(parts, s.model, ParamVector(4, 0.0));
  REQUIRE_THAT(rep.gradient_divergence, Catch::Matchers::WithinAbs(0.0, 1e-12));
}

TEST_CASE("divergence decreases with alpha") {
  const SynthSpec s = logistic_spec(1500, 4, 0.35, 0.8);
  const Dataset data = generate(s, 19);
  const ParamVector probe(5, 0.0);
  const std::vector<double> alphas = {0.1, 1.0, 10.0};
  std::vector<double> medians;
  for (double alpha : alphas) {
    std::vector<double> ds;
    for (int seed = 0; seed < 20; ++seed) {
      const auto parts = dirichlet_partition(
          data, {5, alpha, static_cast<std::uint64_t>(seed)});
      ds.push_back(heterogeneity_report(parts, s.model, probe).gradient_divergence);
    }
    std::sort(ds.begin(), ds.end());
    medians.push_back(0.5 * (ds[9] + ds[10]));
  }
  REQUIRE(medians[0] > medians[1]);
  REQUIRE(medians[1] > medians[2]);
}

TEST_CASE("dataset CSV round-trips") {
  const SynthSpec s = logistic_spec(50, 3, 0.4, 0.5);
  const Dataset data = generate(s, 8);
  const auto path = std::filesystem::temp_directory_path() / "scfa_data_rt.csv";
  atomic_write(path, dataset_to_csv(data));
  const Dataset back = dataset_from_csv(path);
  REQUIRE(same_dataset(data, back));
  std::filesystem::remove(path);
}

TEST_CASE("feature correlation follows the AR(1) profile") {
  SynthSpec s = logistic_spec(40000, 5, 0.3, 1.0);
  s.feature_corr = 0.6;
  const Dataset data = generate(s, 77);
  // Empirical moments: unit variance per coordinate, 0.6 adjacent, 0.36 lag-2.
  for (int a = 0; a < 4; ++a) {
    double saa = 0.0, sbb = 0.0, sab = 0.0;
    for (const Example& ex : data) {
      saa += ex.features[a] * ex.features[a];
      sbb += ex.features[a + 1] * ex.features[a + 1];
      sab += ex.features[a] * ex.features[a + 1];
    }
    const double corr = sab / std::sqrt(saa * sbb);
    REQUIRE_THAT(corr, Catch::Matchers::WithinAbs(0.6, 0.02));
    REQUIRE_THAT(sbb / static_cast<double>(data.size()),
                 Catch::Matchers::WithinAbs(1.0, 0.03));
  }
  double lag2 = 0.0, s00 = 0.0, s22 = 0.0;
  for (const Example& ex : data) {
    lag2 += ex.features[0] * ex.features[2];
    s00 += ex.features[0] * ex.features[0];
    s22 += ex.features[2] * ex.features[2];
  }
  REQUIRE_THAT(lag2 / std::sqrt(s00 * s22), Catch::Matchers::WithinAbs(0.36, 0.02));
}

TEST_CASE("latent threshold matches the empirical label boundary") {
  SynthSpec s = logistic_spec(50000, 6, 0.3, 1.2);
  s.feature_corr = 0.5;
  const double tau = latent_threshold(s);
  // Recompute each latent score and find the empirical boundary between
  // classes; it should sit at the analytic quantile.
  const Dataset data = generate(s, 5);
  RngStream noise = RngStream::derived(5, {stream_id::kLabelNoise});
  double lowest_pos = HUGE_VAL, highest_neg = -HUGE_VAL;
  for (const Example& ex : data) {
    const double latent = predict_raw(s.model, s.ground_truth, ex.features) +
                          s.noise_std * noise.next_gaussian();
    if (ex.label == 1.0) lowest_pos = std::min(lowest_pos, latent);
    else highest_neg = std::max(highest_neg, latent);
  }
  REQUIRE_THAT(0.5 * (lowest_pos + highest_neg),
               Catch::Matchers::WithinAbs(tau, 0.05));
}

TEST_CASE("classifier reference parameters sit near the trained optimum") {
  SynthSpec s = logistic_spec(20000, 4, 0.2, 1.0, 1.0);
  const Dataset data = generate(s, 21);
  const ParamVector ref = reference_classifier_params(s);
  // The probit-matched reference should be a far better stationary point of
  // the logistic loss than the raw latent-score parameters.
  const GradientEstimate g_ref = gradient(s.model, ref, data);
  const GradientEstimate g_raw = gradient(s.model, s.ground_truth, data);
  REQUIRE(norm(g_ref.values) < 0.2 * norm(g_raw.values));
  REQUIRE(loss(s.model, ref, data) < loss(s.model, s.ground_truth, data));
}
