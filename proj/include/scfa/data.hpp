// Copyright 2026 The scfa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "scfa/errors.hpp"
#include "scfa/model.hpp"
#include "scfa/rng.hpp"

namespace scfa {

namespace stream_id {
// Stream coordinates for data generation and partitioning.
inline constexpr std::uint64_t kFeatures = 0x10;
inline constexpr std::uint64_t kLabelNoise = 0x11;
inline constexpr std::uint64_t kPartitionProportions = 0x12;
inline constexpr std::uint64_t kPartitionShuffle = 0x13;
}  // namespace stream_id

struct SynthSpec {
  int num_samples = 0;
  int feature_dim = 0;
  double positive_rate = 0.5;  // classifiers only
  double noise_std = 0.0;
  // AR(1) feature correlation: corr(x_i, x_j) = feature_corr^{|i-j|}.
  // Zero gives i.i.d. standard normal features.
  double feature_corr = 0.0;
  ModelSpec model;             // label mechanism
  ParamVector ground_truth;    // length param_count(model)
};


inline void validate(const SynthSpec& spec) {
  if (spec.num_samples < 1) throw ConfigError("num_samples must be >= 1");
  if (spec.feature_dim < 1) throw ConfigError("feature_dim must be >= 1");
  if (spec.model.input_dim != spec.feature_dim) {
    throw ConfigError("model input_dim must equal feature_dim");
  }
  if (is_classifier(spec.model) &&
      !(spec.positive_rate > 0.0 && spec.positive_rate < 1.0)) {
    throw ConfigError("positive_rate must be in (0,1)");
  }
  if (spec.noise_std < 0.0) throw ConfigError("noise_std must be >= 0");
  if (!(spec.feature_corr >= 0.0 && spec.feature_corr < 1.0)) {
    throw ConfigError("feature_corr must be in [0,1)");
  }
  if (static_cast<int>(spec.ground_truth.size()) != param_count(spec.model)) {
    throw ConfigError("ground_truth length does not match model");
  }
}

// Synthetic data generator.
//
// Features are i.i.d. standard normal, drawn example-major from the features
// stream. Regression labels are score + noise_std * g. Classification labels
// rank the noisy scores and mark the top round(rate * n) as positive, which
// pins the empirical positive rate at the target up to integer rounding for
// any ground-truth model.
inline Dataset generate(const SynthSpec& spec, std::uint64_t seed) {
  validate(spec);
  const int n = spec.num_samples;
  const int p = spec.feature_dim;
  RngStream feat = RngStream::derived(seed, {stream_id::kFeatures});
  RngStream noise = RngStream::derived(seed, {stream_id::kLabelNoise});

  Dataset data(n);
  std::vector<double> latent(n);
  const double c = spec.feature_corr;
  const double s = std::sqrt(1.0 - c * c);
  for (int i = 0; i < n; ++i) {
    data[i].features.resize(p);
    for (int j = 0; j < p; ++j) {
      const double g = feat.next_gaussian();
      // AR(1) chain over the feature index; c == 0 is the i.i.d. case.
      data[i].features[j] =
          (j == 0 || c == 0.0) ? g : c * data[i].features[j - 1] + s * g;
    }
    const double z = predict_raw(spec.model, spec.ground_truth, data[i].features);
    latent[i] = z + (spec.noise_std > 0.0 ? spec.noise_std * noise.next_gaussian()
                                          : 0.0);
  }
  if (!is_classifier(spec.model)) {
    for (int i = 0; i < n; ++i) data[i].label = latent[i];
    return data;
  }
  const int positives = std::clamp(
      static_cast<int>(std::llround(spec.positive_rate * n)), 1, n - 1);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (latent[a] != latent[b]) return latent[a] > latent[b];
    return a < b;  // stable under (measure-zero) ties
  });
  for (int r = 0; r < n; ++r) data[order[r]].label = r < positives ? 1.0 : 0.0;
  return data;
}

// Latent threshold implied by the rank labelling: labels are 1 where
// score + noise exceeds the (1 - rate) quantile of the latent distribution
// N(bias, w' C w + noise^2) with C the feature correlation.
inline double latent_threshold(const SynthSpec& spec) {
  const int p = spec.feature_dim;
  double var_z = 0.0;
  for (int i = 0; i < p; ++i) {
    for (int j = 0; j < p; ++j) {
      var_z += spec.ground_truth[static_cast<std::size_t>(i)] *
               spec.ground_truth[static_cast<std::size_t>(j)] *
               std::pow(spec.feature_corr, std::abs(i - j));
    }
  }
  const double bias = spec.ground_truth[static_cast<std::size_t>(p)];
  const double s = std::sqrt(var_z + spec.noise_std * spec.noise_std);
  return bias + s * normal_quantile(1.0 - spec.positive_rate);
}

// The logistic parameters a classifier trained on this generator converges
// to. Conditional on x the label is Bernoulli(Phi((score - tau)/noise)), and
// with the classic probit-logit matching sigmoid(1.702 u) ~ Phi(u) the
// best-fit logistic model is (1.702/noise) * (w, bias - tau). Only defined
// for the affine truth models; the noise floor keeps the scale finite on
// near-separable data.
inline ParamVector reference_classifier_params(const SynthSpec& spec) {
  if (spec.model.kind == ModelKind::kMlpOneHidden || !is_classifier(spec.model)) {
    return spec.ground_truth;
  }
  const int p = spec.feature_dim;
  const double tau = latent_threshold(spec);
  const double kappa = 1.702 / std::max(spec.noise_std, 0.05);
  ParamVector ref(static_cast<std::size_t>(p) + 1);
  for (int j = 0; j < p; ++j) ref[static_cast<std::size_t>(j)] = kappa * spec.ground_truth[j];
  ref[static_cast<std::size_t>(p)] =
      kappa * (spec.ground_truth[static_cast<std::size_t>(p)] - tau);
  return ref;
}

struct PartitionSpec {
  int num_clients = 1;
  double dirichlet_alpha = 1.0;
  std::uint64_t seed = 0;
};

// Label-distribution Dirichlet partitioning.
//
// Classes are the distinct binary labels when every label is exactly 0 or 1,
// otherwise the whole dataset forms a single class. Per class c (ascending):
//   1. shuffle the class's example indices (ascending start order),
//   2. draw proportions q ~ Dirichlet(alpha, ..., alpha) over the K clients,
//   3. give client k floor(q_k * n_c) samples in sequence; leftover samples
//      go round-robin to clients 0, 1, 2, ...
// Afterwards every empty client takes one sample from the largest client
// (ties to the smallest id). Client sample lists are sorted ascending by
// original index, so the output is a canonical function of (data, spec).
inline std::vector<ClientDataset> dirichlet_partition(const Dataset& data,
                                                      const PartitionSpec& part) {
  const int k = part.num_clients;
  if (k < 1) throw ConfigError("num_clients must be >= 1");
  if (!(part.dirichlet_alpha > 0.0)) throw ConfigError("alpha must be > 0");
  if (data.size() < static_cast<std::size_t>(k)) {
    throw ConfigError("fewer samples than clients");
  }

  bool binary = true;
  for (const Example& ex : data) {
    if (ex.label != 0.0 && ex.label != 1.0) {
      binary = false;
      break;
    }
  }
  std::vector<std::vector<int>> classes;
  if (binary) {
    classes.resize(2);
    for (int i = 0; i < static_cast<int>(data.size()); ++i) {
      classes[data[i].label == 1.0 ? 1 : 0].push_back(i);
    }
  } else {
    classes.resize(1);
    classes[0].resize(data.size());
    std::iota(classes[0].begin(), classes[0].end(), 0);
  }

  std::vector<std::vector<int>> assigned(k);
  for (std::size_t c = 0; c < classes.size(); ++c) {
    std::vector<int>& idx = classes[c];
    if (idx.empty()) continue;
    RngStream shuf = RngStream::derived(
        part.seed, {stream_id::kPartitionShuffle, static_cast<std::uint64_t>(c)});
    shuf.shuffle(idx);
    RngStream props = RngStream::derived(
        part.seed,
        {stream_id::kPartitionProportions, static_cast<std::uint64_t>(c)});
    const std::vector<double> q =
        props.next_dirichlet(part.dirichlet_alpha, static_cast<std::size_t>(k));
    const int nc = static_cast<int>(idx.size());
    std::vector<int> counts(k);
    int used = 0;
    for (int j = 0; j < k; ++j) {
      counts[j] = static_cast<int>(std::floor(q[j] * nc));
      used += counts[j];
    }
    for (int r = 0; r < nc - used; ++r) counts[r % k] += 1;
    int pos = 0;
    for (int j = 0; j < k; ++j) {
      for (int m = 0; m < counts[j]; ++m) assigned[j].push_back(idx[pos++]);
    }
  }

  // Every client gets at least one sample, taken from the current largest.
  for (int j = 0; j < k; ++j) {
    while (assigned[j].empty()) {
      int big = -1;
      std::size_t big_n = 1;
      for (int m = 0; m < k; ++m) {
        if (assigned[m].size() > big_n) {
          big = m;
          big_n = assigned[m].size();
        }
      }
      if (big < 0) throw ConfigError("cannot guarantee one sample per client");
      assigned[j].push_back(assigned[big].back());
      assigned[big].pop_back();
    }
  }

  std::vector<ClientDataset> out(k);
  for (int j = 0; j < k; ++j) {
    std::sort(assigned[j].begin(), assigned[j].end());
    out[j].client_id = j;
    out[j].examples.reserve(assigned[j].size());
    for (int i : assigned[j]) out[j].examples.push_back(data[i]);
  }
  return out;
}

struct HeterogeneityReport {
  double size_ratio = 1.0;                 // max n_k / min n_k
  std::vector<double> positive_rate;       // mean label per client
  double gradient_divergence = 0.0;        // D-hat at the probe point
};

// D-hat = sqrt( (1/K) sum_k ||grad F_k(w) - grad F(w)||^2 ) at probe params.
inline HeterogeneityReport heterogeneity_report(
    std::span<const ClientDataset> partitions, const ModelSpec& spec,
    const ParamVector& probe_params) {
  if (partitions.empty()) throw ConfigError("heterogeneity_report: no clients");
  HeterogeneityReport rep;
  std::size_t min_n = partitions[0].size(), max_n = partitions[0].size();
  for (const auto& c : partitions) {
    min_n = std::min(min_n, c.size());
    max_n = std::max(max_n, c.size());
    double pos = 0.0;
    for (const Example& ex : c.examples) pos += ex.label;
    rep.positive_rate.push_back(
        c.examples.empty() ? 0.0 : pos / static_cast<double>(c.size()));
  }
  rep.size_ratio = min_n == 0 ? HUGE_VAL
                              : static_cast<double>(max_n) / static_cast<double>(min_n);

  const std::vector<double> g_global = global_gradient(spec, probe_params, partitions);
  double acc = 0.0;
  for (const auto& c : partitions) {
    const GradientEstimate gk = gradient(spec, probe_params, c.examples);
    acc += norm_sq(sub(gk.values, g_global));
  }
  rep.gradient_divergence =
      std::sqrt(acc / static_cast<double>(partitions.size()));
  return rep;
}

}  // namespace scfa
