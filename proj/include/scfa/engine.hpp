// Copyright 2026 The scfa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "scfa/constraints.hpp"
#include "scfa/data.hpp"
#include "scfa/errors.hpp"
#include "scfa/linalg.hpp"
#include "scfa/model.hpp"
#include "scfa/privacy.hpp"
#include "scfa/rng.hpp"

namespace scfa {

namespace stream_id {
// Engine phases. Streams are keyed by (master_seed, phase, round, client) so
// results do not depend on execution order or scheduling.
inline constexpr std::uint64_t kInitParams = 0x30;
inline constexpr std::uint64_t kClientSample = 0x31;
inline constexpr std::uint64_t kLocalTrain = 0x32;
inline constexpr std::uint64_t kDpNoise = 0x33;
}  // namespace stream_id

enum class VariantKind {
  kScfa,
  kFedAvg,
  kFedProx,
  kScaffold,
  kFedAdam,
  kLocalOnly,
  kCentralized,
};

struct AlgorithmVariant {
  VariantKind kind = VariantKind::kScfa;
  double fedprox_mu = 0.01;
  // FedAdam server step
  double server_lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double adam_eps = 1e-8;
};

inline std::string variant_name(VariantKind kind) {
  switch (kind) {
    case VariantKind::kScfa: return "scfa";
    case VariantKind::kFedAvg: return "fedavg";
    case VariantKind::kFedProx: return "fedprox";
    case VariantKind::kScaffold: return "scaffold";
    case VariantKind::kFedAdam: return "fedadam";
    case VariantKind::kLocalOnly: return "local_only";
    case VariantKind::kCentralized: return "centralized";
  }
  return "?";
}

inline VariantKind variant_from_name(const std::string& s) {
  if (s == "scfa") return VariantKind::kScfa;
  if (s == "fedavg") return VariantKind::kFedAvg;
  if (s == "fedprox") return VariantKind::kFedProx;
  if (s == "scaffold") return VariantKind::kScaffold;
  if (s == "fedadam") return VariantKind::kFedAdam;
  if (s == "local_only") return VariantKind::kLocalOnly;
  if (s == "centralized") return VariantKind::kCentralized;
  throw ConfigError("unknown variant '" + s + "'");
}

struct TrainConfig {
  int rounds = 50;             // T
  int local_epochs = 5;        // E
  double client_sample_rate = 1.0;
  double learning_rate = 0.01; // eta
  bool cosine_decay = true;
  int batch_size = 32;
  std::uint64_t master_seed = 0;
};

inline void validate(const TrainConfig& cfg) {
  if (cfg.rounds < 0) throw ConfigError("rounds must be >= 0");
  if (cfg.local_epochs < 1) throw ConfigError("local_epochs must be >= 1");
  if (!(cfg.client_sample_rate > 0.0 && cfg.client_sample_rate <= 1.0)) {
    throw ConfigError("client_sample_rate must be in (0,1]");
  }
  if (!(cfg.learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
}

// Per-round learning rate: eta * 0.5 * (1 + cos(pi t / T)) under cosine
// decay, constant otherwise.
inline double round_learning_rate(const TrainConfig& cfg, int round) {
  if (!cfg.cosine_decay) return cfg.learning_rate;
  return cfg.learning_rate * 0.5 *
         (1.0 + std::cos(3.141592653589793238462643383279 *
                         static_cast<double>(round) /
                         static_cast<double>(cfg.rounds)));
}

struct ClientUpdate {
  int client_id = 0;
  std::vector<double> delta;  // w_local_end - w_round_start
  std::size_t n_k = 0;
  double local_loss_after = 0.0;
};

struct RoundRecord {
  int round = 0;                      // 1-based
  std::vector<int> participants;     // ascending client ids
  std::vector<double> validity;      // s_k per participant
  std::vector<double> weights;       // alpha_k per participant
  double rho = 0.0;
  double grad_norm_sq = 0.0;         // ||grad F(w)||^2 at round start
  double global_loss = 0.0;          // objective after the round's update
  double metric = 0.0;               // held-out metric after the update
  double snr = NAN;                  // DP diagnostic; NaN when DP disabled
  bool degenerate = false;           // aggregation skipped
  double wall_ms = 0.0;              // not serialized: would break replay
};

struct ExperimentSetup {
  ModelSpec model;
  std::vector<ClientDataset> clients;
  Dataset eval;                 // held-out split for the metric
  ConstraintSet constraints;
  TrainConfig train;
  DpConfig dp;
};

struct ExperimentResult {
  std::vector<RoundRecord> records;
  ParamVector final_params;
  std::vector<std::string> events;
};

// Uniform sample of floor(rate*K) clients (at least one), without
// replacement, returned ascending. Deterministic in (master_seed, round).
inline std::vector<int> sample_clients(int num_clients, double rate, int round,
                                       std::uint64_t master_seed) {
  if (!(rate > 0.0 && rate <= 1.0)) throw ConfigError("sample rate must be in (0,1]");
  // Nudge before flooring so rates like 0.6 * 5 select exactly 3.
  const int m = std::clamp(
      static_cast<int>(std::floor(rate * num_clients + 1e-9)), 1, num_clients);
  std::vector<int> ids(static_cast<std::size_t>(num_clients));
  std::iota(ids.begin(), ids.end(), 0);
  RngStream stream = RngStream::derived(
      master_seed, {stream_id::kClientSample, static_cast<std::uint64_t>(round)});
  for (int i = 0; i < m; ++i) {
    const int j = i + static_cast<int>(stream.next_below(
                          static_cast<std::uint64_t>(num_clients - i)));
    std::swap(ids[static_cast<std::size_t>(i)], ids[static_cast<std::size_t>(j)]);
  }
  ids.resize(static_cast<std::size_t>(m));
  std::sort(ids.begin(), ids.end());
  return ids;
}

struct LocalTrainOptions {
  AlgorithmVariant variant;
  ModelSpec model_spec;
  double eta = 0.01;  // this round's learning rate
  // SCAFFOLD variates; both null for other variants.
  const std::vector<double>* scaffold_server_c = nullptr;
  const std::vector<double>* scaffold_client_c = nullptr;
};

struct LocalTrainResult {
  ClientUpdate update;
  bool diverged = false;
  int steps = 0;
  std::vector<double> scaffold_client_c_new;
};

// E epochs of minibatch SGD from `start`. FedProx adds mu*(w - start) to
// each gradient; SCAFFOLD applies the control-variate correction c - c_k.
inline LocalTrainResult local_train(const ClientDataset& client,
                                    const ParamVector& start,
                                    const TrainConfig& cfg,
                                    const LocalTrainOptions& opt,
                                    RngStream stream) {
  const std::size_t n = client.examples.size();
  if (n == 0) throw ConfigError("local_train: empty client");
  const int d = static_cast<int>(start.size());
  ParamVector w = start;
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Dataset batch;
  int steps = 0;

  const bool fedprox = opt.variant.kind == VariantKind::kFedProx &&
                       opt.variant.fedprox_mu != 0.0;
  const bool scaffold = opt.variant.kind == VariantKind::kScaffold &&
                        opt.scaffold_server_c && opt.scaffold_client_c;

  for (int epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    stream.shuffle(order);
    for (std::size_t pos = 0; pos < n; pos += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(n, pos + static_cast<std::size_t>(cfg.batch_size));
      batch.clear();
      for (std::size_t i = pos; i < stop; ++i) {
        batch.push_back(client.examples[static_cast<std::size_t>(order[i])]);
      }
      GradientEstimate g = gradient(opt.model_spec, w, batch);
      if (fedprox) {
        for (int j = 0; j < d; ++j) {
          g.values[static_cast<std::size_t>(j)] +=
              opt.variant.fedprox_mu *
              (w[static_cast<std::size_t>(j)] - start[static_cast<std::size_t>(j)]);
        }
      }
      if (scaffold) {
        for (int j = 0; j < d; ++j) {
          g.values[static_cast<std::size_t>(j)] +=
              (*opt.scaffold_server_c)[static_cast<std::size_t>(j)] -
              (*opt.scaffold_client_c)[static_cast<std::size_t>(j)];
        }
      }
      for (int j = 0; j < d; ++j) {
        w[static_cast<std::size_t>(j)] -= opt.eta * g.values[static_cast<std::size_t>(j)];
      }
      ++steps;
    }
  }

  LocalTrainResult res;
  res.update.client_id = client.client_id;
  res.update.n_k = n;
  res.update.delta = sub(w, start);
  res.steps = steps;
  res.diverged = !all_finite(res.update.delta);
  if (!res.diverged) {
    res.update.local_loss_after = loss(opt.model_spec, w, client.examples);
  }
  if (scaffold) {
    // Option-II variate refresh: c_k+ = c_k - c + (start - w_end)/(steps*eta).
    res.scaffold_client_c_new.resize(static_cast<std::size_t>(d));
    const double denom = static_cast<double>(steps) * opt.eta;
    for (int j = 0; j < d; ++j) {
      const double drift =
          denom != 0.0
              ? (start[static_cast<std::size_t>(j)] - w[static_cast<std::size_t>(j)]) / denom
              : 0.0;
      res.scaffold_client_c_new[static_cast<std::size_t>(j)] =
          (*opt.scaffold_client_c)[static_cast<std::size_t>(j)] -
          (*opt.scaffold_server_c)[static_cast<std::size_t>(j)] + drift;
    }
  }
  return res;
}

// Validity reports for each tentative model w_temp = w_t + delta_k, in the
// given (ascending client) order.
inline std::vector<ValidityReport> validate_round(
    std::span<const ClientUpdate> updates, const ParamVector& w_t,
    const ConstraintSet& set, const ModelSpec& spec) {
  if (updates.empty()) throw ConfigError("validate_round: no updates");
  std::vector<ValidityReport> reports;
  reports.reserve(updates.size());
  for (const ClientUpdate& u : updates) {
    const ParamVector w_temp = add(w_t, u.delta);
    reports.push_back(validity_score(set, spec, w_temp, u.client_id));
  }
  return reports;
}

struct FedAdamState {
  std::vector<double> m, v;
};

struct AggregationOutcome {
  std::vector<double> applied_delta;  // what gets added to the global model
  std::vector<double> base_delta;     // weighted update before server adaptation
  std::vector<double> weights;        // alpha_k per update
  bool degenerate = false;            // all weights zero; model unchanged
};

// Phase-3 weighting. SCFA uses alpha_k = n_k s_k / sum n_j s_j; the other
// federated variants weight by sample count alone. FedAdam applies its
// server step to the sample-weighted delta. Summation runs in ascending
// client-id order.
inline AggregationOutcome aggregate(std::span<const ClientUpdate> updates,
                                    std::span<const ValidityReport> reports,
                                    const AlgorithmVariant& variant,
                                    FedAdamState* adam = nullptr) {
  if (updates.empty()) throw ConfigError("aggregate: no updates");
  if (updates.size() != reports.size()) {
    throw ConfigError("aggregate: reports do not match updates");
  }
  const std::size_t d = updates[0].delta.size();
  AggregationOutcome out;
  out.weights.resize(updates.size(), 0.0);

  double wsum = 0.0;
  for (std::size_t k = 0; k < updates.size(); ++k) {
    const double s = variant.kind == VariantKind::kScfa ? reports[k].score : 1.0;
    out.weights[k] = static_cast<double>(updates[k].n_k) * s;
    wsum += out.weights[k];
  }
  out.base_delta.assign(d, 0.0);
  if (wsum <= 0.0) {
    out.degenerate = true;
    std::fill(out.weights.begin(), out.weights.end(), 0.0);
    out.applied_delta = out.base_delta;
    return out;
  }
  for (std::size_t k = 0; k < updates.size(); ++k) {
    out.weights[k] /= wsum;
    axpy(out.weights[k], updates[k].delta, out.base_delta);
  }

  if (variant.kind == VariantKind::kFedAdam) {
    if (!adam) throw ConfigError("aggregate: FedAdam requires server state");
    if (adam->m.empty()) {
      adam->m.assign(d, 0.0);
      adam->v.assign(d, 0.0);
    }
    out.applied_delta.resize(d);
    for (std::size_t j = 0; j < d; ++j) {
      adam->m[j] = variant.beta1 * adam->m[j] + (1.0 - variant.beta1) * out.base_delta[j];
      adam->v[j] = variant.beta2 * adam->v[j] +
                   (1.0 - variant.beta2) * out.base_delta[j] * out.base_delta[j];
      out.applied_delta[j] =
          variant.server_lr * adam->m[j] / (std::sqrt(adam->v[j]) + variant.adam_eps);
    }
  } else {
    out.applied_delta = out.base_delta;
  }
  return out;
}

// F1 of the positive class at threshold 0.5 (classifiers); 0 when no true or
// predicted positives exist.
inline double f1_score(const ModelSpec& spec, const ParamVector& params,
                       std::span<const Example> eval) {
  long tp = 0, fp = 0, fn = 0;
  for (const Example& ex : eval) {
    const bool pred = predict(spec, params, ex.features) >= 0.5;
    const bool truth = ex.label == 1.0;
    if (pred && truth) ++tp;
    else if (pred && !truth) ++fp;
    else if (!pred && truth) ++fn;
  }
  const long denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

// Coefficient of determination on raw predictions (regression metric).
inline double r2_score(const ModelSpec& spec, const ParamVector& params,
                       std::span<const Example> eval) {
  if (eval.empty()) return 0.0;
  double mean = 0.0;
  for (const Example& ex : eval) mean += ex.label;
  mean /= static_cast<double>(eval.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (const Example& ex : eval) {
    const double pred = predict(spec, params, ex.features);
    ss_res += (pred - ex.label) * (pred - ex.label);
    ss_tot += (ex.label - mean) * (ex.label - mean);
  }
  return ss_tot == 0.0 ? 0.0 : 1.0 - ss_res / ss_tot;
}

inline double eval_metric(const ModelSpec& spec, const ParamVector& params,
                          std::span<const Example> eval) {
  return is_classifier(spec) ? f1_score(spec, params, eval)
                             : r2_score(spec, params, eval);
}

// Deterministic initial model: zeros for the affine models (the symmetric
// start), small uniform weights for the MLP (zero init would be a saddle).
inline ParamVector initial_params(const ModelSpec& spec, std::uint64_t master_seed) {
  const int d = param_count(spec);
  ParamVector w(static_cast<std::size_t>(d), 0.0);
  if (spec.kind == ModelKind::kMlpOneHidden) {
    RngStream stream = RngStream::derived(master_seed, {stream_id::kInitParams});
    const double r = 0.5 / std::sqrt(static_cast<double>(spec.input_dim));
    for (double& x : w) x = stream.next_uniform(-r, r);
  }
  return w;
}

namespace detail {

inline std::size_t total_samples(std::span<const ClientDataset> clients) {
  std::size_t n = 0;
  for (const auto& c : clients) n += c.size();
  return n;
}

inline ExperimentResult run_local_only(const ExperimentSetup& su) {
  const int k = static_cast<int>(su.clients.size());
  const std::size_t n = total_samples(su.clients);
  ExperimentResult res;
  ParamVector w0 = initial_params(su.model, su.train.master_seed);
  std::vector<ParamVector> models(static_cast<std::size_t>(k), w0);

  for (int t = 1; t <= su.train.rounds; ++t) {
    const auto t0 = std::chrono::steady_clock::now();
    RoundRecord rec;
    rec.round = t;
    const double eta = round_learning_rate(su.train, t);
    double grad_acc = 0.0, loss_acc = 0.0, metric_acc = 0.0;
    for (int c = 0; c < k; ++c) {
      LocalTrainOptions opt;
      opt.variant.kind = VariantKind::kLocalOnly;
      opt.model_spec = su.model;
      opt.eta = eta;
      RngStream stream = RngStream::derived(
          su.train.master_seed,
          {stream_id::kLocalTrain, static_cast<std::uint64_t>(t),
           static_cast<std::uint64_t>(c)});
      const LocalTrainResult ltr =
          local_train(su.clients[static_cast<std::size_t>(c)],
                      models[static_cast<std::size_t>(c)], su.train, opt, stream);
      if (ltr.diverged) {
        res.events.push_back("round " + std::to_string(t) + ": client " +
                             std::to_string(c) + " diverged (kept previous model)");
      } else {
        axpy(1.0, ltr.update.delta, models[static_cast<std::size_t>(c)]);
      }
      const double share =
          static_cast<double>(su.clients[static_cast<std::size_t>(c)].size()) /
          static_cast<double>(n);
      const GradientEstimate gk =
          gradient(su.model, models[static_cast<std::size_t>(c)],
                   su.clients[static_cast<std::size_t>(c)].examples);
      grad_acc += share * norm_sq(gk.values);
      loss_acc += share * loss(su.model, models[static_cast<std::size_t>(c)],
                               su.clients[static_cast<std::size_t>(c)].examples);
      metric_acc += eval_metric(su.model, models[static_cast<std::size_t>(c)], su.eval);
      rec.participants.push_back(c);
      rec.validity.push_back(
          validity_score(su.constraints, su.model, models[static_cast<std::size_t>(c)], c)
              .score);
      rec.weights.push_back(share);
    }
    rec.grad_norm_sq = grad_acc;
    rec.global_loss = loss_acc;
    rec.metric = metric_acc / static_cast<double>(k);
    double min_s = 1.0;
    for (double s : rec.validity) min_s = std::min(min_s, s);
    rec.rho = 1.0 - min_s;
    rec.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
    res.records.push_back(std::move(rec));
  }

  // Final model: sample-weighted average of the per-client models.
  ParamVector avg(w0.size(), 0.0);
  for (int c = 0; c < k; ++c) {
    axpy(static_cast<double>(su.clients[static_cast<std::size_t>(c)].size()) /
             static_cast<double>(n),
         models[static_cast<std::size_t>(c)], avg);
  }
  res.final_params = std::move(avg);
  return res;
}

inline ExperimentResult run_centralized(const ExperimentSetup& su) {
  const int k = static_cast<int>(su.clients.size());
  ExperimentResult res;
  ParamVector w = initial_params(su.model, su.train.master_seed);
  Dataset pooled;
  for (const auto& c : su.clients) {
    pooled.insert(pooled.end(), c.examples.begin(), c.examples.end());
  }
  const std::size_t n = pooled.size();
  std::vector<ClientDataset> pooled_as_client(1);
  pooled_as_client[0].client_id = 0;
  pooled_as_client[0].examples = pooled;

  for (int t = 1; t <= su.train.rounds; ++t) {
    const auto t0 = std::chrono::steady_clock::now();
    RoundRecord rec;
    rec.round = t;
    rec.grad_norm_sq = norm_sq(global_gradient(su.model, w, pooled_as_client));
    const double eta = round_learning_rate(su.train, t);
    // Match the federated variants' total gradient steps for this round.
    const std::vector<int> sampled = sample_clients(
        k, su.train.client_sample_rate, t, su.train.master_seed);
    long steps = 0;
    for (int c : sampled) {
      const std::size_t nk = su.clients[static_cast<std::size_t>(c)].size();
      steps += static_cast<long>(su.train.local_epochs) *
               static_cast<long>((nk + su.train.batch_size - 1) /
                                 static_cast<std::size_t>(su.train.batch_size));
    }
    RngStream stream = RngStream::derived(
        su.train.master_seed,
        {stream_id::kLocalTrain, static_cast<std::uint64_t>(t),
         static_cast<std::uint64_t>(k)});  // pseudo-client id K
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    stream.shuffle(order);
    std::size_t cursor = 0;
    Dataset batch;
    for (long s = 0; s < steps; ++s) {
      if (cursor + static_cast<std::size_t>(su.train.batch_size) > n) {
        stream.shuffle(order);
        cursor = 0;
      }
      const std::size_t stop =
          std::min(n, cursor + static_cast<std::size_t>(su.train.batch_size));
      batch.clear();
      for (std::size_t i = cursor; i < stop; ++i) {
        batch.push_back(pooled[static_cast<std::size_t>(order[i])]);
      }
      cursor = stop;
      const GradientEstimate g = gradient(su.model, w, batch);
      for (std::size_t j = 0; j < w.size(); ++j) w[j] -= eta * g.values[j];
    }
    rec.participants = sampled;
    const ValidityReport rep = validity_score(su.constraints, su.model, w, 0);
    rec.validity.assign(1, rep.score);
    rec.weights.assign(1, 1.0);
    rec.rho = 1.0 - rep.score;
    rec.global_loss = loss(su.model, w, pooled);
    rec.metric = eval_metric(su.model, w, su.eval);
    rec.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
    res.records.push_back(std::move(rec));
  }
  res.final_params = std::move(w);
  return res;
}

}  // namespace detail

// Executes T rounds of the requested variant over the simulated federation.
// Fully deterministic in (setup, variant): all randomness flows through
// streams keyed by (master_seed, phase, round, client).
inline ExperimentResult run_experiment(const ExperimentSetup& su,
                                       const AlgorithmVariant& variant) {
  validate(su.train);
  validate(su.dp);
  validate(su.constraints);
  if (su.clients.empty()) throw ConfigError("run_experiment: no clients");
  for (const auto& c : su.clients) {
    if (c.examples.empty()) throw ConfigError("run_experiment: empty client dataset");
  }

  if (variant.kind == VariantKind::kLocalOnly) return detail::run_local_only(su);
  if (variant.kind == VariantKind::kCentralized) return detail::run_centralized(su);

  const int k = static_cast<int>(su.clients.size());
  const int d = param_count(su.model);
  ExperimentResult res;
  ParamVector w = initial_params(su.model, su.train.master_seed);

  // SCAFFOLD control variates.
  std::vector<double> server_c;
  std::vector<std::vector<double>> client_c;
  if (variant.kind == VariantKind::kScaffold) {
    server_c.assign(static_cast<std::size_t>(d), 0.0);
    client_c.assign(static_cast<std::size_t>(k),
                    std::vector<double>(static_cast<std::size_t>(d), 0.0));
  }
  FedAdamState adam;

  for (int t = 1; t <= su.train.rounds; ++t) {
    const auto t0 = std::chrono::steady_clock::now();
    RoundRecord rec;
    rec.round = t;
    rec.grad_norm_sq = norm_sq(global_gradient(su.model, w, su.clients));
    const double eta = round_learning_rate(su.train, t);
    const std::vector<int> sampled = sample_clients(
        k, su.train.client_sample_rate, t, su.train.master_seed);

    // Phase 1: local training.
    std::vector<ClientUpdate> clean;
    std::vector<std::vector<double>> scaffold_new;
    for (int c : sampled) {
      LocalTrainOptions opt;
      opt.variant = variant;
      opt.model_spec = su.model;
      opt.eta = eta;
      if (variant.kind == VariantKind::kScaffold) {
        opt.scaffold_server_c = &server_c;
        opt.scaffold_client_c = &client_c[static_cast<std::size_t>(c)];
      }
      RngStream stream = RngStream::derived(
          su.train.master_seed,
          {stream_id::kLocalTrain, static_cast<std::uint64_t>(t),
           static_cast<std::uint64_t>(c)});
      LocalTrainResult ltr = local_train(su.clients[static_cast<std::size_t>(c)],
                                         w, su.train, opt, stream);
      if (ltr.diverged) {
        res.events.push_back("round " + std::to_string(t) + ": client " +
                             std::to_string(c) + " diverged and was dropped");
        continue;
      }
      clean.push_back(std::move(ltr.update));
      if (variant.kind == VariantKind::kScaffold) {
        scaffold_new.push_back(std::move(ltr.scaffold_client_c_new));
      }
    }

    if (clean.empty()) {
      rec.degenerate = true;
      rec.rho = 0.0;
      rec.global_loss = global_objective(su.model, w, su.clients);
      rec.metric = eval_metric(su.model, w, su.eval);
      res.events.push_back("round " + std::to_string(t) +
                           ": no usable client updates; model unchanged");
      rec.wall_ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
      res.records.push_back(std::move(rec));
      continue;
    }

    // DP: clip + noise on the transmitted deltas.
    std::vector<ClientUpdate> transmitted = clean;
    if (su.dp.enabled) {
      for (ClientUpdate& u : transmitted) {
        RngStream stream = RngStream::derived(
            su.train.master_seed,
            {stream_id::kDpNoise, static_cast<std::uint64_t>(t),
             static_cast<std::uint64_t>(u.client_id)});
        u.delta = privatize(u.delta, su.dp, stream);
      }
    }

    // Phase 2: constraint validation of what the server will aggregate.
    const std::vector<ClientUpdate>& validated =
        (su.dp.enabled && !su.dp.validate_noisy) ? clean : transmitted;
    const std::vector<ValidityReport> reports =
        validate_round(validated, w, su.constraints, su.model);
    rec.rho = violation_rate(reports);

    // Phase 3: weighted aggregation.
    AggregationOutcome agg = aggregate(transmitted, reports, variant, &adam);
    if (agg.degenerate) {
      res.events.push_back("round " + std::to_string(t) +
                           ": all validity scores zero; model unchanged");
    }

    if (su.dp.enabled) {
      // Counterfactual clean aggregate under the same policy, for the SNR
      // diagnostic. FedAdam is compared before the server step.
      const std::vector<ValidityReport> clean_reports =
          validate_round(clean, w, su.constraints, su.model);
      FedAdamState scratch = adam;
      const AggregationOutcome clean_agg =
          aggregate(clean, clean_reports, variant, &scratch);
      if (!clean_agg.degenerate && !agg.degenerate) {
        rec.snr = gradient_snr(clean_agg.base_delta, agg.base_delta);
      }
    }

    if (!agg.degenerate) {
      axpy(1.0, agg.applied_delta, w);
      if (variant.kind == VariantKind::kScaffold) {
        // c <- c + (1/K) sum_{k in S} (c_k_new - c_k_old)
        for (std::size_t i = 0; i < clean.size(); ++i) {
          const int c = clean[i].client_id;
          for (int j = 0; j < d; ++j) {
            server_c[static_cast<std::size_t>(j)] +=
                (scaffold_new[i][static_cast<std::size_t>(j)] -
                 client_c[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)]) /
                static_cast<double>(k);
          }
          client_c[static_cast<std::size_t>(c)] = scaffold_new[i];
        }
      }
    }
    rec.degenerate = agg.degenerate;
    for (std::size_t i = 0; i < clean.size(); ++i) {
      rec.participants.push_back(clean[i].client_id);
      rec.validity.push_back(reports[i].score);
      rec.weights.push_back(agg.weights[i]);
    }
    rec.global_loss = global_objective(su.model, w, su.clients);
    rec.metric = eval_metric(su.model, w, su.eval);
    rec.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
    res.records.push_back(std::move(rec));
  }

  res.final_params = std::move(w);
  return res;
}

// Rounds-to-convergence: first round whose held-out metric reaches
// `fraction` of the run's final metric; -1 when the run is empty.
inline int rounds_to_convergence(std::span<const RoundRecord> records,
                                 double fraction = 0.9) {
  if (records.empty()) return -1;
  const double threshold = fraction * records.back().metric;
  for (const RoundRecord& r : records) {
    if (r.metric >= threshold) return r.round;
  }
  return records.back().round;
}

inline double mean_rho(std::span<const RoundRecord> records) {
  if (records.empty()) return 0.0;
  double s = 0.0;
  for (const RoundRecord& r : records) s += r.rho;
  return s / static_cast<double>(records.size());
}

}  // namespace scfa
