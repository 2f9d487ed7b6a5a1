// Copyright 2026 The scfa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "scfa/constraints.hpp"
#include "scfa/data.hpp"
#include "scfa/engine.hpp"
#include "scfa/errors.hpp"
#include "scfa/privacy.hpp"

namespace scfa {

using Json = nlohmann::ordered_json;

inline constexpr const char* kConfigSchemaVersion = "scfa-config-v1";

namespace stream_id {
inline constexpr std::uint64_t kGroundTruth = 0x50;
inline constexpr std::uint64_t kEvalData = 0x51;
}  // namespace stream_id

// ---------------------------------------------------------------------------
// Config structs. Everything an experiment needs lives in one JSON document;
// the manifest written next to each run is the same document fully resolved,
// so a manifest alone reproduces the run.
// ---------------------------------------------------------------------------

struct GroundTruthConfig {
  std::string mode = "seeded";  // "seeded" | "explicit"
  double scale = 1.5;           // seeded: w_j = scale * g_j / sqrt(p), bias 0
  std::vector<double> values;   // explicit: full parameter vector
};

struct DataConfig {
  int num_samples = 2000;
  int eval_samples = 1000;
  double positive_rate = 0.5;
  double noise_std = 0.0;
  double feature_corr = 0.0;
  std::uint64_t seed = 0;
  GroundTruthConfig ground_truth;
};

struct ConstraintsConfig {
  std::string source = "none";  // "none" | "file" | "inline" | "generator"
  std::string file;
  std::string inline_text;
  InformativeSetConfig generator;
  double target_rho = 0.0;
  std::uint64_t injection_seed = 0;
};

struct PrivacyConfig {
  bool enabled = false;
  double epsilon = 10.0;
  double delta = 1e-5;
  double clip_threshold = 1.0;
  bool validate_noisy = true;
};

struct ExperimentConfig {
  ModelSpec model;
  DataConfig data;
  PartitionSpec partition;
  ConstraintsConfig constraints;
  PrivacyConfig privacy;
  TrainConfig training;
  std::vector<AlgorithmVariant> variants;
};

// ---------------------------------------------------------------------------
// JSON helpers with field-path error messages.
// ---------------------------------------------------------------------------
namespace jsonutil {

inline std::string joined(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

inline const Json& require(const Json& j, const std::string& key,
                           const std::string& path) {
  if (!j.is_object() || !j.contains(key)) {
    throw ConfigError("missing required field", joined(path, key));
  }
  return j.at(key);
}

template <typename T>
T require_as(const Json& j, const std::string& key, const std::string& path) {
  const Json& v = require(j, key, path);
  try {
    return v.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("wrong type", joined(path, key));
  }
}

template <typename T>
T get_or(const Json& j, const std::string& key, T fallback,
         const std::string& path) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("wrong type", joined(path, key));
  }
}

}  // namespace jsonutil

inline ModelSpec parse_model(const Json& j, const std::string& path) {
  ModelSpec spec;
  const std::string kind = jsonutil::require_as<std::string>(j, "kind", path);
  if (kind == "linear-regression") spec.kind = ModelKind::kLinearRegression;
  else if (kind == "logistic-regression") spec.kind = ModelKind::kLogisticRegression;
  else if (kind == "mlp-1-hidden") spec.kind = ModelKind::kMlpOneHidden;
  else throw ConfigError("unknown model kind '" + kind + "'", path + ".kind");
  spec.input_dim = jsonutil::require_as<int>(j, "input_dim", path);
  spec.hidden_width = jsonutil::get_or<int>(j, "hidden_width", 0, path);
  if (spec.input_dim < 1) throw ConfigError("must be >= 1", path + ".input_dim");
  if (spec.kind == ModelKind::kMlpOneHidden && spec.hidden_width < 1) {
    throw ConfigError("mlp requires hidden_width >= 1", path + ".hidden_width");
  }
  return spec;
}

inline ExperimentConfig parse_experiment_config(const Json& j) {
  ExperimentConfig cfg;
  const std::string version =
      jsonutil::get_or<std::string>(j, "schema_version", kConfigSchemaVersion, "");
  if (version != kConfigSchemaVersion) {
    throw ConfigError("unsupported schema version '" + version + "'",
                      "schema_version");
  }

  cfg.model = parse_model(jsonutil::require(j, "model", ""), "model");

  {
    const Json& d = jsonutil::require(j, "data", "");
    cfg.data.num_samples = jsonutil::require_as<int>(d, "num_samples", "data");
    cfg.data.eval_samples = jsonutil::get_or<int>(d, "eval_samples", 1000, "data");
    cfg.data.positive_rate =
        jsonutil::get_or<double>(d, "positive_rate", 0.5, "data");
    cfg.data.noise_std = jsonutil::get_or<double>(d, "noise_std", 0.0, "data");
    cfg.data.feature_corr =
        jsonutil::get_or<double>(d, "feature_corr", 0.0, "data");
    cfg.data.seed = jsonutil::require_as<std::uint64_t>(d, "seed", "data");
    if (d.contains("ground_truth")) {
      const Json& g = d.at("ground_truth");
      cfg.data.ground_truth.mode =
          jsonutil::get_or<std::string>(g, "mode", "seeded", "data.ground_truth");
      cfg.data.ground_truth.scale =
          jsonutil::get_or<double>(g, "scale", 1.5, "data.ground_truth");
      if (cfg.data.ground_truth.mode == "explicit") {
        cfg.data.ground_truth.values = jsonutil::require_as<std::vector<double>>(
            g, "values", "data.ground_truth");
      } else if (cfg.data.ground_truth.mode != "seeded") {
        throw ConfigError("mode must be 'seeded' or 'explicit'",
                          "data.ground_truth.mode");
      }
    }
  }

  {
    const Json& p = jsonutil::require(j, "partition", "");
    cfg.partition.num_clients =
        jsonutil::require_as<int>(p, "num_clients", "partition");
    cfg.partition.dirichlet_alpha =
        jsonutil::require_as<double>(p, "alpha", "partition");
    cfg.partition.seed = jsonutil::require_as<std::uint64_t>(p, "seed", "partition");
  }

  if (j.contains("constraints")) {
    const Json& c = j.at("constraints");
    cfg.constraints.source =
        jsonutil::get_or<std::string>(c, "source", "none", "constraints");
    if (cfg.constraints.source == "file") {
      cfg.constraints.file =
          jsonutil::require_as<std::string>(c, "file", "constraints");
    } else if (cfg.constraints.source == "inline") {
      cfg.constraints.inline_text =
          jsonutil::require_as<std::string>(c, "inline", "constraints");
    } else if (cfg.constraints.source == "generator") {
      const Json& g = jsonutil::require(c, "generator", "constraints");
      InformativeSetConfig& gen = cfg.constraints.generator;
      const std::string gp = "constraints.generator";
      gen.temporal = jsonutil::get_or<int>(g, "temporal", 0, gp);
      gen.causal = jsonutil::get_or<int>(g, "causal", 0, gp);
      gen.capacity = jsonutil::get_or<int>(g, "capacity", 0, gp);
      gen.physical = jsonutil::get_or<int>(g, "physical", 0, gp);
      gen.probe_scale = jsonutil::get_or<double>(g, "probe_scale", 1.0, gp);
      gen.strong_logit = jsonutil::get_or<double>(g, "strong_logit", 1.5, gp);
      gen.margins = jsonutil::get_or<std::vector<double>>(
          g, "margins", {0.02, 0.05, 0.10, 0.15}, gp);
      gen.seed = jsonutil::get_or<std::uint64_t>(g, "seed", 0, gp);
      if (gen.temporal + gen.causal + gen.capacity + gen.physical < 1) {
        throw ConfigError("generator must request at least one rule", gp);
      }
    } else if (cfg.constraints.source != "none") {
      throw ConfigError("source must be none|file|inline|generator",
                        "constraints.source");
    }
    cfg.constraints.target_rho =
        jsonutil::get_or<double>(c, "target_rho", 0.0, "constraints");
    cfg.constraints.injection_seed =
        jsonutil::get_or<std::uint64_t>(c, "injection_seed", 0, "constraints");
  }

  if (j.contains("privacy")) {
    const Json& p = j.at("privacy");
    cfg.privacy.enabled = jsonutil::get_or<bool>(p, "enabled", false, "privacy");
    cfg.privacy.epsilon = jsonutil::get_or<double>(p, "epsilon", 10.0, "privacy");
    cfg.privacy.delta = jsonutil::get_or<double>(p, "delta", 1e-5, "privacy");
    cfg.privacy.clip_threshold =
        jsonutil::get_or<double>(p, "clip_threshold", 1.0, "privacy");
    cfg.privacy.validate_noisy =
        jsonutil::get_or<bool>(p, "validate_noisy", true, "privacy");
  }

  {
    const Json& t = jsonutil::require(j, "training", "");
    cfg.training.rounds = jsonutil::require_as<int>(t, "rounds", "training");
    cfg.training.local_epochs =
        jsonutil::require_as<int>(t, "local_epochs", "training");
    cfg.training.client_sample_rate =
        jsonutil::get_or<double>(t, "client_sample_rate", 1.0, "training");
    cfg.training.learning_rate =
        jsonutil::require_as<double>(t, "learning_rate", "training");
    cfg.training.cosine_decay =
        jsonutil::get_or<bool>(t, "cosine_decay", true, "training");
    cfg.training.batch_size = jsonutil::get_or<int>(t, "batch_size", 32, "training");
    cfg.training.master_seed =
        jsonutil::require_as<std::uint64_t>(t, "master_seed", "training");
  }

  {
    const Json& vs = jsonutil::require(j, "variants", "");
    if (!vs.is_array() || vs.empty()) {
      throw ConfigError("must be a non-empty array", "variants");
    }
    int i = 0;
    for (const Json& v : vs) {
      const std::string path = "variants[" + std::to_string(i++) + "]";
      AlgorithmVariant av;
      av.kind = variant_from_name(jsonutil::require_as<std::string>(v, "kind", path));
      av.fedprox_mu = jsonutil::get_or<double>(v, "mu", 0.01, path);
      av.server_lr = jsonutil::get_or<double>(v, "server_lr", 0.01, path);
      av.beta1 = jsonutil::get_or<double>(v, "beta1", 0.9, path);
      av.beta2 = jsonutil::get_or<double>(v, "beta2", 0.99, path);
      av.adam_eps = jsonutil::get_or<double>(v, "eps", 1e-8, path);
      cfg.variants.push_back(av);
    }
  }
  return cfg;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  Json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what());
  }
  return parse_experiment_config(j);
}

// ---------------------------------------------------------------------------
// Materialization: config -> data, partitions, constraints, setup.
// ---------------------------------------------------------------------------
struct MaterializedExperiment {
  ExperimentConfig config;          // resolved (constraints inlined)
  ParamVector ground_truth;
  ConstraintSet base_constraints;   // before violation injection
  ExperimentSetup setup;            // constraints field holds the injected set
};

inline ParamVector resolve_ground_truth(const ModelSpec& model,
                                        const DataConfig& data) {
  const int d = param_count(model);
  if (data.ground_truth.mode == "explicit") {
    if (static_cast<int>(data.ground_truth.values.size()) != d) {
      throw ConfigError("expected " + std::to_string(d) + " values",
                        "data.ground_truth.values");
    }
    return data.ground_truth.values;
  }
  ParamVector w(static_cast<std::size_t>(d), 0.0);
  RngStream stream = RngStream::derived(data.seed, {stream_id::kGroundTruth});
  const double s =
      data.ground_truth.scale / std::sqrt(static_cast<double>(model.input_dim));
  // Affine models keep a zero bias so the truth is calibrated around the
  // symmetric start; the MLP fills every parameter.
  const int weights = model.kind == ModelKind::kMlpOneHidden ? d : d - 1;
  for (int i = 0; i < weights; ++i) {
    w[static_cast<std::size_t>(i)] = s * stream.next_gaussian();
  }
  return w;
}

inline MaterializedExperiment materialize(const ExperimentConfig& cfg) {
  MaterializedExperiment mat;
  mat.config = cfg;
  mat.ground_truth = resolve_ground_truth(cfg.model, cfg.data);

  SynthSpec synth;
  synth.num_samples = cfg.data.num_samples;
  synth.feature_dim = cfg.model.input_dim;
  synth.positive_rate = cfg.data.positive_rate;
  synth.noise_std = cfg.data.noise_std;
  synth.feature_corr = cfg.data.feature_corr;
  synth.model = cfg.model;
  synth.ground_truth = mat.ground_truth;
  const Dataset train_data = generate(synth, cfg.data.seed);

  SynthSpec eval_spec = synth;
  eval_spec.num_samples = cfg.data.eval_samples;
  const Dataset eval_data =
      generate(eval_spec, derive_key(cfg.data.seed, {stream_id::kEvalData}));

  mat.setup.model = cfg.model;
  mat.setup.clients = dirichlet_partition(train_data, cfg.partition);
  mat.setup.eval = eval_data;
  mat.setup.train = cfg.training;

  // Constraint anchor: the model training actually converges to. For the
  // affine classifiers that is the probit-matched reference implied by the
  // label generator, not the raw latent-score parameters.
  synth.ground_truth = mat.ground_truth;
  const ParamVector anchor = reference_classifier_params(synth);

  if (cfg.constraints.source == "file") {
    mat.base_constraints = load_constraints(cfg.constraints.file);
    // The manifest must reproduce the run without the external file.
    mat.config.constraints.source = "inline";
    mat.config.constraints.inline_text = constraints_to_text(mat.base_constraints);
    mat.config.constraints.file.clear();
  } else if (cfg.constraints.source == "inline") {
    std::istringstream in(cfg.constraints.inline_text);
    mat.base_constraints = constraints_from_text(in);
  } else if (cfg.constraints.source == "generator") {
    mat.base_constraints =
        make_informative_set(cfg.model, anchor, cfg.constraints.generator);
  }
  if (cfg.constraints.target_rho > 0.0) {
    mat.setup.constraints = inject_violations(
        mat.base_constraints, cfg.constraints.target_rho,
        cfg.constraints.injection_seed, cfg.model, anchor);
  } else {
    mat.setup.constraints = mat.base_constraints;
  }

  mat.setup.dp.enabled = cfg.privacy.enabled;
  mat.setup.dp.clip_threshold = cfg.privacy.clip_threshold;
  mat.setup.dp.validate_noisy = cfg.privacy.validate_noisy;
  mat.setup.dp.sigma =
      cfg.privacy.enabled
          ? noise_scale({cfg.privacy.epsilon, cfg.privacy.delta})
          : 0.0;
  return mat;
}

// ---------------------------------------------------------------------------
// Manifest serialization (same schema as the input config, fully resolved).
// ---------------------------------------------------------------------------
inline Json experiment_config_to_json(const ExperimentConfig& cfg) {
  Json j;
  j["schema_version"] = kConfigSchemaVersion;
  j["model"] = {{"kind", model_kind_name(cfg.model.kind)},
                {"input_dim", cfg.model.input_dim},
                {"hidden_width", cfg.model.hidden_width}};
  Json truth;
  truth["mode"] = cfg.data.ground_truth.mode;
  if (cfg.data.ground_truth.mode == "explicit") {
    truth["values"] = cfg.data.ground_truth.values;
  } else {
    truth["scale"] = cfg.data.ground_truth.scale;
  }
  j["data"] = {{"num_samples", cfg.data.num_samples},
               {"eval_samples", cfg.data.eval_samples},
               {"positive_rate", cfg.data.positive_rate},
               {"noise_std", cfg.data.noise_std},
               {"feature_corr", cfg.data.feature_corr},
               {"seed", cfg.data.seed},
               {"ground_truth", truth}};
  j["partition"] = {{"num_clients", cfg.partition.num_clients},
                    {"alpha", cfg.partition.dirichlet_alpha},
                    {"seed", cfg.partition.seed}};
  Json cons;
  cons["source"] = cfg.constraints.source;
  if (cfg.constraints.source == "file") cons["file"] = cfg.constraints.file;
  if (cfg.constraints.source == "inline") cons["inline"] = cfg.constraints.inline_text;
  if (cfg.constraints.source == "generator") {
    const InformativeSetConfig& g = cfg.constraints.generator;
    cons["generator"] = {{"temporal", g.temporal},   {"causal", g.causal},
                         {"capacity", g.capacity},   {"physical", g.physical},
                         {"probe_scale", g.probe_scale},
                         {"strong_logit", g.strong_logit},
                         {"margins", g.margins},     {"seed", g.seed}};
  }
  cons["target_rho"] = cfg.constraints.target_rho;
  cons["injection_seed"] = cfg.constraints.injection_seed;
  j["constraints"] = cons;
  j["privacy"] = {{"enabled", cfg.privacy.enabled},
                  {"epsilon", cfg.privacy.epsilon},
                  {"delta", cfg.privacy.delta},
                  {"clip_threshold", cfg.privacy.clip_threshold},
                  {"validate_noisy", cfg.privacy.validate_noisy}};
  j["training"] = {{"rounds", cfg.training.rounds},
                   {"local_epochs", cfg.training.local_epochs},
                   {"client_sample_rate", cfg.training.client_sample_rate},
                   {"learning_rate", cfg.training.learning_rate},
                   {"cosine_decay", cfg.training.cosine_decay},
                   {"batch_size", cfg.training.batch_size},
                   {"master_seed", cfg.training.master_seed}};
  Json vs = Json::array();
  for (const AlgorithmVariant& v : cfg.variants) {
    Json vj;
    vj["kind"] = variant_name(v.kind);
    if (v.kind == VariantKind::kFedProx) vj["mu"] = v.fedprox_mu;
    if (v.kind == VariantKind::kFedAdam) {
      vj["server_lr"] = v.server_lr;
      vj["beta1"] = v.beta1;
      vj["beta2"] = v.beta2;
      vj["eps"] = v.adam_eps;
    }
    vs.push_back(vj);
  }
  j["variants"] = vs;
  return j;
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline Json manifest_json(const ExperimentConfig& cfg) {
  Json j = experiment_config_to_json(cfg);
  j["created_utc"] = utc_timestamp();
  return j;
}

}  // namespace scfa
