// Copyright 2026 The scfa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "scfa/errors.hpp"
#include "scfa/linalg.hpp"

namespace scfa {

// Model parameters are a flat vector of doubles of fixed length d; layout is
// defined per model kind below.
using ParamVector = std::vector<double>;

struct Example {
  std::vector<double> features;
  double label = 0.0;  // {0,1} for classifiers, real for regression
};

using Dataset = std::vector<Example>;

enum class ModelKind {
  kLinearRegression,   // raw output w.x + b, squared error / 2
  kLogisticRegression, // sigmoid(w.x + b), binary cross-entropy
  kMlpOneHidden,       // sigmoid(v.tanh(Wx + c) + b), binary cross-entropy
};

struct ModelSpec {
  ModelKind kind = ModelKind::kLogisticRegression;
  int input_dim = 0;
  int hidden_width = 0;  // mlp only
};

// Parameter layouts:
//   linear/logistic: [w_0..w_{p-1}, b]                       d = p + 1
//   mlp:             [W row-major (h x p), c (h), v (h), b]  d = h*p + 2h + 1
inline int param_count(const ModelSpec& spec) {
  const int p = spec.input_dim;
  switch (spec.kind) {
    case ModelKind::kLinearRegression:
    case ModelKind::kLogisticRegression:
      return p + 1;
    case ModelKind::kMlpOneHidden:
      return spec.hidden_width * p + 2 * spec.hidden_width + 1;
  }
  return 0;
}

inline bool is_classifier(const ModelSpec& spec) {
  return spec.kind != ModelKind::kLinearRegression;
}

inline std::string model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::kLinearRegression: return "linear-regression";
    case ModelKind::kLogisticRegression: return "logistic-regression";
    case ModelKind::kMlpOneHidden: return "mlp-1-hidden";
  }
  return "?";
}

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
inline double softplus(double z) {
  if (z > 0.0) return z + std::log1p(std::exp(-z));
  return std::log1p(std::exp(z));
}

namespace detail {

inline void check_dims(const ModelSpec& spec, const ParamVector& params,
                       std::span<const double> x) {
  if (static_cast<int>(x.size()) != spec.input_dim) {
    throw ConfigError("feature length " + std::to_string(x.size()) +
                      " does not match model input_dim " +
                      std::to_string(spec.input_dim));
  }
  if (static_cast<int>(params.size()) != param_count(spec)) {
    throw ConfigError("parameter vector length " +
                      std::to_string(params.size()) +
                      " does not match model parameter count " +
                      std::to_string(param_count(spec)));
  }
}

}  // namespace detail

// Pre-activation output: the raw score for linear models, the logit for
// classifiers.
inline double predict_raw(const ModelSpec& spec, const ParamVector& params,
                          std::span<const double> x) {
  detail::check_dims(spec, params, x);
  const int p = spec.input_dim;
  switch (spec.kind) {
    case ModelKind::kLinearRegression:
    case ModelKind::kLogisticRegression: {
      double z = params[p];  // bias
      for (int j = 0; j < p; ++j) z += params[j] * x[j];
      return z;
    }
    case ModelKind::kMlpOneHidden: {
      const int h = spec.hidden_width;
      const double* W = params.data();
      const double* c = params.data() + h * p;
      const double* v = params.data() + h * p + h;
      const double b = params[h * p + 2 * h];
      double z = b;
      for (int i = 0; i < h; ++i) {
        double a = c[i];
        for (int j = 0; j < p; ++j) a += W[i * p + j] * x[j];
        z += v[i] * std::tanh(a);
      }
      return z;
    }
  }
  return 0.0;
}

// Model prediction as consumed by constraints and metrics: the raw value for
// regression, the positive-class probability for classifiers.
inline double predict(const ModelSpec& spec, const ParamVector& params,
                      std::span<const double> x) {
  const double z = predict_raw(spec, params, x);
  return is_classifier(spec) ? sigmoid(z) : z;
}

// Mean per-sample loss over the batch. Squared error halved for regression,
// binary cross-entropy for classifiers.
inline double loss(const ModelSpec& spec, const ParamVector& params,
                   std::span<const Example> batch) {
  if (batch.empty()) throw ConfigError("loss: empty batch");
  double total = 0.0;
  for (const Example& ex : batch) {
    const double z = predict_raw(spec, params, ex.features);
    if (is_classifier(spec)) {
      // -[y log s + (1-y) log(1-s)] = softplus(z) - y z
      total += softplus(z) - ex.label * z;
    } else {
      const double r = z - ex.label;
      total += 0.5 * r * r;
    }
  }
  return total / static_cast<double>(batch.size());
}

struct GradientEstimate {
  std::vector<double> values;
  int batch_size = 0;
};

// Analytic gradient of `loss` at params. Deterministic for a fixed batch.
inline GradientEstimate gradient(const ModelSpec& spec,
                                 const ParamVector& params,
                                 std::span<const Example> batch) {
  if (batch.empty()) throw ConfigError("gradient: empty batch");
  const int p = spec.input_dim;
  const int d = param_count(spec);
  GradientEstimate g;
  g.values.assign(d, 0.0);
  g.batch_size = static_cast<int>(batch.size());

  for (const Example& ex : batch) {
    detail::check_dims(spec, params, ex.features);
    switch (spec.kind) {
      case ModelKind::kLinearRegression:
      case ModelKind::kLogisticRegression: {
        double z = params[p];
        for (int j = 0; j < p; ++j) z += params[j] * ex.features[j];
        // d(loss)/dz is (z - y) for squared error, (sigmoid(z) - y) for BCE.
        const double e = spec.kind == ModelKind::kLinearRegression
                             ? z - ex.label
                             : sigmoid(z) - ex.label;
        for (int j = 0; j < p; ++j) g.values[j] += e * ex.features[j];
        g.values[p] += e;
        break;
      }
      case ModelKind::kMlpOneHidden: {
        const int h = spec.hidden_width;
        const double* W = params.data();
        const double* c = params.data() + h * p;
        const double* v = params.data() + h * p + h;
        const double b = params[h * p + 2 * h];
        std::vector<double> t(h);
        double z = b;
        for (int i = 0; i < h; ++i) {
          double a = c[i];
          for (int j = 0; j < p; ++j) a += W[i * p + j] * ex.features[j];
          t[i] = std::tanh(a);
          z += v[i] * t[i];
        }
        const double e = sigmoid(z) - ex.label;
        double* gW = g.values.data();
        double* gc = g.values.data() + h * p;
        double* gv = g.values.data() + h * p + h;
        for (int i = 0; i < h; ++i) {
          const double back = e * v[i] * (1.0 - t[i] * t[i]);
          for (int j = 0; j < p; ++j) gW[i * p + j] += back * ex.features[j];
          gc[i] += back;
          gv[i] += e * t[i];
        }
        g.values[h * p + 2 * h] += e;
        break;
      }
    }
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (double& x : g.values) x *= inv;
  return g;
}

struct ClientDataset {
  int client_id = 0;
  Dataset examples;
  std::size_t size() const { return examples.size(); }
};

// Sample-weighted average of per-client losses: sum_k (n_k / n) F_k(w).
inline double global_objective(const ModelSpec& spec, const ParamVector& params,
                               std::span<const ClientDataset> partitions) {
  if (partitions.empty()) {
    throw ConfigError("global_objective: empty partition list");
  }
  std::size_t n = 0;
  for (const auto& c : partitions) n += c.size();
  double total = 0.0;
  for (const auto& c : partitions) {
    if (c.examples.empty()) continue;
    total += static_cast<double>(c.size()) / static_cast<double>(n) *
             loss(spec, params, c.examples);
  }
  return total;
}

// Gradient of the global objective, accumulated in ascending client order.
inline std::vector<double> global_gradient(
    const ModelSpec& spec, const ParamVector& params,
    std::span<const ClientDataset> partitions) {
  if (partitions.empty()) {
    throw ConfigError("global_gradient: empty partition list");
  }
  std::size_t n = 0;
  for (const auto& c : partitions) n += c.size();
  std::vector<double> g(param_count(spec), 0.0);
  for (const auto& c : partitions) {
    if (c.examples.empty()) continue;
    const GradientEstimate gk = gradient(spec, params, c.examples);
    axpy(static_cast<double>(c.size()) / static_cast<double>(n), gk.values, g);
  }
  return g;
}

}  // namespace scfa
