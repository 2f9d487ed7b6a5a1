// Copyright 2026 The scfa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "scfa/csv.hpp"
#include "scfa/errors.hpp"
#include "scfa/model.hpp"
#include "scfa/rng.hpp"

namespace scfa {

namespace stream_id {
inline constexpr std::uint64_t kProbeGen = 0x20;
inline constexpr std::uint64_t kInject = 0x21;
inline constexpr std::uint64_t kThetaSample = 0x22;
}  // namespace stream_id

enum class ConstraintFamily {
  kTemporalMonotonicity,  // predictions non-decreasing along the probe order
  kCausalPrecedence,      // antecedent probe predicts at least the consequent
  kCapacityBound,         // all probe predictions within [lower, upper]
  kPhysicalFeasibility,   // linear combination of predictions hits a target
};

inline std::string family_name(ConstraintFamily f) {
  switch (f) {
    case ConstraintFamily::kTemporalMonotonicity: return "temporal-monotonicity";
    case ConstraintFamily::kCausalPrecedence: return "causal-precedence";
    case ConstraintFamily::kCapacityBound: return "capacity-bound";
    case ConstraintFamily::kPhysicalFeasibility: return "physical-feasibility";
  }
  return "?";
}

inline ConstraintFamily family_from_name(const std::string& s) {
  if (s == "temporal-monotonicity") return ConstraintFamily::kTemporalMonotonicity;
  if (s == "causal-precedence") return ConstraintFamily::kCausalPrecedence;
  if (s == "capacity-bound") return ConstraintFamily::kCapacityBound;
  if (s == "physical-feasibility") return ConstraintFamily::kPhysicalFeasibility;
  throw ConfigError("unknown constraint family '" + s + "'");
}

// A binary validity predicate over model predictions on fixed probe inputs.
// Rule parameters are family-specific; unused fields are ignored.
struct Constraint {
  int id = 0;
  ConstraintFamily family = ConstraintFamily::kCapacityBound;
  std::vector<std::vector<double>> probes;  // evaluation order matters
  double tolerance = 0.0;

  // capacity-bound
  double lower = 0.0;
  double upper = 0.0;
  // causal-precedence: probe indices
  int antecedent = 0;
  int consequent = 1;
  // physical-feasibility: sum_i coefficients[i] * pred_i == target
  std::vector<double> coefficients;
  double target = 0.0;
};

struct ConstraintSet {
  std::vector<Constraint> constraints;
  std::size_t size() const { return constraints.size(); }
  bool empty() const { return constraints.empty(); }
};

inline void validate(const Constraint& c) {
  if (c.probes.empty()) throw ConfigError("constraint has no probes");
  if (c.tolerance < 0.0) throw ConfigError("constraint tolerance must be >= 0");
  switch (c.family) {
    case ConstraintFamily::kCapacityBound:
      if (c.lower > c.upper) throw ConfigError("capacity bounds must satisfy lower <= upper");
      break;
    case ConstraintFamily::kCausalPrecedence:
      if (c.antecedent < 0 || c.consequent < 0 ||
          c.antecedent >= static_cast<int>(c.probes.size()) ||
          c.consequent >= static_cast<int>(c.probes.size())) {
        throw ConfigError("causal probe indices out of range");
      }
      break;
    case ConstraintFamily::kPhysicalFeasibility:
      if (c.coefficients.size() != c.probes.size()) {
        throw ConfigError("physical coefficients must match probe count");
      }
      break;
    case ConstraintFamily::kTemporalMonotonicity:
      break;
  }
}

inline void validate(const ConstraintSet& set) {
  std::vector<int> ids;
  for (const Constraint& c : set.constraints) {
    validate(c);
    ids.push_back(c.id);
  }
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
    throw ConfigError("constraint ids must be unique");
  }
}

inline bool evaluate_constraint(const Constraint& c, const ModelSpec& spec,
                                const ParamVector& params) {
  std::vector<double> preds(c.probes.size());
  for (std::size_t i = 0; i < c.probes.size(); ++i) {
    preds[i] = predict(spec, params, c.probes[i]);
  }
  switch (c.family) {
    case ConstraintFamily::kTemporalMonotonicity:
      for (std::size_t i = 0; i + 1 < preds.size(); ++i) {
        if (preds[i + 1] < preds[i] - c.tolerance) return false;
      }
      return true;
    case ConstraintFamily::kCausalPrecedence:
      return preds[static_cast<std::size_t>(c.antecedent)] >=
             preds[static_cast<std::size_t>(c.consequent)] - c.tolerance;
    case ConstraintFamily::kCapacityBound:
      for (double p : preds) {
        if (p < c.lower - c.tolerance || p > c.upper + c.tolerance) return false;
      }
      return true;
    case ConstraintFamily::kPhysicalFeasibility: {
      double combo = 0.0;
      for (std::size_t i = 0; i < preds.size(); ++i) {
        combo += c.coefficients[i] * preds[i];
      }
      return std::abs(combo - c.target) <= c.tolerance;
    }
  }
  return false;
}

struct ValidityReport {
  int client_id = -1;
  std::vector<std::uint8_t> bits;  // v_{k,j} in constraint order
  double score = 1.0;              // (1/M) sum_j v_{k,j}; 1 when M == 0
};

// Bits are evaluated and reduced in constraint order, so the report is a
// pure function of (set, params).
inline ValidityReport validity_score(const ConstraintSet& set,
                                     const ModelSpec& spec,
                                     const ParamVector& params,
                                     int client_id = -1) {
  ValidityReport rep;
  rep.client_id = client_id;
  rep.bits.reserve(set.size());
  std::size_t passed = 0;
  for (const Constraint& c : set.constraints) {
    const bool ok = evaluate_constraint(c, spec, params);
    rep.bits.push_back(ok ? 1 : 0);
    passed += ok ? 1 : 0;
  }
  rep.score = set.empty() ? 1.0
                          : static_cast<double>(passed) /
                                static_cast<double>(set.size());
  return rep;
}

// rho = 1 - min_k s_k over the participating clients.
inline double violation_rate(std::span<const ValidityReport> reports) {
  if (reports.empty()) throw ConfigError("violation_rate: no reports");
  double min_s = 1.0;
  for (const ValidityReport& r : reports) min_s = std::min(min_s, r.score);
  return 1.0 - min_s;
}

// ---------------------------------------------------------------------------
// Controlled violation injection.
//
// Corrupts individual rules until the violation rate realized by the
// reference model reaches target_rho. Corruptions keep each rule's family
// but tighten or contradict its parameters so that the reference model (and
// models converging towards it) fail while less-converged models still
// pass:
//   capacity   -> bounds shrunk to exclude the reference prediction but keep
//                 the uninformed prediction level inside
//   physical   -> target shifted far outside the tolerance band
//   temporal   -> probes reordered against the reference ordering
//   causal     -> antecedent/consequent pointed at the min/max prediction
// Temporal/causal slack is a drawn fraction of the reference spread, so a
// model fails once its predictions develop enough of the reference's
// ordering. Corruption is skipped when the reference predictions are too
// flat to ever fail.
// ---------------------------------------------------------------------------
inline ConstraintSet inject_violations(const ConstraintSet& set,
                                       double target_rho, std::uint64_t seed,
                                       const ModelSpec& ref_spec,
                                       const ParamVector& ref_params,
                                       double calibration_tol = 0.02) {
  if (!(target_rho >= 0.0 && target_rho <= 1.0)) {
    throw ConfigError("target_rho must be in [0,1]");
  }
  if (target_rho == 0.0) return set;
  if (set.empty()) throw CalibrationError("cannot inject into an empty set");

  auto realized = [&](const ConstraintSet& s) {
    return 1.0 - validity_score(s, ref_spec, ref_params).score;
  };

  ConstraintSet out = set;
  double rho = realized(out);
  if (rho > target_rho + calibration_tol) {
    throw CalibrationError("base violation rate already above target");
  }

  std::vector<int> order(out.size());
  std::iota(order.begin(), order.end(), 0);
  RngStream stream = RngStream::derived(seed, {stream_id::kInject});
  stream.shuffle(order);

  // Each successful corruption raises rho at the reference by exactly 1/M,
  // so stop at the grid point nearest the target.
  const double step = 1.0 / static_cast<double>(out.size());
  for (int idx : order) {
    if (rho >= target_rho || target_rho - rho <= step / 2.0) break;
    Constraint& c = out.constraints[static_cast<std::size_t>(idx)];
    if (!evaluate_constraint(c, ref_spec, ref_params)) continue;  // already failing

    std::vector<double> preds(c.probes.size());
    for (std::size_t i = 0; i < c.probes.size(); ++i) {
      preds[i] = predict(ref_spec, ref_params, c.probes[i]);
    }
    const double lo = *std::min_element(preds.begin(), preds.end());
    const double hi = *std::max_element(preds.begin(), preds.end());

    // The corrupted boundary sits a stream-drawn fraction of the way from
    // the uninformed prediction level to the reference, so boundaries from
    // successive corruptions spread across the whole training path instead
    // of bunching at one spot.
    const double frac = 0.1 + 0.8 * stream.next_unit();

    Constraint corrupted = c;
    bool flipped = false;
    switch (c.family) {
      case ConstraintFamily::kCapacityBound: {
        const double mid = is_classifier(ref_spec) ? 0.5 : 0.0;
        corrupted.tolerance = 0.0;
        if (hi >= mid) {
          corrupted.lower = std::min(0.0, mid - 1.0);
          corrupted.upper = hi - frac * std::max(hi - mid, 1e-6);
        } else {
          corrupted.lower = lo + frac * std::max(mid - lo, 1e-6);
          corrupted.upper = std::max(1.0, mid + 1.0);
        }
        flipped = true;
        break;
      }
      case ConstraintFamily::kPhysicalFeasibility:
        corrupted.target = c.target + 10.0 * (c.tolerance + 1.0);
        flipped = true;
        break;
      case ConstraintFamily::kTemporalMonotonicity: {
        if (hi - lo <= 1e-9) break;  // too flat to fail
        std::vector<std::size_t> by_pred(preds.size());
        std::iota(by_pred.begin(), by_pred.end(), std::size_t{0});
        std::stable_sort(by_pred.begin(), by_pred.end(),
                         [&](std::size_t a, std::size_t b) {
                           return preds[a] > preds[b];
                         });
        std::vector<std::vector<double>> reordered;
        reordered.reserve(c.probes.size());
        double max_drop = 0.0;
        for (std::size_t i = 0; i + 1 < by_pred.size(); ++i) {
          max_drop = std::max(max_drop, preds[by_pred[i]] - preds[by_pred[i + 1]]);
        }
        for (std::size_t i : by_pred) reordered.push_back(c.probes[i]);
        corrupted.probes = std::move(reordered);
        corrupted.tolerance = frac * max_drop;
        flipped = true;
        break;
      }
      case ConstraintFamily::kCausalPrecedence: {
        if (hi - lo <= 1e-9) break;
        corrupted.antecedent = static_cast<int>(
            std::min_element(preds.begin(), preds.end()) - preds.begin());
        corrupted.consequent = static_cast<int>(
            std::max_element(preds.begin(), preds.end()) - preds.begin());
        corrupted.tolerance = frac * (hi - lo);
        flipped = true;
        break;
      }
    }
    if (!flipped) continue;
    if (evaluate_constraint(corrupted, ref_spec, ref_params)) continue;
    c = std::move(corrupted);
    rho = realized(out);
  }

  if (std::abs(rho - target_rho) > calibration_tol) {
    throw CalibrationError(
        "violation injection could not reach target rho: realized " +
        std::to_string(rho) + " vs target " + std::to_string(target_rho));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Hypothesis-space reduction estimate.
// ---------------------------------------------------------------------------
struct SamplingBox {
  std::vector<double> lo, hi;

  static SamplingBox cube(int dim, double half_width = 5.0) {
    SamplingBox b;
    b.lo.assign(static_cast<std::size_t>(dim), -half_width);
    b.hi.assign(static_cast<std::size_t>(dim), half_width);
    return b;
  }
};

struct HypothesisSpaceEstimate {
  double theta_hat = 1.0;
  int num_samples = 0;
  double ci_lo = 0.0;
  double ci_hi = 1.0;
  bool degenerate = false;  // no satisfying samples observed
  SamplingBox box;          // echoed so reports are self-describing
};

// theta-hat: fraction of parameter points sampled uniformly from the box
// that satisfy every constraint, with a Wilson 95% interval.
inline HypothesisSpaceEstimate estimate_theta(const ConstraintSet& set,
                                              const ModelSpec& spec,
                                              const SamplingBox& box,
                                              int num_samples,
                                              std::uint64_t seed) {
  if (num_samples < 1000) throw ConfigError("estimate_theta needs >= 1000 samples");
  const int d = param_count(spec);
  if (static_cast<int>(box.lo.size()) != d ||
      static_cast<int>(box.hi.size()) != d) {
    throw ConfigError("sampling box dimension does not match model");
  }
  RngStream stream = RngStream::derived(seed, {stream_id::kThetaSample});
  ParamVector w(static_cast<std::size_t>(d));
  long hits = 0;
  for (int s = 0; s < num_samples; ++s) {
    for (int j = 0; j < d; ++j) {
      w[static_cast<std::size_t>(j)] = stream.next_uniform(box.lo[j], box.hi[j]);
    }
    bool ok = true;
    for (const Constraint& c : set.constraints) {
      if (!evaluate_constraint(c, spec, w)) {
        ok = false;
        break;
      }
    }
    hits += ok ? 1 : 0;
  }

  HypothesisSpaceEstimate est;
  est.box = box;
  est.num_samples = num_samples;
  const double n = static_cast<double>(num_samples);
  const double phat = static_cast<double>(hits) / n;
  est.theta_hat = phat;
  est.degenerate = hits == 0;
  const double z = 1.959963984540054;  // 97.5% normal quantile
  const double denom = 1.0 + z * z / n;
  const double center = phat + z * z / (2.0 * n);
  const double half = z * std::sqrt(phat * (1.0 - phat) / n + z * z / (4.0 * n * n));
  est.ci_lo = std::max(0.0, (center - half) / denom);
  est.ci_hi = std::min(1.0, (center + half) / denom);
  if (est.degenerate) est.ci_lo = 0.0;
  return est;
}

// ---------------------------------------------------------------------------
// Informative rule generator.
//
// Builds rules that the supplied ground-truth model satisfies and that a
// freshly initialized model (zero logits for classifiers) also satisfies, so
// violations during training indicate movement away from the truth rather
// than distance from the start. Margins cycle through `margins` to grade
// rule sensitivity.
// ---------------------------------------------------------------------------
struct InformativeSetConfig {
  int temporal = 0;
  int causal = 0;
  int capacity = 0;
  int physical = 0;
  double probe_scale = 1.0;
  double strong_logit = 1.5;  // min |truth raw score| for signed probes
  std::vector<double> margins = {0.02, 0.05, 0.10, 0.15};
  std::uint64_t seed = 0;
};

inline ConstraintSet make_informative_set(const ModelSpec& spec,
                                          const ParamVector& truth,
                                          const InformativeSetConfig& cfg) {
  if (cfg.margins.empty()) throw ConfigError("margins must be non-empty");
  const int p = spec.input_dim;
  ConstraintSet set;
  int next_id = 0;
  RngStream stream = RngStream::derived(cfg.seed, {stream_id::kProbeGen});

  auto sample_probe = [&](double want_sign, double min_abs) {
    std::vector<double> best(static_cast<std::size_t>(p));
    double best_score = -HUGE_VAL;
    for (int tries = 0; tries < 200; ++tries) {
      std::vector<double> x(static_cast<std::size_t>(p));
      for (int j = 0; j < p; ++j) x[static_cast<std::size_t>(j)] = cfg.probe_scale * stream.next_gaussian();
      const double z = predict_raw(spec, truth, x);
      const double score = want_sign == 0.0 ? std::abs(z) : want_sign * z;
      if (score > best_score) {
        best_score = score;
        best = std::move(x);
      }
      if (best_score >= min_abs) break;
    }
    return best;
  };

  // Direction of increasing truth score at a base point (analytic for the
  // affine models, finite differences otherwise).
  auto score_direction = [&](const std::vector<double>& x0) {
    std::vector<double> u(static_cast<std::size_t>(p));
    if (spec.kind != ModelKind::kMlpOneHidden) {
      for (int j = 0; j < p; ++j) u[static_cast<std::size_t>(j)] = truth[static_cast<std::size_t>(j)];
    } else {
      const double h = 1e-5;
      std::vector<double> xp = x0, xm = x0;
      for (int j = 0; j < p; ++j) {
        xp[static_cast<std::size_t>(j)] += h;
        xm[static_cast<std::size_t>(j)] -= h;
        u[static_cast<std::size_t>(j)] =
            (predict_raw(spec, truth, xp) - predict_raw(spec, truth, xm)) / (2.0 * h);
        xp[static_cast<std::size_t>(j)] = x0[static_cast<std::size_t>(j)];
        xm[static_cast<std::size_t>(j)] = x0[static_cast<std::size_t>(j)];
      }
    }
    const double nrm = norm(u);
    if (nrm > 0.0) scale(u, 1.0 / nrm);
    return u;
  };

  const bool classifier = is_classifier(spec);

  for (int i = 0; i < cfg.capacity; ++i) {
    const double margin = cfg.margins[static_cast<std::size_t>(i) % cfg.margins.size()];
    const double sign = (i % 2 == 0) ? 1.0 : -1.0;
    Constraint c;
    c.id = next_id++;
    c.family = ConstraintFamily::kCapacityBound;
    c.probes.push_back(sample_probe(sign, cfg.strong_logit));
    if (classifier) {
      // Positive-scoring probes must stay above 0.5 - margin; negative ones
      // below 0.5 + margin. Both pass at the symmetric start (pred = 0.5).
      if (sign > 0.0) {
        c.lower = 0.5 - margin;
        c.upper = 1.0;
      } else {
        c.lower = 0.0;
        c.upper = 0.5 + margin;
      }
    } else {
      const double pt = predict(spec, truth, c.probes[0]);
      c.lower = std::min(0.0, pt) - margin * cfg.probe_scale;
      c.upper = std::max(0.0, pt) + margin * cfg.probe_scale;
    }
    set.constraints.push_back(std::move(c));
  }

  for (int i = 0; i < cfg.temporal; ++i) {
    const double margin = cfg.margins[static_cast<std::size_t>(i) % cfg.margins.size()];
    Constraint c;
    c.id = next_id++;
    c.family = ConstraintFamily::kTemporalMonotonicity;
    // A sliver of slack: near-convergence direction jitter should not read
    // as a violation, only genuine ordering flips.
    c.tolerance = 0.25 * (classifier ? margin : margin * cfg.probe_scale);
    for (int tries = 0; tries < 50; ++tries) {
      std::vector<double> x0(static_cast<std::size_t>(p));
      for (int j = 0; j < p; ++j) x0[static_cast<std::size_t>(j)] = cfg.probe_scale * stream.next_gaussian();
      const std::vector<double> u = score_direction(x0);
      c.probes.clear();
      const double steps[4] = {-1.0, -0.25, 0.25, 1.0};
      for (double s : steps) {
        std::vector<double> x = x0;
        axpy(s * cfg.probe_scale, u, x);
        c.probes.push_back(std::move(x));
      }
      if (evaluate_constraint(c, spec, truth)) break;  // truth must pass
    }
    set.constraints.push_back(std::move(c));
  }

  for (int i = 0; i < cfg.causal; ++i) {
    const double margin = cfg.margins[static_cast<std::size_t>(i) % cfg.margins.size()];
    Constraint c;
    c.id = next_id++;
    c.family = ConstraintFamily::kCausalPrecedence;
    c.tolerance = classifier ? margin : margin * cfg.probe_scale;
    c.antecedent = 0;
    c.consequent = 1;
    c.probes.push_back(sample_probe(1.0, cfg.strong_logit));
    c.probes.push_back(sample_probe(-1.0, cfg.strong_logit));
    set.constraints.push_back(std::move(c));
  }

  for (int i = 0; i < cfg.physical; ++i) {
    const double margin = cfg.margins[static_cast<std::size_t>(i) % cfg.margins.size()];
    Constraint c;
    c.id = next_id++;
    c.family = ConstraintFamily::kPhysicalFeasibility;
    std::vector<double> x = sample_probe(0.0, cfg.strong_logit);
    std::vector<double> pair(x.size());
    if (classifier && spec.kind == ModelKind::kLogisticRegression) {
      // Reflect the probe through the anchor's decision boundary: the pair's
      // predicted probabilities then sum to exactly 1 for every model with
      // that boundary, including the symmetric start.
      const double z = predict_raw(spec, truth, x);
      double w_sq = 0.0;
      for (int j = 0; j < p; ++j) {
        w_sq += truth[static_cast<std::size_t>(j)] * truth[static_cast<std::size_t>(j)];
      }
      const double shift = w_sq > 0.0 ? -2.0 * z / w_sq : 0.0;
      for (int j = 0; j < p; ++j) {
        pair[static_cast<std::size_t>(j)] =
            x[static_cast<std::size_t>(j)] + shift * truth[static_cast<std::size_t>(j)];
      }
    } else {
      for (std::size_t j = 0; j < x.size(); ++j) pair[j] = -x[j];
    }
    c.probes.push_back(std::move(x));
    c.probes.push_back(std::move(pair));
    c.coefficients = {1.0, 1.0};
    c.target = predict(spec, truth, c.probes[0]) + predict(spec, truth, c.probes[1]);
    c.tolerance = classifier ? margin : margin * cfg.probe_scale;
    set.constraints.push_back(std::move(c));
  }

  validate(set);
  return set;
}

// ---------------------------------------------------------------------------
// Declarative text format, round-trippable.
//
//   # comment
//   constraint <id> <family> tol <tolerance>
//   bounds <lower> <upper>              (capacity-bound)
//   order <antecedent> <consequent>     (causal-precedence)
//   combo <c_0> ... <c_{n-1}> target <t> (physical-feasibility)
//   probe <x_0> ... <x_{p-1}>           (one per probe, in order)
//   end
// ---------------------------------------------------------------------------
inline std::string constraints_to_text(const ConstraintSet& set) {
  std::string out = "# scfa constraint set v1\n";
  for (const Constraint& c : set.constraints) {
    out += "constraint " + std::to_string(c.id) + " " + family_name(c.family) +
           " tol " + fmt_double(c.tolerance) + "\n";
    switch (c.family) {
      case ConstraintFamily::kCapacityBound:
        out += "bounds " + fmt_double(c.lower) + " " + fmt_double(c.upper) + "\n";
        break;
      case ConstraintFamily::kCausalPrecedence:
        out += "order " + std::to_string(c.antecedent) + " " +
               std::to_string(c.consequent) + "\n";
        break;
      case ConstraintFamily::kPhysicalFeasibility: {
        out += "combo";
        for (double v : c.coefficients) out += " " + fmt_double(v);
        out += " target " + fmt_double(c.target) + "\n";
        break;
      }
      case ConstraintFamily::kTemporalMonotonicity:
        break;
    }
    for (const auto& probe : c.probes) {
      out += "probe";
      for (double v : probe) out += " " + fmt_double(v);
      out += "\n";
    }
    out += "end\n";
  }
  return out;
}

inline ConstraintSet constraints_from_text(std::istream& in) {
  ConstraintSet set;
  Constraint cur;
  bool open = false;
  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string& msg) {
    throw ConfigError("constraint file line " + std::to_string(lineno) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ss(line);
    std::string tok;
    if (!(ss >> tok) || tok[0] == '#') continue;
    if (tok == "constraint") {
      if (open) fail("missing 'end' before new constraint");
      cur = Constraint{};
      std::string fam, tolkw;
      if (!(ss >> cur.id >> fam >> tolkw >> cur.tolerance) || tolkw != "tol") {
        fail("expected 'constraint <id> <family> tol <tolerance>'");
      }
      cur.family = family_from_name(fam);
      open = true;
    } else if (tok == "bounds") {
      if (!open || !(ss >> cur.lower >> cur.upper)) fail("bad bounds line");
    } else if (tok == "order") {
      if (!open || !(ss >> cur.antecedent >> cur.consequent)) fail("bad order line");
    } else if (tok == "combo") {
      if (!open) fail("combo outside constraint");
      std::vector<double> coeffs;
      std::string w;
      while (ss >> w) {
        if (w == "target") break;
        coeffs.push_back(std::stod(w));
      }
      if (w != "target" || !(ss >> cur.target)) fail("combo line missing target");
      cur.coefficients = std::move(coeffs);
    } else if (tok == "probe") {
      if (!open) fail("probe outside constraint");
      std::vector<double> x;
      double v;
      while (ss >> v) x.push_back(v);
      if (x.empty()) fail("empty probe");
      cur.probes.push_back(std::move(x));
    } else if (tok == "end") {
      if (!open) fail("stray 'end'");
      validate(cur);
      set.constraints.push_back(std::move(cur));
      open = false;
    } else {
      fail("unknown directive '" + tok + "'");
    }
  }
  if (open) fail("unterminated constraint record");
  validate(set);
  return set;
}

inline ConstraintSet load_constraints(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open constraint file " + path.string());
  return constraints_from_text(in);
}

inline void save_constraints(const ConstraintSet& set,
                             const std::filesystem::path& path) {
  atomic_write(path, constraints_to_text(set));
}

}  // namespace scfa
