// Copyright 2026 The scfa Authors
// SPDX-License-Identifier: Apache-2.0

#include "scfa/constraints.hpp"

#include <algorithm>
#include <sstream>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "scfa/rng.hpp"

using namespace scfa;

namespace {

const ModelSpec kLogistic{ModelKind::kLogisticRegression, 2, 0};
const ModelSpec kLinear{ModelKind::kLinearRegression, 2, 0};

Constraint capacity(int id, std::vector<std::vector<double>> probes, double lo,
                    double hi, double tol = 0.0) {
  Constraint c;
  c.id = id;
  c.family = ConstraintFamily::kCapacityBound;
  c.probes = std::move(probes);
  c.lower = lo;
  c.upper = hi;
  c.tolerance = tol;
  return c;
}

Constraint monotone(int id, std::vector<std::vector<double>> probes,
                    double tol = 0.0) {
  Constraint c;
  c.id = id;
  c.family = ConstraintFamily::kTemporalMonotonicity;
  c.probes = std::move(probes);
  c.tolerance = tol;
  return c;
}

}  // namespace

TEST_CASE("sigmoid range makes [0,1] capacity bounds vacuous for logistic") {
  const Constraint c = capacity(0, {{0.5, -2.0}, {3.0, 3.0}, {-5.0, 1.0}}, 0.0, 1.0);
  RngStream s(1);
  for (int rep = 0; rep < 20; ++rep) {
    ParamVector w(3);
    for (double& x : w) x = 3.0 * s.next_gaussian();
    REQUIRE(evaluate_constraint(c, kLogistic, w));
  }
}

TEST_CASE("monotone composition passes for positive weights") {
  const Constraint c =
      monotone(0, {{0.0, 0.0}, {0.5, 0.5}, {1.0, 1.0}, {2.0, 2.0}});
  const ParamVector w = {1.5, 0.25, -0.3};  // all-positive weights, any bias
  REQUIRE(evaluate_constraint(c, kLinear, w));
  REQUIRE(evaluate_constraint(c, kLogistic, w));
}

TEST_CASE("violated middle probe detected by direct enumeration") {
  // Predictions under w = (1, 0, 0) are the first coordinates: 0.0, -0.5, 1.0.
  const Constraint c = monotone(0, {{0.0, 0.0}, {-0.5, 0.0}, {1.0, 0.0}});
  const ParamVector w = {1.0, 0.0, 0.0};
  std::vector<double> preds;
  for (const auto& probe : c.probes) preds.push_back(predict(kLinear, w, probe));
  bool oracle = true;
  for (std::size_t i = 0; i + 1 < preds.size(); ++i) {
    if (preds[i + 1] < preds[i]) oracle = false;
  }
  REQUIRE_FALSE(oracle);
  REQUIRE(evaluate_constraint(c, kLinear, w) == oracle);
}

TEST_CASE("causal precedence compares antecedent and consequent") {
  Constraint c;
  c.id = 0;
  c.family = ConstraintFamily::kCausalPrecedence;
  c.probes = {{2.0, 0.0}, {1.0, 0.0}};
  c.antecedent = 0;
  c.consequent = 1;
  const ParamVector rising = {1.0, 0.0, 0.0};   // pred(a)=2 > pred(c)=1
  const ParamVector falling = {-1.0, 0.0, 0.0}; // pred(a)=-2 < pred(c)=-1
  REQUIRE(evaluate_constraint(c, kLinear, rising));
  REQUIRE_FALSE(evaluate_constraint(c, kLinear, falling));
  c.tolerance = 2.0;  // slack covers the unit gap
  REQUIRE(evaluate_constraint(c, kLinear, falling));
}

TEST_CASE("physical feasibility checks the linear combination") {
  Constraint c;
  c.id = 0;
  c.family = ConstraintFamily::kPhysicalFeasibility;
  c.probes = {{1.0, 0.0}, {-1.0, 0.0}};
  c.coefficients = {1.0, 1.0};
  c.target = 1.0;
  c.tolerance = 1e-6;
  // Zero-bias logistic: sigmoid(z) + sigmoid(-z) = 1 exactly.
  REQUIRE(evaluate_constraint(c, kLogistic, {0.8, -0.1, 0.0}));
  // A biased model breaks the identity.
  REQUIRE_FALSE(evaluate_constraint(c, kLogistic, {0.8, -0.1, 0.9}));
}

TEST_CASE("validity score is the satisfied fraction") {
  ConstraintSet set;
  set.constraints.push_back(capacity(0, {{0.0, 0.0}}, 0.0, 1.0));   // passes
  set.constraints.push_back(capacity(1, {{0.0, 0.0}}, 0.4, 1.0));   // passes (0.5)
  set.constraints.push_back(capacity(2, {{0.0, 0.0}}, 0.9, 1.0));   // fails
  set.constraints.push_back(capacity(3, {{0.0, 0.0}}, 0.0, 0.6));   // passes
  const ValidityReport rep = validity_score(set, kLogistic, {0.0, 0.0, 0.0}, 7);
  REQUIRE(rep.client_id == 7);
  REQUIRE(rep.bits == std::vector<std::uint8_t>{1, 1, 0, 1});
  REQUIRE_THAT(rep.score, Catch::Matchers::WithinAbs(0.75, 1e-15));
}

TEST_CASE("all-pass scores one and the empty set scores one") {
  ConstraintSet set;
  set.constraints.push_back(capacity(0, {{0.0, 0.0}}, 0.0, 1.0));
  REQUIRE(validity_score(set, kLogistic, {0.0, 0.0, 0.0}).score == 1.0);
  REQUIRE(validity_score(ConstraintSet{}, kLogistic, {0.0, 0.0, 0.0}).score == 1.0);
}

TEST_CASE("large randomized rule set matches an independent recount") {
  // M = 3000 rules with randomized bounds; the oracle recounts pass bits.
  RngStream s(42);
  ConstraintSet set;
  for (int j = 0; j < 3000; ++j) {
    const double lo = s.next_unit();
    const double hi = lo + s.next_unit();
    set.constraints.push_back(
        capacity(j, {{s.next_gaussian(), s.next_gaussian()}}, lo, hi));
  }
  const ParamVector w = {0.7, -0.4, 0.1};
  const ValidityReport rep = validity_score(set, kLogistic, w);
  long pass = 0;
  for (const Constraint& c : set.constraints) {
    const double p = predict(kLogistic, w, c.probes[0]);
    pass += (p >= c.lower && p <= c.upper) ? 1 : 0;
  }
  REQUIRE(rep.score == static_cast<double>(pass) / 3000.0);
}

TEST_CASE("violation rate is one minus the minimum score") {
  auto mk = [](double s) {
    ValidityReport r;
    r.score = s;
    return r;
  };
  std::vector<ValidityReport> reports = {mk(1.0), mk(0.9), mk(0.8)};
  REQUIRE_THAT(violation_rate(reports), Catch::Matchers::WithinAbs(0.2, 1e-15));
  reports = {mk(1.0), mk(1.0)};
  REQUIRE(violation_rate(reports) == 0.0);
  reports = {mk(0.0)};
  REQUIRE(violation_rate(reports) == 1.0);
  REQUIRE_THROWS_AS(violation_rate(std::vector<ValidityReport>{}), ConfigError);
}

TEST_CASE("score is invariant under constraint reordering") {
  RngStream s(9);
  ConstraintSet set;
  for (int j = 0; j < 40; ++j) {
    set.constraints.push_back(
        capacity(j, {{s.next_gaussian(), s.next_gaussian()}}, 0.2, 0.8));
  }
  const ParamVector w = {0.3, 0.5, -0.2};
  const double base = validity_score(set, kLogistic, w).score;
  for (int rep = 0; rep < 5; ++rep) {
    s.shuffle(set.constraints);
    REQUIRE(validity_score(set, kLogistic, w).score == base);
  }
}

TEST_CASE("adding a constraint never raises the score") {
  RngStream s(10);
  ConstraintSet small, big;
  for (int j = 0; j < 20; ++j) {
    const Constraint c =
        capacity(j, {{s.next_gaussian(), s.next_gaussian()}}, 0.3, 0.7);
    small.constraints.push_back(c);
    big.constraints.push_back(c);
  }
  big.constraints.push_back(capacity(20, {{0.0, 0.0}}, 0.9, 1.0));  // fails at w=0
  const ParamVector w = {0.1, 0.2, 0.0};
  const double pass_small = validity_score(small, kLogistic, w).score *
                            static_cast<double>(small.size());
  const double pass_big =
      validity_score(big, kLogistic, w).score * static_cast<double>(big.size());
  REQUIRE(pass_big <= pass_small + 1.0);
  REQUIRE(validity_score(big, kLogistic, w).score <=
          validity_score(small, kLogistic, w).score + 1e-15);
}

TEST_CASE("injection: zero target returns the set unchanged") {
  RngStream s(3);
  ConstraintSet set;
  for (int j = 0; j < 50; ++j) {
    set.constraints.push_back(
        capacity(j, {{s.next_gaussian(), s.next_gaussian()}}, 0.0, 1.0));
  }
  const ParamVector ref = {0.5, -0.5, 0.0};
  const ConstraintSet out = inject_violations(set, 0.0, 1, kLogistic, ref);
  REQUIRE(constraints_to_text(out) == constraints_to_text(set));
}

TEST_CASE("injection calibrates realized rho at the reference model") {
  RngStream s(4);
  ConstraintSet set;
  for (int j = 0; j < 100; ++j) {
    set.constraints.push_back(
        capacity(j, {{s.next_gaussian(), s.next_gaussian()}}, 0.0, 1.0));
  }
  const ParamVector ref = {0.8, -0.3, 0.1};

  SECTION("target 0.05") {
    const ConstraintSet out = inject_violations(set, 0.05, 7, kLogistic, ref);
    const double rho = 1.0 - validity_score(out, kLogistic, ref).score;
    REQUIRE(rho >= 0.03);
    REQUIRE(rho <= 0.07);
  }
  SECTION("target 0.18 (the critical threshold)") {
    const ConstraintSet out = inject_violations(set, 0.18, 7, kLogistic, ref);
    const double rho = 1.0 - validity_score(out, kLogistic, ref).score;
    REQUIRE(rho >= 0.16);
    REQUIRE(rho <= 0.20);
  }
  SECTION("ids and cardinality are preserved") {
    const ConstraintSet out = inject_violations(set, 0.10, 7, kLogistic, ref);
    REQUIRE(out.size() == set.size());
    for (std::size_t j = 0; j < out.size(); ++j) {
      REQUIRE(out.constraints[j].id == set.constraints[j].id);
      REQUIRE(out.constraints[j].family == set.constraints[j].family);
    }
  }
}

TEST_CASE("injection fails loudly when the target is unreachable") {
  ConstraintSet set;
  // A single flat monotonicity rule cannot be made to fail at the reference.
  Constraint c = monotone(0, {{0.0, 0.0}, {0.0, 0.0}});
  set.constraints.push_back(c);
  const ParamVector ref = {1.0, 1.0, 0.0};
  REQUIRE_THROWS_AS(inject_violations(set, 0.5, 1, kLinear, ref),
                    CalibrationError);
}

TEST_CASE("theta estimate: empty set eliminates nothing") {
  const auto est = estimate_theta(ConstraintSet{}, kLinear,
                                  SamplingBox::cube(3), 2000, 1);
  REQUIRE(est.theta_hat == 1.0);
  REQUIRE_FALSE(est.degenerate);
}

TEST_CASE("theta estimate: half-space through the box center is about half") {
  ConstraintSet set;
  // pred(probe) <= 0 halves the symmetric box for the linear model.
  set.constraints.push_back(capacity(0, {{1.0, 0.5}}, -1e9, 0.0));
  const auto est =
      estimate_theta(set, kLinear, SamplingBox::cube(3), 20000, 2);
  REQUIRE_THAT(est.theta_hat, Catch::Matchers::WithinAbs(0.5, 0.02));
  REQUIRE(est.ci_lo <= est.theta_hat);
  REQUIRE(est.ci_hi >= est.theta_hat);
}

TEST_CASE("theta estimate is monotone under constraint supersets") {
  ConstraintSet sub, super;
  sub.constraints.push_back(capacity(0, {{1.0, 0.0}}, -1e9, 0.0));
  super.constraints = sub.constraints;
  super.constraints.push_back(capacity(1, {{0.0, 1.0}}, -1e9, 0.0));
  const auto a = estimate_theta(sub, kLinear, SamplingBox::cube(3), 20000, 3);
  const auto b = estimate_theta(super, kLinear, SamplingBox::cube(3), 20000, 3);
  REQUIRE(b.theta_hat <= a.theta_hat);
}

TEST_CASE("theta estimate flags an empty intersection instead of crashing") {
  ConstraintSet set;
  set.constraints.push_back(capacity(0, {{1.0, 0.0}}, 1e6, 2e6));
  const auto est = estimate_theta(set, kLinear, SamplingBox::cube(3), 1000, 4);
  REQUIRE(est.degenerate);
  REQUIRE(est.theta_hat == 0.0);
  REQUIRE(est.ci_lo == 0.0);
  REQUIRE(est.ci_hi > 0.0);
}

TEST_CASE("theta can be calibrated to the 0.37 reduction target") {
  // Bisect a one-sided bound until ~37% of the box satisfies the rule.
  auto theta_at = [&](double cut) {
    ConstraintSet set;
    set.constraints.push_back(capacity(0, {{1.0, 0.0}}, -1e9, cut));
    return estimate_theta(set, kLinear, SamplingBox::cube(3), 20000, 5).theta_hat;
  };
  double lo = -10.0, hi = 10.0;
  for (int it = 0; it < 40; ++it) {
    const double mid = 0.5 * (lo + hi);
    (theta_at(mid) < 0.37 ? lo : hi) = mid;
  }
  REQUIRE_THAT(theta_at(0.5 * (lo + hi)), Catch::Matchers::WithinAbs(0.37, 0.02));
}

TEST_CASE("estimate_theta validates its inputs") {
  REQUIRE_THROWS_AS(
      estimate_theta(ConstraintSet{}, kLinear, SamplingBox::cube(3), 100, 1),
      ConfigError);
  REQUIRE_THROWS_AS(
      estimate_theta(ConstraintSet{}, kLinear, SamplingBox::cube(2), 2000, 1),
      ConfigError);
}

TEST_CASE("constraint text format round-trips every family") {
  const ModelSpec spec{ModelKind::kLogisticRegression, 3, 0};
  ParamVector truth = {1.0, -0.8, 0.5, 0.0};
  InformativeSetConfig cfg;
  cfg.capacity = 3;
  cfg.temporal = 2;
  cfg.causal = 2;
  cfg.physical = 2;
  cfg.seed = 17;
  const ConstraintSet set = make_informative_set(spec, truth, cfg);
  const std::string text = constraints_to_text(set);
  std::istringstream in(text);
  const ConstraintSet back = constraints_from_text(in);
  REQUIRE(constraints_to_text(back) == text);
  REQUIRE(back.size() == set.size());
}

TEST_CASE("constraint parser reports malformed records") {
  std::istringstream bad1("constraint 0 capacity-bound tol 0\nbounds 1\nend\n");
  REQUIRE_THROWS_AS(constraints_from_text(bad1), ConfigError);
  std::istringstream bad2("probe 1 2 3\n");
  REQUIRE_THROWS_AS(constraints_from_text(bad2), ConfigError);
  std::istringstream bad3(
      "constraint 0 capacity-bound tol 0\nbounds 0 1\nprobe 1 2\n");
  REQUIRE_THROWS_AS(constraints_from_text(bad3), ConfigError);
  std::istringstream bad4(
      "constraint 0 no-such-family tol 0\nprobe 1\nend\n");
  REQUIRE_THROWS_AS(constraints_from_text(bad4), ConfigError);
}

TEST_CASE("informative rules pass at the truth and at the symmetric start") {
  const ModelSpec spec{ModelKind::kLogisticRegression, 4, 0};
  ParamVector truth = {1.2, -0.9, 0.7, 0.4, 0.0};
  InformativeSetConfig cfg;
  cfg.capacity = 10;
  cfg.temporal = 6;
  cfg.causal = 6;
  cfg.physical = 6;
  cfg.seed = 23;
  const ConstraintSet set = make_informative_set(spec, truth, cfg);
  REQUIRE(validity_score(set, spec, truth).score == 1.0);
  REQUIRE(validity_score(set, spec, ParamVector(5, 0.0)).score == 1.0);
}

TEST_CASE("reflection pairs hold along the anchor's scaling ray") {
  // Physical rules built from a logistic anchor must accept any rescaling of
  // that anchor (same decision boundary) and reject a bias shift.
  const ModelSpec spec{ModelKind::kLogisticRegression, 4, 0};
  ParamVector anchor = {1.3, -0.7, 0.9, 0.5, -1.1};
  InformativeSetConfig cfg;
  cfg.physical = 8;
  cfg.seed = 3;
  cfg.margins = {0.02};
  const ConstraintSet set = make_informative_set(spec, anchor, cfg);
  for (double kappa : {0.25, 0.5, 2.0, 4.0}) {
    ParamVector scaled = anchor;
    scale(scaled, kappa);
    REQUIRE(validity_score(set, spec, scaled).score == 1.0);
  }
  ParamVector shifted = anchor;
  shifted.back() += 1.5;
  REQUIRE(validity_score(set, spec, shifted).score < 1.0);
}

TEST_CASE("corrupted capacity rules spare the uninformed model") {
  RngStream s(8);
  const ModelSpec spec{ModelKind::kLogisticRegression, 2, 0};
  ConstraintSet set;
  for (int j = 0; j < 60; ++j) {
    const double sign = j % 2 ? 1.0 : -1.0;
    Constraint c;
    c.id = j;
    c.family = ConstraintFamily::kCapacityBound;
    c.probes = {{sign * (1.0 + s.next_unit()), sign * (1.0 + s.next_unit())}};
    if (sign > 0) {
      c.lower = 0.4;
      c.upper = 1.0;
    } else {
      c.lower = 0.0;
      c.upper = 0.6;
    }
    set.constraints.push_back(c);
  }
  const ParamVector ref = {1.0, 0.8, 0.0};
  REQUIRE(validity_score(set, spec, ref).score == 1.0);
  const ConstraintSet out = inject_violations(set, 0.3, 9, spec, ref);
  // Reference on target, uninformed start untouched.
  REQUIRE_THAT(1.0 - validity_score(out, spec, ref).score,
               Catch::Matchers::WithinAbs(0.3, 0.02));
  REQUIRE(validity_score(out, spec, ParamVector(3, 0.0)).score == 1.0);
}

TEST_CASE("theta estimates echo their sampling box") {
  const SamplingBox box = SamplingBox::cube(3, 2.5);
  const auto est = estimate_theta(ConstraintSet{}, kLinear, box, 1000, 9);
  REQUIRE(est.box.lo == box.lo);
  REQUIRE(est.box.hi == box.hi);
}
