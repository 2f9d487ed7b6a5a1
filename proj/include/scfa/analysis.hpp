// Copyright 2026 The scfa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "scfa/data.hpp"
#include "scfa/engine.hpp"
#include "scfa/errors.hpp"
#include "scfa/model.hpp"
#include "scfa/rng.hpp"

namespace scfa {

namespace stream_id {
inline constexpr std::uint64_t kBootstrap = 0x40;
inline constexpr std::uint64_t kPowerIteration = 0x41;
inline constexpr std::uint64_t kVarianceBatches = 0x42;
}  // namespace stream_id

struct FitResult {
  bool ok = false;
  std::vector<double> params;
  double r_squared = 0.0;
  std::vector<std::array<double, 2>> ci95;  // per coefficient, bootstrap
  double residual_mean_abs = 0.0;
  double residual_max_abs = 0.0;
  std::string note;
};

inline double median(std::vector<double> v) {
  if (v.empty()) return NAN;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// One-sided sign test: P(X >= wins) for X ~ Binomial(wins + losses, 1/2).
// Ties are dropped before calling.
inline double sign_test_p(int wins, int losses) {
  const int n = wins + losses;
  if (n == 0) return 1.0;
  double p = 0.0;
  for (int i = wins; i <= n; ++i) {
    double logc = std::lgamma(n + 1.0) - std::lgamma(i + 1.0) -
                  std::lgamma(n - i + 1.0);
    p += std::exp(logc - n * std::log(2.0));
  }
  return std::min(1.0, p);
}

namespace detail {

// Gaussian elimination with partial pivoting; a is k x k row-major.
inline bool solve_linear(std::vector<double> a, std::vector<double> b,
                         std::vector<double>& x) {
  const std::size_t k = b.size();
  for (std::size_t col = 0; col < k; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < k; ++r) {
      if (std::abs(a[r * k + col]) > std::abs(a[piv * k + col])) piv = r;
    }
    if (std::abs(a[piv * k + col]) < 1e-300) return false;
    if (piv != col) {
      for (std::size_t c = 0; c < k; ++c) std::swap(a[col * k + c], a[piv * k + c]);
      std::swap(b[col], b[piv]);
    }
    for (std::size_t r = col + 1; r < k; ++r) {
      const double f = a[r * k + col] / a[col * k + col];
      for (std::size_t c = col; c < k; ++c) a[r * k + c] -= f * a[col * k + c];
      b[r] -= f * b[col];
    }
  }
  x.assign(k, 0.0);
  for (std::size_t ri = k; ri-- > 0;) {
    double s = b[ri];
    for (std::size_t c = ri + 1; c < k; ++c) s -= a[ri * k + c] * x[c];
    x[ri] = s / a[ri * k + ri];
  }
  return true;
}

}  // namespace detail

// Levenberg-style damped least squares with a user-supplied analytic
// Jacobian. Minimizes sum_i (y_i - f(x_i, params))^2. For models linear in
// the parameters this converges on the first accepted step.
struct LevMarOptions {
  int max_iterations = 200;
  double step_tolerance = 1e-10;
  double initial_lambda = 1e-3;
};

template <typename ModelFn, typename JacobianFn>
bool levmar_fit(std::span<const double> x, std::span<const double> y,
                std::vector<double>& params, ModelFn model, JacobianFn jacobian,
                const LevMarOptions& opt = {}) {
  const std::size_t n = x.size();
  const std::size_t k = params.size();
  if (n < k) return false;

  auto sse = [&](const std::vector<double>& th) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = y[i] - model(x[i], th);
      s += r * r;
    }
    return s;
  };

  double lambda = opt.initial_lambda;
  double current = sse(params);
  std::vector<double> jrow(k), jtj(k * k), jtr(k), step;

  for (int iter = 0; iter < opt.max_iterations; ++iter) {
    std::fill(jtj.begin(), jtj.end(), 0.0);
    std::fill(jtr.begin(), jtr.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      jacobian(x[i], params, jrow);
      const double r = y[i] - model(x[i], params);
      for (std::size_t a = 0; a < k; ++a) {
        jtr[a] += jrow[a] * r;
        for (std::size_t b = 0; b < k; ++b) jtj[a * k + b] += jrow[a] * jrow[b];
      }
    }
    bool accepted = false;
    for (int damp = 0; damp < 40; ++damp) {
      std::vector<double> damped = jtj;
      for (std::size_t a = 0; a < k; ++a) {
        damped[a * k + a] += lambda * std::max(jtj[a * k + a], 1e-12);
      }
      if (!detail::solve_linear(damped, jtr, step)) {
        lambda *= 10.0;
        continue;
      }
      std::vector<double> trial = params;
      for (std::size_t a = 0; a < k; ++a) trial[a] += step[a];
      const double trial_sse = sse(trial);
      if (trial_sse <= current) {
        double step_norm = 0.0, param_norm = 0.0;
        for (std::size_t a = 0; a < k; ++a) {
          step_norm += step[a] * step[a];
          param_norm += trial[a] * trial[a];
        }
        params = std::move(trial);
        const double improved = current - trial_sse;
        current = trial_sse;
        lambda = std::max(lambda * 0.1, 1e-12);
        accepted = true;
        if (std::sqrt(step_norm) <=
                opt.step_tolerance * (1.0 + std::sqrt(param_norm)) ||
            improved <= 1e-18 * (1.0 + current)) {
          return true;
        }
        break;
      }
      lambda *= 10.0;
    }
    if (!accepted) return true;  // stuck at a local minimum of the damping ladder
  }
  return true;
}

namespace detail {

struct SqrtFitData {
  std::vector<double> t;     // 1-based round index
  std::vector<double> y;     // gradient-norm-squared series
  double rho_bar = 0.0;
};

// Closed-form least squares for y = a/sqrt(t) + b*rho_bar (b clamped to zero
// when rho_bar is zero). Returns false on singular design.
inline bool solve_sqrt_form(const SqrtFitData& d, double& a, double& b) {
  const std::size_t n = d.t.size();
  if (n == 0) return false;
  if (d.rho_bar == 0.0) {
    double suu = 0.0, suy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double u = 1.0 / std::sqrt(d.t[i]);
      suu += u * u;
      suy += u * d.y[i];
    }
    if (suu < 1e-300) return false;
    a = suy / suu;
    b = 0.0;
    return true;
  }
  double s11 = 0.0, s12 = 0.0, s22 = 0.0, b1 = 0.0, b2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double u = 1.0 / std::sqrt(d.t[i]);
    const double v = d.rho_bar;
    s11 += u * u;
    s12 += u * v;
    s22 += v * v;
    b1 += u * d.y[i];
    b2 += v * d.y[i];
  }
  const double det = s11 * s22 - s12 * s12;
  if (std::abs(det) < 1e-12 * std::max(1.0, s11 * s22)) return false;
  a = (b1 * s22 - b2 * s12) / det;
  b = (s11 * b2 - s12 * b1) / det;
  return true;
}

inline void finish_fit(FitResult& fit, std::span<const double> y,
                       std::span<const double> yhat) {
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(y.size());
  double ss_res = 0.0, ss_tot = 0.0, mean_abs = 0.0, max_abs = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double r = y[i] - yhat[i];
    ss_res += r * r;
    ss_tot += (y[i] - mean) * (y[i] - mean);
    mean_abs += std::abs(r);
    max_abs = std::max(max_abs, std::abs(r));
  }
  fit.residual_mean_abs = mean_abs / static_cast<double>(y.size());
  fit.residual_max_abs = max_abs;
  fit.r_squared = ss_tot == 0.0 ? 0.0 : 1.0 - ss_res / ss_tot;
}

inline std::array<double, 2> percentile_ci(std::vector<double>& samples) {
  std::sort(samples.begin(), samples.end());
  const std::size_t n = samples.size();
  if (n == 0) return {NAN, NAN};
  const auto at = [&](double q) {
    const double pos = q * static_cast<double>(n - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(n - 1, lo + 1);
    const double frac = pos - static_cast<double>(lo);
    return samples[lo] * (1.0 - frac) + samples[hi] * frac;
  };
  return {at(0.025), at(0.975)};
}

}  // namespace detail

// Fits the theoretical decay form f(t) = a/sqrt(t) + b*rho to a per-round
// gradient-norm-squared series. rho enters as the run mean of the per-round
// violation rates; b is clamped to zero when that mean is zero. Confidence
// intervals come from a round-resampling bootstrap.
inline FitResult fit_convergence_rate(std::span<const double> grad_norm_sq,
                                      std::span<const double> rho_series,
                                      int bootstrap_resamples = 1000,
                                      std::uint64_t seed = 0x5cfa) {
  FitResult fit;
  const std::size_t n = grad_norm_sq.size();
  if (n < 5) {
    fit.note = "needs at least 5 rounds";
    return fit;
  }
  if (!rho_series.empty() && rho_series.size() != n) {
    throw ConfigError("rho series length does not match gradient series");
  }

  detail::SqrtFitData data;
  data.t.resize(n);
  data.y.assign(grad_norm_sq.begin(), grad_norm_sq.end());
  for (std::size_t i = 0; i < n; ++i) data.t[i] = static_cast<double>(i + 1);
  if (!rho_series.empty()) {
    double s = 0.0;
    for (double r : rho_series) s += r;
    data.rho_bar = s / static_cast<double>(n);
  }

  double y_min = data.y[0], y_max = data.y[0];
  for (double v : data.y) {
    y_min = std::min(y_min, v);
    y_max = std::max(y_max, v);
  }
  if (y_max - y_min == 0.0) {
    fit.note = "singular design: constant series";
    return fit;
  }

  double a0 = 0.0, b0 = 0.0;
  if (!detail::solve_sqrt_form(data, a0, b0)) {
    fit.note = "singular design";
    return fit;
  }
  // Polish through the damped solver; exact for this linear-in-parameters
  // form, and keeps the machinery honest for non-linear extensions.
  const double rho_bar = data.rho_bar;
  auto model = [rho_bar](double t, const std::vector<double>& th) {
    return th[0] / std::sqrt(t) + (th.size() > 1 ? th[1] * rho_bar : 0.0);
  };
  auto jac = [rho_bar](double t, const std::vector<double>&,
                       std::vector<double>& row) {
    row[0] = 1.0 / std::sqrt(t);
    if (row.size() > 1) row[1] = rho_bar;
  };
  std::vector<double> params =
      rho_bar == 0.0 ? std::vector<double>{a0} : std::vector<double>{a0, b0};
  levmar_fit(data.t, data.y, params, model, jac);

  fit.ok = true;
  fit.params = {params[0], params.size() > 1 ? params[1] : 0.0};
  std::vector<double> yhat(n);
  for (std::size_t i = 0; i < n; ++i) {
    yhat[i] = fit.params[0] / std::sqrt(data.t[i]) + fit.params[1] * rho_bar;
  }
  detail::finish_fit(fit, data.y, yhat);
  if (rho_bar == 0.0) fit.note = "b clamped to 0 (rho identically zero)";

  if (bootstrap_resamples > 0) {
    RngStream stream = RngStream::derived(seed, {stream_id::kBootstrap});
    std::vector<double> boot_a, boot_b;
    boot_a.reserve(static_cast<std::size_t>(bootstrap_resamples));
    boot_b.reserve(static_cast<std::size_t>(bootstrap_resamples));
    detail::SqrtFitData rs;
    rs.t.resize(n);
    rs.y.resize(n);
    for (int rep = 0; rep < bootstrap_resamples; ++rep) {
      double rho_sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = static_cast<std::size_t>(stream.next_below(n));
        rs.t[i] = data.t[j];
        rs.y[i] = data.y[j];
        rho_sum += rho_series.empty() ? 0.0 : rho_series[j];
      }
      rs.rho_bar = rho_bar == 0.0 ? 0.0 : rho_sum / static_cast<double>(n);
      double a = 0.0, b = 0.0;
      if (detail::solve_sqrt_form(rs, a, b)) {
        boot_a.push_back(a);
        boot_b.push_back(b);
      }
    }
    fit.ci95.push_back(detail::percentile_ci(boot_a));
    fit.ci95.push_back(detail::percentile_ci(boot_b));
  }
  return fit;
}

// ---------------------------------------------------------------------------
// Closed-form bounds.
// ---------------------------------------------------------------------------
struct TheoryParams {
  double smoothness = 0.0;             // L
  double grad_variance = 0.0;          // sigma^2
  double heterogeneity = 0.0;          // D
  double constraint_smoothness = 0.0;  // L_c
  double gamma = 0.0;                  // heterogeneity reduction in [0,1)
  double f0_gap = 0.0;                 // F(w0) - F*
  double eta = 0.01;
  int local_epochs = 1;   // E
  int num_clients = 1;    // K
  int rounds = 1;         // T
  double delta_max = 0.0;
  double eps_opt = 0.0;

  // Explicit missing markers for estimators fed with partial runs.
  bool has_smoothness = false;
  bool has_grad_variance = false;
  bool has_heterogeneity = false;
  bool has_constraint_smoothness = false;
  bool has_gamma = false;
  bool has_f0_gap = false;
};

inline bool lr_condition_holds(const TheoryParams& p) {
  return p.eta <= 1.0 / (p.smoothness * static_cast<double>(p.local_epochs));
}

// 2*(F(w0)-F*)/(eta T) + 2 L eta E^2 sigma^2 / K + 2 L^2 eta^2 E^2 D^2
// + rho * L_c * D.
inline double convergence_bound(const TheoryParams& p, double rho) {
  const double e = static_cast<double>(p.local_epochs);
  const double t = static_cast<double>(p.rounds);
  const double kk = static_cast<double>(p.num_clients);
  return 2.0 * p.f0_gap / (p.eta * t) +
         2.0 * p.smoothness * p.eta * e * e * p.grad_variance / kk +
         2.0 * p.smoothness * p.smoothness * p.eta * p.eta * e * e *
             p.heterogeneity * p.heterogeneity +
         rho * p.constraint_smoothness * p.heterogeneity;
}

struct SpeedupBound {
  bool applies = false;        // rho < gamma * D / (L_c sqrt(T))
  double lower_bound = 0.0;    // gamma * D / (L_c rho)
};

inline SpeedupBound speedup_lower_bound(const TheoryParams& p, double rho) {
  if (!(rho > 0.0)) throw ConfigError("speedup_lower_bound requires rho > 0");
  SpeedupBound out;
  const double lc = p.constraint_smoothness;
  if (lc <= 0.0) {
    out.applies = false;
    out.lower_bound = p.gamma > 0.0 ? HUGE_VAL : 0.0;
    return out;
  }
  out.lower_bound = p.gamma * p.heterogeneity / (lc * rho);
  out.applies =
      rho < p.gamma * p.heterogeneity / (lc * std::sqrt(static_cast<double>(p.rounds)));
  return out;
}

// ---------------------------------------------------------------------------
// Violation-performance linear law.
// ---------------------------------------------------------------------------

// OLS of metric on rho over points with rho below `rho_threshold`.
// params = {intercept, slope}; the fitted line is metric = (F* - eps_opt)
// + slope * rho with slope = -Delta_max.
inline FitResult violation_performance_fit(
    std::span<const std::pair<double, double>> points,
    double rho_threshold = 0.18, int bootstrap_resamples = 1000,
    std::uint64_t seed = 0x5cfa) {
  FitResult fit;
  std::vector<double> xs, ys;
  for (const auto& [rho, metric] : points) {
    if (rho < rho_threshold) {
      xs.push_back(rho);
      ys.push_back(metric);
    }
  }
  std::vector<double> distinct = xs;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() < 4) {
    fit.note = "needs at least 4 distinct rho values below the threshold";
    return fit;
  }

  auto ols = [](std::span<const double> x, std::span<const double> y,
                double& intercept, double& slope) {
    const double n = static_cast<double>(x.size());
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      sx += x[i];
      sy += y[i];
      sxx += x[i] * x[i];
      sxy += x[i] * y[i];
    }
    const double det = n * sxx - sx * sx;
    if (std::abs(det) < 1e-300) return false;
    slope = (n * sxy - sx * sy) / det;
    intercept = (sy - slope * sx) / n;
    return true;
  };

  double intercept = 0.0, slope = 0.0;
  if (!ols(xs, ys, intercept, slope)) {
    fit.note = "singular design (all rho equal)";
    return fit;
  }
  fit.ok = true;
  fit.params = {intercept, slope};
  std::vector<double> yhat(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) yhat[i] = intercept + slope * xs[i];
  detail::finish_fit(fit, ys, yhat);
  fit.note = "intercept = F* - eps_opt; slope = -Delta_max";

  if (bootstrap_resamples > 0) {
    RngStream stream = RngStream::derived(seed, {stream_id::kBootstrap});
    std::vector<double> bi, bs, rx(xs.size()), ry(xs.size());
    for (int rep = 0; rep < bootstrap_resamples; ++rep) {
      for (std::size_t i = 0; i < xs.size(); ++i) {
        const std::size_t j = static_cast<std::size_t>(stream.next_below(xs.size()));
        rx[i] = xs[j];
        ry[i] = ys[j];
      }
      double ic = 0.0, sl = 0.0;
      if (ols(rx, ry, ic, sl)) {
        bi.push_back(ic);
        bs.push_back(sl);
      }
    }
    fit.ci95.push_back(detail::percentile_ci(bi));
    fit.ci95.push_back(detail::percentile_ci(bs));
  }
  return fit;
}

inline double fitted_delta_max(const FitResult& fit) {
  return fit.params.size() > 1 ? -fit.params[1] : NAN;
}

// eps_opt given an externally known optimum F* (the line only identifies
// F* - eps_opt).
inline double fitted_eps_opt(const FitResult& fit, double f_star) {
  return fit.params.empty() ? NAN : f_star - fit.params[0];
}

// ---------------------------------------------------------------------------
// Operational zones. Boundaries are assigned to the more severe zone.
// ---------------------------------------------------------------------------
enum class Zone { kSafe, kWarning, kDanger, kCritical };

struct OperationalZone {
  Zone zone = Zone::kSafe;
  double rho = 0.0;
};

inline std::string zone_name(Zone z) {
  switch (z) {
    case Zone::kSafe: return "safe";
    case Zone::kWarning: return "warning";
    case Zone::kDanger: return "danger";
    case Zone::kCritical: return "critical";
  }
  return "?";
}

inline OperationalZone classify_zone(double rho) {
  if (!(rho >= 0.0 && rho <= 1.0)) {
    throw ConfigError("violation rate must be in [0,1]");
  }
  OperationalZone out;
  out.rho = rho;
  if (rho < 0.05) out.zone = Zone::kSafe;
  else if (rho < 0.10) out.zone = Zone::kWarning;
  else if (rho < 0.18) out.zone = Zone::kDanger;
  else out.zone = Zone::kCritical;
  return out;
}

// 100 * (nonprivate - private) / nonprivate.
inline double utility_loss(double private_metric, double nonprivate_metric) {
  if (!(nonprivate_metric > 0.0)) {
    throw ConfigError("utility_loss requires a positive non-private metric");
  }
  return 100.0 * (nonprivate_metric - private_metric) / nonprivate_metric;
}

// ---------------------------------------------------------------------------
// Estimators for the theory constants.
// ---------------------------------------------------------------------------

// Top Hessian eigenvalue magnitude of the pooled loss by power iteration on
// Hessian-vector products (central differences of the analytic gradient).
inline double estimate_smoothness(const ModelSpec& spec, const Dataset& pooled,
                                  const ParamVector& at, std::uint64_t seed,
                                  int max_iterations = 200) {
  const int d = param_count(spec);
  RngStream stream = RngStream::derived(seed, {stream_id::kPowerIteration});
  std::vector<double> v(static_cast<std::size_t>(d));
  for (double& x : v) x = stream.next_gaussian();
  double vn = norm(v);
  if (vn == 0.0) {
    v[0] = 1.0;
    vn = 1.0;
  }
  scale(v, 1.0 / vn);

  const double h = 1e-5;
  double lambda = 0.0;
  for (int iter = 0; iter < max_iterations; ++iter) {
    ParamVector wp = at, wm = at;
    axpy(h, v, wp);
    axpy(-h, v, wm);
    const GradientEstimate gp = gradient(spec, wp, pooled);
    const GradientEstimate gm = gradient(spec, wm, pooled);
    std::vector<double> hv = sub(gp.values, gm.values);
    scale(hv, 1.0 / (2.0 * h));
    const double rayleigh = dot(v, hv);
    const double hv_norm = norm(hv);
    if (hv_norm == 0.0) return 0.0;
    scale(hv, 1.0 / hv_norm);
    v = std::move(hv);
    if (std::abs(std::abs(rayleigh) - lambda) <= 1e-10 * std::max(1.0, lambda)) {
      return std::abs(rayleigh);
    }
    lambda = std::abs(rayleigh);
  }
  return lambda;
}

// Minibatch gradient variance: mean over sampled batches of
// ||g_batch - g_full||^2. Exactly zero in the full-batch regime.
inline double estimate_grad_variance(const ModelSpec& spec, const Dataset& pooled,
                                     const ParamVector& at, int batch_size,
                                     int num_batches, std::uint64_t seed) {
  if (batch_size < 1 || num_batches < 1) {
    throw ConfigError("variance estimation needs positive batch counts");
  }
  const std::size_t n = pooled.size();
  if (static_cast<std::size_t>(batch_size) >= n) return 0.0;
  const GradientEstimate full = gradient(spec, at, pooled);
  RngStream stream = RngStream::derived(seed, {stream_id::kVarianceBatches});
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Dataset batch;
  double acc = 0.0;
  for (int b = 0; b < num_batches; ++b) {
    for (int i = 0; i < batch_size; ++i) {
      const int j = i + static_cast<int>(stream.next_below(n - static_cast<std::size_t>(i)));
      std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    std::vector<int> chosen(idx.begin(), idx.begin() + batch_size);
    std::sort(chosen.begin(), chosen.end());
    batch.clear();
    for (int i : chosen) batch.push_back(pooled[static_cast<std::size_t>(i)]);
    const GradientEstimate g = gradient(spec, at, batch);
    acc += norm_sq(sub(g.values, full.values));
  }
  return acc / static_cast<double>(num_batches);
}

// gamma = 1 - (D_constrained / D_unconstrained)^2, clamped into [0, 1).
inline double estimate_gamma(double d_constrained, double d_unconstrained) {
  if (!(d_unconstrained > 0.0)) return 0.0;
  const double ratio = d_constrained / d_unconstrained;
  return std::clamp(1.0 - ratio * ratio, 0.0, 1.0 - 1e-12);
}

// L_c from a through-origin regression of the fit residuals
// y_t - a/sqrt(t) on rho_t * D.
inline bool estimate_constraint_smoothness(std::span<const RoundRecord> records,
                                           double heterogeneity_d,
                                           double fitted_a, double& out_lc) {
  double sxx = 0.0, sxy = 0.0;
  for (const RoundRecord& r : records) {
    const double x = r.rho * heterogeneity_d;
    const double resid =
        r.grad_norm_sq - fitted_a / std::sqrt(static_cast<double>(r.round));
    sxx += x * x;
    sxy += x * resid;
  }
  if (sxx <= 0.0) return false;
  out_lc = sxy / sxx;
  return true;
}

// Aggregates the estimators over completed runs; anything that cannot be
// computed from the supplied pieces stays flagged missing.
inline TheoryParams estimate_theory_params(
    const ModelSpec& spec, const std::vector<ClientDataset>& clients,
    const TrainConfig& train,
    const ParamVector* constrained_final,
    const ParamVector* unconstrained_final,
    const std::vector<RoundRecord>* constrained_records,
    int variance_batch_size, std::uint64_t seed) {
  TheoryParams p;
  p.eta = train.learning_rate;
  p.local_epochs = train.local_epochs;
  p.num_clients = static_cast<int>(clients.size());
  p.rounds = train.rounds;

  Dataset pooled;
  for (const auto& c : clients) {
    pooled.insert(pooled.end(), c.examples.begin(), c.examples.end());
  }
  if (pooled.empty()) return p;

  const ParamVector probe = constrained_final
                                ? *constrained_final
                                : initial_params(spec, train.master_seed);
  p.smoothness = estimate_smoothness(spec, pooled, probe, seed);
  p.has_smoothness = true;
  p.grad_variance = estimate_grad_variance(spec, pooled, probe,
                                           variance_batch_size, 64, seed);
  p.has_grad_variance = true;

  if (constrained_final) {
    const HeterogeneityReport rep =
        heterogeneity_report(clients, spec, *constrained_final);
    p.heterogeneity = rep.gradient_divergence;
    p.has_heterogeneity = true;
    if (unconstrained_final) {
      const HeterogeneityReport rep_u =
          heterogeneity_report(clients, spec, *unconstrained_final);
      p.gamma = estimate_gamma(rep.gradient_divergence, rep_u.gradient_divergence);
      p.has_gamma = true;
    }
  }

  if (constrained_records && !constrained_records->empty()) {
    std::vector<double> y, rho;
    for (const RoundRecord& r : *constrained_records) {
      y.push_back(r.grad_norm_sq);
      rho.push_back(r.rho);
    }
    double best = y[0];
    const std::vector<ClientDataset> as_span = clients;
    const double f0 = global_objective(
        spec, initial_params(spec, train.master_seed), as_span);
    for (const RoundRecord& r : *constrained_records) {
      best = std::min(best, r.global_loss);
    }
    p.f0_gap = std::max(0.0, f0 - best);
    p.has_f0_gap = true;

    const FitResult fit = fit_convergence_rate(y, rho, 0, seed);
    if (fit.ok && p.has_heterogeneity && p.heterogeneity > 0.0) {
      double lc = 0.0;
      if (estimate_constraint_smoothness(*constrained_records, p.heterogeneity,
                                         fit.params[0], lc)) {
        p.constraint_smoothness = std::max(0.0, lc);
        p.has_constraint_smoothness = true;
      }
    }
  }
  return p;
}

}  // namespace scfa
