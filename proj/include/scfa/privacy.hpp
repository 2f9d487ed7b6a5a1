// Copyright 2026 The scfa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "scfa/errors.hpp"
#include "scfa/linalg.hpp"
#include "scfa/rng.hpp"

namespace scfa {

struct PrivacyBudget {
  double epsilon = 10.0;
  double delta = 1e-5;
};

inline void validate(const PrivacyBudget& b) {
  if (!(b.epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
  if (!(b.delta > 0.0 && b.delta < 1.0)) throw ConfigError("delta must be in (0,1)");
}

// Gaussian mechanism scale: sigma = sqrt(2 ln(1.25/delta)) / epsilon.
inline double noise_scale(const PrivacyBudget& budget) {
  validate(budget);
  return std::sqrt(2.0 * std::log(1.25 / budget.delta)) / budget.epsilon;
}

struct DpConfig {
  bool enabled = false;
  double clip_threshold = 1.0;  // C
  double sigma = 0.0;           // noise std is sigma * C per coordinate
  // Whether the server validates the noisy update it actually receives
  // (true) or the pre-noise update (false).
  bool validate_noisy = true;
};

inline void validate(const DpConfig& cfg) {
  if (!(cfg.clip_threshold > 0.0)) throw ConfigError("clip threshold must be > 0");
  if (cfg.sigma < 0.0) throw ConfigError("sigma must be >= 0");
}

// L2 projection onto the ball of radius C; identity inside the ball.
inline std::vector<double> clip(std::span<const double> v, double c) {
  if (!(c > 0.0)) throw ConfigError("clip threshold must be > 0");
  std::vector<double> out(v.begin(), v.end());
  const double n = norm(v);
  if (n > c) scale(out, c / n);
  return out;
}

// Clip then add i.i.d. N(0, (sigma*C)^2) per coordinate. With sigma == 0 the
// result equals clip(update) exactly (no stream draws are consumed).
inline std::vector<double> privatize(std::span<const double> update,
                                     const DpConfig& cfg, RngStream& stream) {
  validate(cfg);
  std::vector<double> out = clip(update, cfg.clip_threshold);
  if (cfg.sigma > 0.0) {
    const double std_dev = cfg.sigma * cfg.clip_threshold;
    for (double& x : out) x += std_dev * stream.next_gaussian();
  }
  return out;
}

// ||clean|| / ||noisy - clean||; +inf sentinel when the difference is zero.
inline double gradient_snr(std::span<const double> clean,
                           std::span<const double> noisy) {
  if (clean.size() != noisy.size()) {
    throw ConfigError("gradient_snr: dimension mismatch");
  }
  const double noise = norm(sub(noisy, clean));
  if (noise == 0.0) return HUGE_VAL;
  return norm(clean) / noise;
}

}  // namespace scfa
