// Copyright 2026 The scfa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <vector>

namespace scfa {

// Deterministic counter-based generator used everywhere in the simulator.
//
// The generator is SplitMix64 (Steele/Lea/Vigna 2014) written in counter
// form: output i of a stream with key k is
//
//   out(k, i) = mix64(k + (i + 1) * 0x9E3779B97F4A7C15)
//
// with mix64 the finalizer below. Streams carry no hidden state beyond the
// (key, counter) pair, so any draw can be replayed from its coordinates and
// independent streams can be derived for (seed, client, round, phase)
// tuples without sharing. The algorithm is fixed here so partitions and
// trajectories reproduce bit-exactly across implementations; do not swap in
// platform RNGs.

inline constexpr std::uint64_t kSplitMix64Gamma = 0x9E3779B97F4A7C15ull;

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ull;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBull;
  z ^= z >> 31;
  return z;
}

// Folds a path of stream coordinates into a single stream key.
// key_0 = mix64(master ^ gamma); key_{i+1} = mix64((key_i + gamma) ^ c_i).
inline std::uint64_t derive_key(std::uint64_t master,
                                std::initializer_list<std::uint64_t> path) {
  std::uint64_t k = mix64(master ^ kSplitMix64Gamma);
  for (std::uint64_t c : path) {
    k = mix64((k + kSplitMix64Gamma) ^ c);
  }
  return k;
}

class RngStream {
 public:
  RngStream() : key_(0) {}
  explicit RngStream(std::uint64_t key) : key_(key) {}

  static RngStream derived(std::uint64_t master,
                           std::initializer_list<std::uint64_t> path) {
    return RngStream(derive_key(master, path));
  }

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64() { return mix64(key_ + ++counter_ * kSplitMix64Gamma); }

  // Bounded draw by modulo reduction. The modulo bias (< 2^-53 for the
  // bounds used here) is irrelevant next to the reproducibility win of a
  // one-line cross-language definition.
  std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

  // Uniform double in [0, 1), 53 mantissa bits.
  double next_unit() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double next_uniform(double lo, double hi) {
    return lo + (hi - lo) * next_unit();
  }

  // Standard normal via Box-Muller; the second value of each pair is cached
  // so a stream yields the canonical sequence z0, z1, z0, z1, ...
  double next_gaussian() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = next_unit();
    while (u1 <= 0.0) u1 = next_unit();
    const double u2 = next_unit();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

  // Gamma(alpha, 1) via Marsaglia-Tsang. For alpha < 1 the boost
  // G(alpha) = G(alpha+1) * U^(1/alpha) is applied, drawing U first.
  double next_gamma(double alpha) {
    if (alpha < 1.0) {
      double u = next_unit();
      while (u <= 0.0) u = next_unit();
      return next_gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
    }
    const double d = alpha - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = next_gaussian();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = next_unit();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) {
        return d * v;
      }
    }
  }

  // Proportions over k cells from a symmetric Dirichlet(alpha).
  std::vector<double> next_dirichlet(double alpha, std::size_t k) {
    std::vector<double> g(k);
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      g[i] = next_gamma(alpha);
      sum += g[i];
    }
    if (sum <= 0.0) {
      // All-zero draws are only reachable through underflow at tiny alpha;
      // fall back to the uniform simplex point.
      for (std::size_t i = 0; i < k; ++i) g[i] = 1.0 / static_cast<double>(k);
      return g;
    }
    for (std::size_t i = 0; i < k; ++i) g[i] /= sum;
    return g;
  }

  // In-place Fisher-Yates; swap partner for slot i is i + next_below(n - i).
  template <typename T>
  void shuffle(std::vector<T>& v) {
    const std::size_t n = v.size();
    if (n < 2) return;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(next_below(n - i));
      if (j != i) std::swap(v[i], v[j]);
    }
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

// Inverse standard normal CDF. Acklam's rational approximation polished by
// one Halley step against erfc, good to ~1e-15 over (0, 1).
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -HUGE_VAL;
    if (p == 1.0) return HUGE_VAL;
    return NAN;
  }
  static const double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                              -2.759285104469687e+02, 1.383577518672690e+02,
                              -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                              -1.556989798598866e+02, 6.680131188771972e+01,
                              -1.328068155288572e+01};
  static const double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                              -2.400758277161838e+00, -2.549732539343734e+00,
                              4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                              2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double x;
  if (p < plow) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) *
        q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // Halley refinement: e = Phi(x) - p.
  const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  const double u = e * std::sqrt(2.0 * 3.141592653589793238462643383279) *
                   std::exp(x * x / 2.0);
  x = x - u / (1.0 + x * u / 2.0);
  return x;
}

}  // namespace scfa
