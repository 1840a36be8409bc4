#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ggmwatch/random.hpp"

namespace ggmwatch {

// Barrier function f(x) = x - 1 - log(x): nonnegative, strictly convex on
// (0, inf), with its unique root at x = 1. Satisfies the exact identity
// f(a*x) - f(x) - f(a) = (a - 1)(x - 1).
inline double barrier(double x) {
  if (!std::isfinite(x) || x <= 0.0) {
    throw std::domain_error("barrier: argument must be finite and > 0");
  }
  return x - 1.0 - std::log(x);
}

// digamma / trigamma on (0, inf).
//
// Strategy: shift the argument above 8 with psi(x+1) = psi(x) + 1/x
// (resp. psi'(x+1) = psi'(x) - 1/x^2), then evaluate a 7-term Bernoulli
// asymptotic series. Absolute error stays below ~1e-13 over the domain.
inline double digamma(double x) {
  if (!std::isfinite(x) || x <= 0.0) {
    throw std::domain_error("digamma: argument must be finite and > 0");
  }
  double value = 0.0;
  while (x < 8.0) {
    value -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  const double tail =
      inv2 * (1.0 / 12.0 -
              inv2 * (1.0 / 120.0 -
                      inv2 * (1.0 / 252.0 -
                              inv2 * (1.0 / 240.0 -
                                      inv2 * (1.0 / 132.0 -
                                              inv2 * (691.0 / 32760.0 -
                                                      inv2 * (1.0 / 12.0)))))));
  return value + std::log(x) - 0.5 * inv - tail;
}

inline double trigamma(double x) {
  if (!std::isfinite(x) || x <= 0.0) {
    throw std::domain_error("trigamma: argument must be finite and > 0");
  }
  double value = 0.0;
  while (x < 8.0) {
    value += 1.0 / (x * x);
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  const double tail =
      1.0 / 6.0 -
      inv2 * (1.0 / 30.0 -
              inv2 * (1.0 / 42.0 -
                      inv2 * (1.0 / 30.0 -
                              inv2 * (5.0 / 66.0 -
                                      inv2 * (691.0 / 2730.0 -
                                              inv2 * (7.0 / 6.0))))));
  return value + inv + 0.5 * inv2 + inv * inv2 * tail;
}

// Null moments of the per-node window score: mean and standard deviation of
// f(Z_w / w) where Z_w is chi-square with w degrees of freedom. Both are
// strictly positive and decrease in w, with w*mean -> 1 and w*sd -> sqrt(2).
inline double barrier_null_mean(int w) {
  if (w < 1) throw std::domain_error("barrier_null_mean: w must be >= 1");
  const double half = 0.5 * static_cast<double>(w);
  return std::log(half) - digamma(half);
}

inline double barrier_null_sd(int w) {
  if (w < 1) throw std::domain_error("barrier_null_sd: w must be >= 1");
  const double half = 0.5 * static_cast<double>(w);
  const double variance = trigamma(half) - 2.0 / static_cast<double>(w);
  if (!(variance > 0.0)) {
    // trigamma(w/2) > 2/w holds for every w >= 1; a violation means the
    // special-function evaluation itself is broken.
    throw std::runtime_error("barrier_null_sd: nonpositive variance");
  }
  return std::sqrt(variance);
}

// Correlation transfer of the window score: corr[f(Z_w/w), f(Z'_w/w)] for
// chi-square sums built from correlated squared Gaussians. Implemented as the
// large-w proxy r^4, whose bias is O(1/w); exact at r = 0 and |r| = 1 for
// every w. The Monte Carlo estimate of the exact value lives in
// barrier_correlation_mc below and is used as the test oracle.
inline double barrier_correlation(double r, int w) {
  if (w < 1) throw std::domain_error("barrier_correlation: w must be >= 1");
  if (!std::isfinite(r) || std::abs(r) > 1.0 + 1e-12) {
    throw std::domain_error("barrier_correlation: |r| must be <= 1");
  }
  r = std::clamp(r, -1.0, 1.0);
  const double r2 = r * r;
  return r2 * r2;
}

inline double barrier_correlation_mc(double r, int w, long nsamples,
                                     std::uint64_t seed) {
  if (w < 1) throw std::domain_error("barrier_correlation_mc: w must be >= 1");
  if (!std::isfinite(r) || std::abs(r) > 1.0) {
    throw std::domain_error("barrier_correlation_mc: |r| must be <= 1");
  }
  if (nsamples < 10000) {
    throw std::domain_error("barrier_correlation_mc: nsamples must be >= 1e4");
  }
  Rng rng(seed);
  const double cross = std::sqrt(std::max(0.0, 1.0 - r * r));
  double sum_a = 0.0, sum_b = 0.0, sum_aa = 0.0, sum_bb = 0.0, sum_ab = 0.0;
  for (long i = 0; i < nsamples; ++i) {
    double z = 0.0, zp = 0.0;
    for (int k = 0; k < w; ++k) {
      const double x = rng.gaussian();
      const double y = rng.gaussian();
      const double xp = r * x + cross * y;
      z += x * x;
      zp += xp * xp;
    }
    const double a = barrier(z / w);
    const double b = barrier(zp / w);
    sum_a += a;
    sum_b += b;
    sum_aa += a * a;
    sum_bb += b * b;
    sum_ab += a * b;
  }
  const double n = static_cast<double>(nsamples);
  const double cov = sum_ab / n - (sum_a / n) * (sum_b / n);
  const double va = sum_aa / n - (sum_a / n) * (sum_a / n);
  const double vb = sum_bb / n - (sum_b / n) * (sum_b / n);
  return cov / std::sqrt(va * vb);
}

// Covariances of centered chi-square powers for sums of w correlated squared
// standard Gaussians (pairwise correlation r):
//   sq_sq   = cov[(Z_w - w)^2, (Z'_w - w)^2] = 8 r^2 (4w + 2 r^2 w + r^2 w^2)
//   sq_cube = cov[(Z_w - w)^2, (Z'_w - w)^3] = 96 r^4 w (w+2) + 48 r^2 w (w+4)
// Exact checkpoints: sq_sq(1,1) = 56, sq_sq(1,2) = 128, sq_cube(1,1) = 528,
// sq_cube(1,2) = 1344, all matching direct chi-square central moments; the
// test suite cross-checks both against brute-force sampling.
struct Chi2MomentCov {
  double sq_sq;
  double sq_cube;
};

inline Chi2MomentCov chi2_moment_cov(double r, int w) {
  if (w < 1) throw std::domain_error("chi2_moment_cov: w must be >= 1");
  if (!std::isfinite(r) || std::abs(r) > 1.0) {
    throw std::domain_error("chi2_moment_cov: |r| must be <= 1");
  }
  const double r2 = r * r;
  const double r4 = r2 * r2;
  const double dw = static_cast<double>(w);
  const double p = 8.0 * r2 * (4.0 * dw + 2.0 * r2 * dw + r2 * dw * dw);
  const double q = 96.0 * r4 * dw * (dw + 2.0) + 48.0 * r2 * dw * (dw + 4.0);
  return {p, q};
}

inline double gaussian_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Upper-tail probability P(N(0,1) >= x).
inline double gaussian_upper_tail(double x) {
  return 0.5 * std::erfc(x / std::sqrt(2.0));
}

// Upper-tail standard normal quantile: the z with P(N(0,1) >= z) = pi.
// Rational approximation (Acklam) refined by two Newton steps against the
// erfc-based tail; absolute error well below 1e-9.
inline double gaussian_upper_quantile(double pi) {
  if (!std::isfinite(pi) || pi <= 0.0 || pi >= 1.0) {
    throw std::domain_error("gaussian_upper_quantile: pi must lie in (0, 1)");
  }
  const double p = 1.0 - pi;  // lower-tail probability of the result
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
  const double p_low = 0.02425;
  double z;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    z = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double t = q * q;
    z = (((((a[0] * t + a[1]) * t + a[2]) * t + a[3]) * t + a[4]) * t + a[5]) * q /
        (((((b[0] * t + b[1]) * t + b[2]) * t + b[3]) * t + b[4]) * t + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    z = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  for (int iter = 0; iter < 2; ++iter) {
    const double err = gaussian_upper_tail(z) - pi;
    const double density = std::exp(-0.5 * z * z) / std::sqrt(2.0 * kPi);
    if (density <= 0.0) break;
    z += err / density;  // Q is decreasing: Q'(z) = -phi(z)
  }
  return z;
}

}  // namespace ggmwatch
