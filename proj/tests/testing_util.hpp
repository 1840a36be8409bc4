#pragma once

// Shared Monte Carlo helpers for the test and acceptance suites. These stay
// independent of the library's statistic implementations: estimates come with
// delta-method standard errors so tests can assert "within k standard errors"
// bounds honestly.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "ggmwatch/random.hpp"

namespace ggmwatch::mc {

struct MomentEstimate {
  double mean = 0.0;
  double sd = 0.0;
  double se_mean = 0.0;
  double se_sd = 0.0;
};

inline MomentEstimate moments_with_se(const std::vector<double>& x) {
  const double n = static_cast<double>(x.size());
  if (x.size() < 16) throw std::invalid_argument("moments_with_se: sample too small");
  double mean = 0.0;
  for (const double v : x) mean += v;
  mean /= n;
  double m2 = 0.0, m4 = 0.0;
  for (const double v : x) {
    const double d = v - mean;
    m2 += d * d;
    m4 += d * d * d * d;
  }
  m2 /= n;
  m4 /= n;
  MomentEstimate out;
  out.mean = mean;
  out.sd = std::sqrt(m2 * n / (n - 1.0));
  out.se_mean = std::sqrt(m2 / n);
  out.se_sd = std::sqrt(std::max(0.0, m4 - m2 * m2) / (4.0 * m2 * n));
  return out;
}

struct CovEstimate {
  double cov = 0.0;
  double se = 0.0;
};

inline CovEstimate covariance_with_se(const std::vector<double>& a,
                                      const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 16) {
    throw std::invalid_argument("covariance_with_se: bad samples");
  }
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0.0, m22 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    cov += da * db;
    m22 += da * da * db * db;
  }
  cov /= n;
  m22 /= n;
  CovEstimate out;
  out.cov = cov;
  out.se = std::sqrt(std::max(0.0, m22 - cov * cov) / n);
  return out;
}

// One draw of the pair (Z_w, Z'_w): sums of w squared standard normals with
// per-coordinate correlation r.
inline std::pair<double, double> chi2_pair(double r, int w, Rng& rng) {
  const double cross = std::sqrt(std::max(0.0, 1.0 - r * r));
  double z = 0.0, zp = 0.0;
  for (int k = 0; k < w; ++k) {
    const double x = rng.gaussian();
    const double y = rng.gaussian();
    const double xp = r * x + cross * y;
    z += x * x;
    zp += xp * xp;
  }
  return {z, zp};
}

}  // namespace ggmwatch::mc
