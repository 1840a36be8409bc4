#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <stdexcept>
#include <utility>

#include "ggmwatch/random.hpp"
#include "ggmwatch/special_functions.hpp"

namespace ggmwatch {

class NotPositiveDefiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class AsymmetryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Validated symmetric positive definite precision matrix. Immutable after
// construction. The Cholesky factor of Omega is cached so every
// covariance-side operation runs as a triangular solve; the inverse is never
// formed explicitly. Sparsity is metadata (an entry threshold), not a storage
// format: dense storage targets graphs up to a couple thousand nodes.
class PrecisionMatrix {
 public:
  static constexpr double kDefaultSparsityEps = 1e-8;
  static constexpr double kSymmetryTol = 1e-10;

  // Symmetrizes roundoff-level asymmetry, rejects anything beyond tolerance,
  // and requires a successful Cholesky factorization.
  static PrecisionMatrix validate(Eigen::MatrixXd m,
                                  double sparsity_eps = kDefaultSparsityEps) {
    if (m.rows() != m.cols() || m.rows() < 1) {
      throw std::invalid_argument("PrecisionMatrix: matrix must be square");
    }
    if (!m.allFinite()) {
      throw std::invalid_argument("PrecisionMatrix: entries must be finite");
    }
    const double scale = m.cwiseAbs().maxCoeff();
    const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
    if (asym > kSymmetryTol * (1.0 + scale)) {
      throw AsymmetryError("PrecisionMatrix: asymmetry beyond tolerance");
    }
    m = 0.5 * (m + m.transpose()).eval();
    if ((m.diagonal().array() <= 0.0).any()) {
      throw NotPositiveDefiniteError("PrecisionMatrix: nonpositive diagonal");
    }
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() != Eigen::Success) {
      throw NotPositiveDefiniteError("PrecisionMatrix: Cholesky failed");
    }
    return PrecisionMatrix(std::move(m), std::move(llt), sparsity_eps);
  }

  int dim() const { return static_cast<int>(omega_.rows()); }
  const Eigen::MatrixXd& matrix() const { return omega_; }
  const Eigen::LLT<Eigen::MatrixXd>& factor() const { return llt_; }
  double sparsity_eps() const { return sparsity_eps_; }

  double log_det() const {
    return 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
  }

 private:
  PrecisionMatrix(Eigen::MatrixXd omega, Eigen::LLT<Eigen::MatrixXd> llt,
                  double sparsity_eps)
      : omega_(std::move(omega)), llt_(std::move(llt)), sparsity_eps_(sparsity_eps) {}

  Eigen::MatrixXd omega_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  double sparsity_eps_;
};

// Partial correlation matrix R with R[i,j] = Omega[i,j]/sqrt(Omega[i,i]*Omega[j,j]).
// Unit diagonal, same support as the source precision matrix, invariant under
// positive rescaling of Omega. quartic_sum caches sum_ij R[i,j]^4 (the
// detector's correlation-proxy total); it is always >= dim because the
// diagonal alone contributes dim.
struct PartialCorrelationMatrix {
  Eigen::MatrixXd r;
  double quartic_sum = 0.0;

  int dim() const { return static_cast<int>(r.rows()); }
};

inline PartialCorrelationMatrix partial_correlation(const PrecisionMatrix& omega) {
  const Eigen::VectorXd inv_sqrt_diag =
      omega.matrix().diagonal().array().sqrt().inverse();
  PartialCorrelationMatrix out;
  out.r = inv_sqrt_diag.asDiagonal() * omega.matrix() * inv_sqrt_diag.asDiagonal();
  out.r.diagonal().setOnes();
  out.quartic_sum = out.r.array().square().square().sum();
  return out;
}

// D^{-1/2} M D^{-1/2}; used where generated precision matrices are pinned to
// unit diagonal before streaming.
inline Eigen::MatrixXd normalize_to_correlation(const Eigen::MatrixXd& m) {
  const Eigen::VectorXd inv_sqrt_diag = m.diagonal().array().sqrt().inverse();
  Eigen::MatrixXd out = inv_sqrt_diag.asDiagonal() * m * inv_sqrt_diag.asDiagonal();
  out.diagonal().setOnes();
  return out;
}

// n i.i.d. draws from N(0, Omega^{-1}), returned as an n x p matrix. Each
// sample back-solves a standard normal vector through the cached Cholesky
// factor: with Omega = L L^T, x = L^{-T} z has covariance Omega^{-1}.
// Bit-identical output for a fixed seed.
inline Eigen::MatrixXd sample_ggm(const PrecisionMatrix& omega, long n,
                                  std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("sample_ggm: n must be >= 1");
  const int p = omega.dim();
  Rng rng(seed);
  Eigen::MatrixXd z(p, n);
  for (long j = 0; j < n; ++j) {
    for (int i = 0; i < p; ++i) z(i, j) = rng.gaussian();
  }
  omega.factor().matrixU().solveInPlace(z);
  return z.transpose();
}

// Kullback-Leibler divergence between w-sample blocks of the two regimes:
// w * sum_j f(lambda_j(Psi)) with Psi = Omega_post^{-1/2} Omega_pre Omega_post^{-1/2}.
// The eigenvalues of Psi are the generalized eigenvalues of (Omega_pre, Omega_post).
inline double kl_divergence(const PrecisionMatrix& pre, const PrecisionMatrix& post,
                            int w) {
  if (pre.dim() != post.dim()) {
    throw std::invalid_argument("kl_divergence: dimension mismatch");
  }
  if (w < 1) throw std::invalid_argument("kl_divergence: w must be >= 1");
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> solver(
      pre.matrix(), post.matrix(), Eigen::EigenvaluesOnly | Eigen::Ax_lBx);
  double total = 0.0;
  for (int j = 0; j < pre.dim(); ++j) {
    total += barrier(solver.eigenvalues()[j]);
  }
  return static_cast<double>(w) * total;
}

// Algebraically equivalent route, kept separate as a cross-check:
// w * [tr(Omega_post^{-1} Omega_pre) - log det(Omega_pre/Omega_post) - p].
inline double kl_divergence_trace_form(const PrecisionMatrix& pre,
                                       const PrecisionMatrix& post, int w) {
  if (pre.dim() != post.dim()) {
    throw std::invalid_argument("kl_divergence_trace_form: dimension mismatch");
  }
  if (w < 1) throw std::invalid_argument("kl_divergence_trace_form: w must be >= 1");
  const double trace_term = post.factor().solve(pre.matrix()).trace();
  const double log_ratio = pre.log_det() - post.log_det();
  return static_cast<double>(w) * (trace_term - log_ratio - pre.dim());
}

// Node degrees count entries above the sparsity threshold, diagonal included.
struct DegreeStats {
  int d_max = 0;
  double d_bar = 0.0;
};

inline DegreeStats degree_stats(const PrecisionMatrix& omega) {
  const int p = omega.dim();
  const double eps = omega.sparsity_eps();
  DegreeStats out;
  long total = 0;
  for (int i = 0; i < p; ++i) {
    int deg = 0;
    for (int j = 0; j < p; ++j) {
      if (std::abs(omega.matrix()(i, j)) > eps) ++deg;
    }
    out.d_max = std::max(out.d_max, deg);
    total += deg;
  }
  out.d_bar = static_cast<double>(total) / static_cast<double>(p);
  return out;
}

// Relative per-node change between regimes:
//   delta[s] = [Omega_pre Omega_post^{-1} Omega_pre]_ss / (Omega_pre)_ss - 1,
// and psi_bar = mean_s f(1 + delta[s]). psi_bar >= 0 with equality iff the
// regimes coincide; it is the detectability signal strength.
struct ChangeSignal {
  Eigen::VectorXd delta;
  double psi_bar = 0.0;
};

inline ChangeSignal change_signal(const PrecisionMatrix& pre,
                                  const PrecisionMatrix& post) {
  if (pre.dim() != post.dim()) {
    throw std::invalid_argument("change_signal: dimension mismatch");
  }
  const int p = pre.dim();
  const Eigen::MatrixXd solved = post.factor().solve(pre.matrix());
  ChangeSignal out;
  out.delta.resize(p);
  double acc = 0.0;
  for (int s = 0; s < p; ++s) {
    const double quad = pre.matrix().col(s).dot(solved.col(s));
    out.delta[s] = quad / pre.matrix()(s, s) - 1.0;
    acc += barrier(1.0 + out.delta[s]);
  }
  out.psi_bar = acc / static_cast<double>(p);
  return out;
}

// Minimum average change magnitude guaranteeing the target error rates:
// (4/w) * sqrt((1/p) [log(1/(2 pi0)) + log(1/(2 pi1))]).
inline double detectability_threshold(int p, int w, double pi0, double pi1) {
  if (p < 1 || w < 1) {
    throw std::domain_error("detectability_threshold: p and w must be >= 1");
  }
  if (!(pi0 > 0.0) || !(pi1 > 0.0) || pi0 > 0.5 || pi1 > 0.5) {
    throw std::domain_error("detectability_threshold: need 0 < pi0, pi1 <= 1/2");
  }
  const double inside =
      (std::log(1.0 / (2.0 * pi0)) + std::log(1.0 / (2.0 * pi1))) /
      static_cast<double>(p);
  return 4.0 / static_cast<double>(w) * std::sqrt(inside);
}

}  // namespace ggmwatch
