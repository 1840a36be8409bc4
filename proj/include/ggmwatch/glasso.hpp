#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "ggmwatch/precision.hpp"

namespace ggmwatch {

// (1/n) X^T X. The model is zero-mean, so no centering by default; pass
// center = true for real data that has not been demeaned.
inline Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& samples,
                                         bool center = false) {
  const long n = samples.rows();
  if (n < 2) throw std::invalid_argument("sample_covariance: need n >= 2");
  if (!samples.allFinite()) {
    throw std::invalid_argument("sample_covariance: samples must be finite");
  }
  if (center) {
    const Eigen::RowVectorXd mean = samples.colwise().mean();
    const Eigen::MatrixXd centered = samples.rowwise() - mean;
    return centered.transpose() * centered / static_cast<double>(n);
  }
  return samples.transpose() * samples / static_cast<double>(n);
}

struct GlassoSolution {
  PrecisionMatrix omega_hat;
  double tau = 0.0;
  int iterations = 0;
  double objective = 0.0;  // -log det(omega) + <omega, cov> + tau * ||omega||_1
  bool converged = false;
  std::vector<double> objective_history;  // one entry per outer sweep
};

namespace detail {

inline double soft_threshold(double x, double t) {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0.0;
}

inline double glasso_objective(const Eigen::MatrixXd& omega, const Eigen::MatrixXd& s,
                               double tau) {
  Eigen::LLT<Eigen::MatrixXd> llt(omega);
  if (llt.info() != Eigen::Success) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return -log_det + omega.cwiseProduct(s).sum() + tau * omega.cwiseAbs().sum();
}

// Recover the precision matrix from the working covariance W and the column
// coefficients B: omega_jj = 1/(W_jj - w12' beta_j), omega_[, j] = -beta_j omega_jj.
inline Eigen::MatrixXd glasso_recover(const Eigen::MatrixXd& w,
                                      const Eigen::MatrixXd& b) {
  const int p = static_cast<int>(w.rows());
  Eigen::MatrixXd omega(p, p);
  for (int j = 0; j < p; ++j) {
    const double denom = w(j, j) - w.col(j).dot(b.col(j));
    if (!(denom > 0.0)) return Eigen::MatrixXd();  // signals an invalid iterate
    const double ojj = 1.0 / denom;
    omega.col(j) = -b.col(j) * ojj;
    omega(j, j) = ojj;
  }
  return 0.5 * (omega + omega.transpose()).eval();
}

}  // namespace detail

// L1-penalized precision estimation:
//   minimize  -log det(Omega) + <Omega, cov> + tau * ||Omega||_1
// over SPD matrices (the penalty includes the diagonal), solved by blockwise
// coordinate descent on the covariance side. Convergence is declared when the
// largest working-covariance change falls below tol relative to the scale of
// cov. On hitting max_iter the best iterate is returned with converged =
// false rather than throwing.
//
// warm_start, when given, must be a previous precision estimate of matching
// size; it seeds the regression coefficients, which typically cuts the sweep
// count to one or two for incremental refits.
inline GlassoSolution penalized_precision(const Eigen::MatrixXd& cov, double tau,
                                          double tol = 1e-5, int max_iter = 200,
                                          const Eigen::MatrixXd* warm_start = nullptr) {
  if (cov.rows() != cov.cols() || cov.rows() < 1) {
    throw std::invalid_argument("penalized_precision: cov must be square");
  }
  if (!(tau >= 0.0) || !std::isfinite(tau)) {
    throw std::invalid_argument("penalized_precision: tau must be >= 0");
  }
  if (!(tol > 0.0) || max_iter < 1) {
    throw std::invalid_argument("penalized_precision: bad tol/max_iter");
  }
  const int p = static_cast<int>(cov.rows());
  Eigen::MatrixXd s = 0.5 * (cov + cov.transpose());
  if (!s.allFinite()) {
    throw std::invalid_argument("penalized_precision: cov must be finite");
  }

  {  // PSD sanity of the working start; jitter once before giving up.
    Eigen::MatrixXd probe = s;
    probe.diagonal().array() += tau;
    if (Eigen::LLT<Eigen::MatrixXd>(probe).info() != Eigen::Success) {
      s.diagonal().array() += 1e-8 * s.diagonal().mean();
      probe = s;
      probe.diagonal().array() += tau;
      if (Eigen::LLT<Eigen::MatrixXd>(probe).info() != Eigen::Success) {
        throw std::invalid_argument(
            "penalized_precision: cov not PSD after diagonal jitter");
      }
    }
  }

  Eigen::MatrixXd w = s;
  w.diagonal().array() += tau;
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(p, p);
  if (warm_start != nullptr) {
    if (warm_start->rows() != p || warm_start->cols() != p) {
      throw std::invalid_argument("penalized_precision: warm start size mismatch");
    }
    for (int j = 0; j < p; ++j) {
      b.col(j) = -warm_start->col(j) / (*warm_start)(j, j);
      b(j, j) = 0.0;
    }
  }

  double off_scale = 0.0;
  if (p > 1) {
    off_scale = (s.cwiseAbs().sum() - s.diagonal().cwiseAbs().sum()) /
                static_cast<double>(p) / static_cast<double>(p - 1);
  }
  const double w_scale = s.cwiseAbs().maxCoeff() + tau + 1e-12;
  const double inner_tol = 0.05 * tol * std::max(off_scale, 1e-3 * w_scale);
  const int max_inner = 1000;

  std::vector<double> history;
  int sweeps_used = 0;
  bool converged = false;

  Eigen::VectorXd beta(p), v(p);
  for (int sweep = 1; sweep <= max_iter; ++sweep) {
    double max_dw = 0.0;
    for (int j = 0; j < p; ++j) {
      beta = b.col(j);
      beta[j] = 0.0;
      v.noalias() = w * beta;  // running W11 * beta (row j unused below)
      for (int inner = 0; inner < max_inner; ++inner) {
        double max_db = 0.0;
        for (int k = 0; k < p; ++k) {
          if (k == j) continue;
          const double gradient = s(k, j) - (v[k] - w(k, k) * beta[k]);
          const double updated = detail::soft_threshold(gradient, tau) / w(k, k);
          const double diff = updated - beta[k];
          if (diff != 0.0) {
            v.noalias() += diff * w.col(k);
            beta[k] = updated;
            max_db = std::max(max_db, std::abs(diff) * w(k, k));
          }
        }
        if (max_db < inner_tol) break;
      }
      b.col(j) = beta;
      b(j, j) = 0.0;
      for (int i = 0; i < p; ++i) {
        if (i == j) continue;
        max_dw = std::max(max_dw, std::abs(v[i] - w(i, j)));
        w(i, j) = v[i];
        w(j, i) = v[i];
      }
    }

    sweeps_used = sweep;
    const Eigen::MatrixXd omega_iter = detail::glasso_recover(w, b);
    if (omega_iter.size() > 0) {
      history.push_back(detail::glasso_objective(omega_iter, s, tau));
    }
    if (max_dw / w_scale < tol) {
      converged = true;
      break;
    }
  }

  Eigen::MatrixXd omega = detail::glasso_recover(w, b);
  if (omega.size() == 0) {
    throw NotPositiveDefiniteError("penalized_precision: degenerate iterate");
  }
  GlassoSolution out{PrecisionMatrix::validate(std::move(omega)),
                     tau,
                     sweeps_used,
                     0.0,
                     converged,
                     std::move(history)};
  out.objective = detail::glasso_objective(out.omega_hat.matrix(), s, tau);
  return out;
}

// Regularization grid tau_j = 10^(-1 + j/10) * sqrt(log(p)/n), j = 0..grid-1.
// The prefactor tau0 = 10^(-1 + j/10) is what mini-batch refits carry between
// model selections; only the sqrt(log p / n) factor is rescaled with n.
inline std::vector<double> bic_tau0_grid(int grid_size) {
  std::vector<double> grid(static_cast<std::size_t>(grid_size));
  for (int j = 0; j < grid_size; ++j) {
    grid[static_cast<std::size_t>(j)] = std::pow(10.0, -1.0 + j / 10.0);
  }
  return grid;
}

inline double tau_from_tau0(double tau0, int p, long n) {
  return tau0 * std::sqrt(std::log(static_cast<double>(p)) / static_cast<double>(n));
}

struct BicSelection {
  double tau_star;
  double tau0_star;
  GlassoSolution solution;
  std::vector<double> grid_taus;
  std::vector<double> grid_bic;
};

// Fits the whole grid (descending tau, warm-started along the path) and keeps
// the BIC minimizer:
//   BIC = n * [-log det(Omega) + <Omega, S>] + log(n) * k,
// with k = (# nonzero strict-upper entries) + p free parameters. Ties break
// toward the larger (sparser) tau.
inline BicSelection bic_select(const Eigen::MatrixXd& samples, int grid_size = 20,
                               double tol = 1e-5, int max_iter = 200,
                               bool center = false) {
  const long n = samples.rows();
  const int p = static_cast<int>(samples.cols());
  if (n < 2) throw std::invalid_argument("bic_select: need n >= 2");
  if (grid_size < 1) throw std::invalid_argument("bic_select: grid_size must be >= 1");
  const Eigen::MatrixXd s = sample_covariance(samples, center);
  const std::vector<double> tau0s = bic_tau0_grid(grid_size);

  std::vector<double> grid_taus(tau0s.size());
  std::vector<double> grid_bic(tau0s.size());
  double best_bic = std::numeric_limits<double>::infinity();
  double best_tau = 0.0, best_tau0 = 0.0;
  std::optional<GlassoSolution> best;
  Eigen::MatrixXd warm;
  for (int idx = grid_size - 1; idx >= 0; --idx) {
    const double tau0 = tau0s[static_cast<std::size_t>(idx)];
    const double tau = tau_from_tau0(tau0, p, n);
    GlassoSolution sol =
        penalized_precision(s, tau, tol, max_iter, warm.size() > 0 ? &warm : nullptr);
    warm = sol.omega_hat.matrix();

    long support = 0;
    for (int j = 1; j < p; ++j) {
      for (int i = 0; i < j; ++i) {
        if (std::abs(sol.omega_hat.matrix()(i, j)) > 1e-12) ++support;
      }
    }
    const double loglik_term =
        -sol.omega_hat.log_det() + sol.omega_hat.matrix().cwiseProduct(s).sum();
    const double bic = static_cast<double>(n) * loglik_term +
                       std::log(static_cast<double>(n)) *
                           static_cast<double>(support + p);
    grid_taus[static_cast<std::size_t>(idx)] = tau;
    grid_bic[static_cast<std::size_t>(idx)] = bic;
    // strict improvement only: on ties the earlier (larger) tau wins
    if (bic < best_bic) {
      best_bic = bic;
      best_tau = tau;
      best_tau0 = tau0;
      best = std::move(sol);
    }
  }
  return BicSelection{best_tau, best_tau0, std::move(*best), std::move(grid_taus),
                      std::move(grid_bic)};
}

// Detection-calibrated selection over the same grid. The plug-in statistic is
// unbiased exactly when the per-node barrier bias
//   psi_hat = mean_s f( (Omega_hat Sigma Omega_hat)_ss / (Omega_hat)_ss )
// vanishes (Sigma the true covariance), so this selector estimates psi_hat on
// a held-out tail of the burn-in and keeps the tau minimizing it, then refits
// at that tau on the full sample. BIC-style likelihood parsimony (bic_select)
// is nearly flat across the small-tau end of the grid and routinely picks a
// tau whose shrinkage bias pushes the running statistic above its critical
// value; this criterion targets the quantity the detector actually needs.
struct CalibratedSelection {
  double tau_star;
  double tau0_star;
  GlassoSolution solution;
  std::vector<double> grid_taus;
  std::vector<double> grid_bias;  // estimated plug-in null bias per grid point
};

inline CalibratedSelection calibrated_select(const Eigen::MatrixXd& samples,
                                             int grid_size = 20, double tol = 1e-5,
                                             int max_iter = 200,
                                             double holdout_fraction = 0.25) {
  const long n = samples.rows();
  const int p = static_cast<int>(samples.cols());
  if (n < 4) throw std::invalid_argument("calibrated_select: need n >= 4");
  if (!(holdout_fraction > 0.0 && holdout_fraction < 0.5)) {
    throw std::invalid_argument("calibrated_select: holdout_fraction in (0, 0.5)");
  }
  const long n_hold = std::max<long>(2, static_cast<long>(holdout_fraction * n));
  const long n_fit = n - n_hold;
  const Eigen::MatrixXd s_fit = sample_covariance(samples.topRows(n_fit));
  const Eigen::MatrixXd s_hold = sample_covariance(samples.bottomRows(n_hold));
  const std::vector<double> tau0s = bic_tau0_grid(grid_size);

  std::vector<double> grid_taus(tau0s.size());
  std::vector<double> grid_bias(tau0s.size());
  double best_bias = std::numeric_limits<double>::infinity();
  double best_tau0 = tau0s.back();
  Eigen::MatrixXd warm;
  for (int idx = grid_size - 1; idx >= 0; --idx) {
    const double tau0 = tau0s[static_cast<std::size_t>(idx)];
    const double tau = tau_from_tau0(tau0, p, n_fit);
    GlassoSolution sol =
        penalized_precision(s_fit, tau, tol, max_iter, warm.size() > 0 ? &warm : nullptr);
    warm = sol.omega_hat.matrix();
    const Eigen::MatrixXd& omega = sol.omega_hat.matrix();
    const Eigen::MatrixXd cross = s_hold.selfadjointView<Eigen::Lower>() * omega;
    double bias = 0.0;
    for (int s = 0; s < p; ++s) {
      const double quad = omega.col(s).dot(cross.col(s)) / omega(s, s);
      bias += barrier(std::max(quad, 1e-8));
    }
    bias /= static_cast<double>(p);
    grid_taus[static_cast<std::size_t>(idx)] = tau;
    grid_bias[static_cast<std::size_t>(idx)] = bias;
    if (bias < best_bias) {
      best_bias = bias;
      best_tau0 = tau0;
    }
  }
  // final fit on the full sample at the selected prefactor
  const double tau_full = tau_from_tau0(best_tau0, p, n);
  GlassoSolution final_sol =
      penalized_precision(sample_covariance(samples), tau_full, tol, max_iter,
                          warm.size() > 0 ? &warm : nullptr);
  return CalibratedSelection{tau_full, best_tau0, std::move(final_sol),
                             std::move(grid_taus), std::move(grid_bias)};
}

struct MinibatchRefit {
  GlassoSolution solution;
  double tau0 = 0.0;
  bool full_selection = false;
};

// One mini-batch update of the pre-change estimate. Every kappa-th update
// re-runs the full BIC selection; the others keep the last selected tau0,
// rescale tau with the current sample count, and refit warm-started from the
// previous estimate.
inline MinibatchRefit minibatch_refit(const Eigen::MatrixXd& samples_since_last_change,
                                      int kappa_counter, int kappa, double last_tau0,
                                      const Eigen::MatrixXd* warm_start = nullptr,
                                      double tol = 1e-5, int max_iter = 200,
                                      int grid_size = 20) {
  if (kappa < 1) throw std::invalid_argument("minibatch_refit: kappa must be >= 1");
  if (kappa_counter % kappa == 0) {
    BicSelection sel = bic_select(samples_since_last_change, grid_size, tol, max_iter);
    return {std::move(sel.solution), sel.tau0_star, true};
  }
  const long n = samples_since_last_change.rows();
  const int p = static_cast<int>(samples_since_last_change.cols());
  const double tau = tau_from_tau0(last_tau0, p, n);
  GlassoSolution sol = penalized_precision(sample_covariance(samples_since_last_change),
                                           tau, tol, max_iter, warm_start);
  return {std::move(sol), last_tau0, false};
}

}  // namespace ggmwatch
