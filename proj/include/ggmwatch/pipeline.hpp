#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "ggmwatch/detector.hpp"
#include "ggmwatch/glasso.hpp"

namespace ggmwatch {

enum class PipelineMode { kBurnIn, kMonitor, kPostAlarmBurnIn };

inline const char* to_string(PipelineMode mode) {
  switch (mode) {
    case PipelineMode::kBurnIn: return "burnin";
    case PipelineMode::kMonitor: return "monitor";
    case PipelineMode::kPostAlarmBurnIn: return "post_alarm_burnin";
  }
  return "unknown";
}

enum class SelectionRule {
  kCalibrated,  // holdout-calibrated plug-in bias minimization (default)
  kBic,         // BIC over the same grid
};

struct PipelineConfig {
  int n0 = 1500;    // burn-in length per regime
  int batch = 50;   // mini-batch size B between refits
  int kappa = 4;    // model selection once every kappa refits
  int iota = 5;     // consecutive flags required to confirm an alarm
  DetectorConfig detector = DetectorConfig::make(20, 0.01);
  std::optional<long> separation_guard;  // expected change spacing, advisory
  double glasso_tol = 1e-5;
  int glasso_max_iter = 200;
  int bic_grid = 20;
  SelectionRule selection = SelectionRule::kCalibrated;
  // When set, the regularization prefactor is pinned (tau = fixed_tau0 *
  // sqrt(log p / n)) and no model selection runs; this is the algorithm's
  // raw "tau as input" form.
  std::optional<double> fixed_tau0;

  void validate() const {
    if (n0 <= detector.w) {
      throw std::invalid_argument("PipelineConfig: n0 must exceed the window w");
    }
    if (batch < 1 || kappa < 1 || iota < 1) {
      throw std::invalid_argument("PipelineConfig: B, kappa, iota must be >= 1");
    }
  }
};

// Trace record for one consumed sample. The statistic is absent exactly while
// the pipeline is burning in or the detection window has not refilled.
struct StepEvent {
  long t = 0;  // 1-based index of the consumed sample
  std::optional<double> statistic;
  bool flagged = false;
  bool alarm_confirmed = false;
  bool refit_performed = false;
  PipelineMode mode = PipelineMode::kBurnIn;
  std::string note;  // estimator diagnostics; empty otherwise
};

struct PipelineState {
  PipelineMode mode = PipelineMode::kBurnIn;
  long t = 0;                  // samples consumed
  int b = 0;                   // non-flagged monitored steps since last refit
  int update_count = 0;        // refits since the regime's model selection
  long t_hat_last = 0;         // last recorded change location
  std::vector<long> detected;  // recorded change locations, strictly increasing
  int consecutive_flags = 0;
  long run_first_window_start = 0;  // window start of the first flag in the run
  double tau0 = std::numeric_limits<double>::quiet_NaN();
  std::optional<PrecisionMatrix> omega_hat;
  std::vector<Eigen::VectorXd> history;  // samples of the current regime
};

// Online detection with mini-batch updates of the pre-change estimate.
//
// Timing conventions, fixed here and used consistently by the experiment
// harness:
//   * A statistic computed on consuming sample t summarizes the window
//     {t-w+1, ..., t}.
//   * A confirmed alarm records the change location as the first sample of
//     the window that produced the first flag of the iota-run.
//   * Detection delay against a ground-truth change time t* (first sample of
//     the new regime) is therefore (recorded location - t*) + w, counting the
//     look-ahead samples the detector consumed.
//
// After a confirmed alarm the buffered window and regime history are cleared;
// the next n0 samples are devoted to estimating the post-change matrix, so
// recorded locations are strictly increasing with gaps of at least n0.
class OnlinePipeline {
 public:
  explicit OnlinePipeline(PipelineConfig config)
      : config_(config), detector_(config.detector) {
    config_.validate();
  }

  const PipelineConfig& config() const { return config_; }
  const PipelineState& state() const { return state_; }

  StepEvent step(const Eigen::VectorXd& x) {
    if (state_.omega_hat && x.size() != state_.omega_hat->dim()) {
      throw std::invalid_argument("OnlinePipeline: dimension mismatch");
    }
    if (!state_.history.empty() && x.size() != state_.history.front().size()) {
      throw std::invalid_argument("OnlinePipeline: dimension mismatch");
    }
    state_.t += 1;
    StepEvent event;
    event.t = state_.t;
    event.mode = state_.mode;

    state_.history.push_back(x);
    if (state_.mode == PipelineMode::kMonitor) {
      monitor_step(x, event);
    } else if (static_cast<long>(state_.history.size()) >= config_.n0) {
      finish_burn_in(event);
    }
    return event;
  }

 private:
  Eigen::MatrixXd history_matrix() const {
    const long n = static_cast<long>(state_.history.size());
    Eigen::MatrixXd m(n, state_.history.front().size());
    for (long i = 0; i < n; ++i) m.row(i) = state_.history[static_cast<std::size_t>(i)];
    return m;
  }

  // Full model selection on the current regime history: pinned tau0 if
  // configured, else the configured selection rule over the grid.
  void run_selection(const Eigen::MatrixXd& samples) {
    if (config_.fixed_tau0) {
      const double tau = tau_from_tau0(*config_.fixed_tau0,
                                       static_cast<int>(samples.cols()),
                                       samples.rows());
      const Eigen::MatrixXd* warm =
          state_.omega_hat ? &state_.omega_hat->matrix() : nullptr;
      GlassoSolution sol =
          penalized_precision(sample_covariance(samples), tau, config_.glasso_tol,
                              config_.glasso_max_iter, warm);
      state_.omega_hat = std::move(sol.omega_hat);
      state_.tau0 = *config_.fixed_tau0;
    } else if (config_.selection == SelectionRule::kBic) {
      BicSelection sel = bic_select(samples, config_.bic_grid, config_.glasso_tol,
                                    config_.glasso_max_iter);
      state_.omega_hat = sel.solution.omega_hat;
      state_.tau0 = sel.tau0_star;
    } else {
      CalibratedSelection sel = calibrated_select(
          samples, config_.bic_grid, config_.glasso_tol, config_.glasso_max_iter);
      state_.omega_hat = sel.solution.omega_hat;
      state_.tau0 = sel.tau0_star;
    }
  }

  void finish_burn_in(StepEvent& event) {
    try {
      run_selection(history_matrix());
      event.refit_performed = true;
      state_.mode = PipelineMode::kMonitor;
      state_.b = 0;
      state_.update_count = 0;
      state_.consecutive_flags = 0;
      detector_.set_matrix(*state_.omega_hat);
      detector_.reset_window();
    } catch (const std::exception& e) {
      // Stay in burn-in and retry with one more sample; never drop the stream.
      event.refit_performed = false;
      event.note = std::string("burn-in estimation failed: ") + e.what();
    }
  }

  void monitor_step(const Eigen::VectorXd& x, StepEvent& event) {
    const std::optional<TestResult> result = detector_.push(x);
    if (!result) return;  // window still refilling
    event.statistic = result->t_stat;
    event.flagged = result->flagged;

    if (result->flagged) {
      if (state_.consecutive_flags == 0) {
        state_.run_first_window_start = state_.t - config_.detector.w + 1;
      }
      state_.consecutive_flags += 1;
      if (state_.consecutive_flags >= config_.iota) {
        confirm_alarm(event);
      }
      return;
    }

    state_.consecutive_flags = 0;
    state_.b += 1;
    if (state_.b >= config_.batch) {
      state_.b = 0;
      refit(event);
    }
  }

  void confirm_alarm(StepEvent& event) {
    event.alarm_confirmed = true;
    state_.t_hat_last = state_.run_first_window_start;
    state_.detected.push_back(state_.t_hat_last);
    state_.history.clear();
    state_.consecutive_flags = 0;
    state_.b = 0;
    state_.update_count = 0;
    state_.tau0 = std::numeric_limits<double>::quiet_NaN();
    detector_.reset_window();
    state_.mode = PipelineMode::kPostAlarmBurnIn;
  }

  void refit(StepEvent& event) {
    state_.update_count += 1;
    try {
      const Eigen::MatrixXd samples = history_matrix();
      const bool full_selection =
          !config_.fixed_tau0 && state_.update_count % config_.kappa == 0;
      if (full_selection) {
        run_selection(samples);
      } else {
        // plain rescaled refit, warm-started from the current estimate
        const Eigen::MatrixXd warm = state_.omega_hat->matrix();
        MinibatchRefit result = minibatch_refit(
            samples, /*kappa_counter=*/1, /*kappa=*/2, state_.tau0, &warm,
            config_.glasso_tol, config_.glasso_max_iter, config_.bic_grid);
        state_.omega_hat = result.solution.omega_hat;
      }
      detector_.set_matrix(*state_.omega_hat);  // window kept, cache rebuilt
      event.refit_performed = true;
    } catch (const std::exception& e) {
      // Keep the previous estimate and keep monitoring.
      event.refit_performed = false;
      event.note = std::string("refit failed: ") + e.what();
    }
  }

  PipelineConfig config_;
  PipelineState state_;
  StreamingDetector detector_;
};

struct RunResult {
  std::vector<long> detected;
  std::vector<StepEvent> trace;
};

// Folds the pipeline over a full stream (rows are samples). Deterministic:
// the pipeline itself draws no randomness.
inline RunResult run(const Eigen::MatrixXd& stream, const PipelineConfig& config) {
  if (stream.rows() < 1) throw std::invalid_argument("run: empty stream");
  OnlinePipeline pipeline(config);
  RunResult out;
  out.trace.reserve(static_cast<std::size_t>(stream.rows()));
  for (long t = 0; t < stream.rows(); ++t) {
    out.trace.push_back(pipeline.step(stream.row(t).transpose()));
  }
  out.detected = pipeline.state().detected;
  return out;
}

// Advisory check that the configured change spacing leaves room to re-estimate
// the precision matrix between changes. The constant in the bound
// p * d_max * log^2(p) * max(w, log p) is unknowable in practice, so this
// warns (with C = 1) and never fails.
inline std::optional<std::string> check_separation(const PipelineConfig& config,
                                                   int p, int d_max) {
  if (!config.separation_guard) return std::nullopt;
  const double logp = std::log(static_cast<double>(p));
  const double required = static_cast<double>(p) * d_max * logp * logp *
                          std::max(static_cast<double>(config.detector.w), logp);
  if (static_cast<double>(*config.separation_guard) < required) {
    return "configured change spacing " + std::to_string(*config.separation_guard) +
           " is below the advisory re-estimation bound " +
           std::to_string(static_cast<long>(required)) +
           "; estimated statistics may be biased near changes";
  }
  return std::nullopt;
}

}  // namespace ggmwatch
