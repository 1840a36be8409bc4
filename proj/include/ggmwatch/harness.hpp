#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ggmwatch/pipeline.hpp"
#include "ggmwatch/scenarios.hpp"

namespace ggmwatch {

// Linear-interpolation quantile (R type 7). v is consumed by value.
inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw std::invalid_argument("quantile: empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("quantile: q in [0,1]");
  std::sort(v.begin(), v.end());
  const double h = q * (static_cast<double>(v.size()) - 1.0);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - std::floor(h)) * (v[hi] - v[lo]);
}

inline double median(const std::vector<double>& v) { return quantile(v, 0.5); }

inline double interquartile_range(const std::vector<double>& v) {
  return quantile(v, 0.75) - quantile(v, 0.25);
}

// Kolmogorov-Smirnov distance between the empirical distribution of `samples`
// and the standard normal.
inline double ks_distance_normal(std::vector<double> samples) {
  if (samples.empty()) throw std::invalid_argument("ks_distance_normal: empty sample");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double cdf = gaussian_cdf(samples[i]);
    d = std::max(d, std::abs(cdf - static_cast<double>(i) / n));
    d = std::max(d, std::abs(static_cast<double>(i + 1) / n - cdf));
  }
  return d;
}

// Empirical error rates from a per-test flag series. flags[i] is the decision
// of the test whose window covers samples {t+1, ..., t+w} for t = i+1, so the
// series has length T - w. t_star is the last pre-change sample index:
//   pi0_hat = mean flag over t in [1, t_star - w]       (fully pre-change windows)
//   pi1_hat = mean non-flag over t in [t_star, T - w]   (fully post-change windows)
struct ErrorRates {
  double pi0_hat = 0.0;
  double pi1_hat = 0.0;
};

inline ErrorRates estimate_error_rates(const std::vector<std::uint8_t>& flags,
                                       long t_star, int w) {
  const long tests = static_cast<long>(flags.size());
  const long horizon = tests + w;  // T
  if (!(w < t_star && t_star < horizon - w)) {
    throw std::invalid_argument("estimate_error_rates: need w < t_star < T - w");
  }
  ErrorRates out;
  long n0 = 0;
  for (long t = 1; t <= t_star - w; ++t) {
    out.pi0_hat += flags[static_cast<std::size_t>(t - 1)];
    ++n0;
  }
  out.pi0_hat /= static_cast<double>(n0);
  long n1 = 0;
  for (long t = t_star; t <= horizon - w; ++t) {
    out.pi1_hat += 1.0 - flags[static_cast<std::size_t>(t - 1)];
    ++n1;
  }
  out.pi1_hat /= static_cast<double>(n1);
  return out;
}

// Greedy one-to-one matching of detections to the nearest preceding true
// change within the same segment. The first detection landing in a change's
// segment claims it; every other detection is a false alarm; unclaimed
// changes are misses. Delays are detection - change for the matched pairs.
struct DelayStats {
  double median = std::numeric_limits<double>::quiet_NaN();
  double iqr = std::numeric_limits<double>::quiet_NaN();
  int misses = 0;
  int false_alarms = 0;
  std::vector<long> delays;
};

inline DelayStats delay_stats(std::vector<long> detected,
                              std::vector<long> true_changes, long horizon) {
  std::sort(detected.begin(), detected.end());
  std::sort(true_changes.begin(), true_changes.end());
  DelayStats out;
  std::vector<bool> claimed(true_changes.size(), false);
  for (const long det : detected) {
    std::optional<std::size_t> segment;
    for (std::size_t k = 0; k < true_changes.size(); ++k) {
      const long seg_end =
          (k + 1 < true_changes.size()) ? true_changes[k + 1] : horizon + 1;
      if (det >= true_changes[k] && det < seg_end) {
        segment = k;
        break;
      }
    }
    if (segment && !claimed[*segment]) {
      claimed[*segment] = true;
      out.delays.push_back(det - true_changes[*segment]);
    } else {
      out.false_alarms += 1;
    }
  }
  for (const bool c : claimed) {
    if (!c) out.misses += 1;
  }
  if (!out.delays.empty()) {
    std::vector<double> d(out.delays.begin(), out.delays.end());
    out.median = median(d);
    out.iqr = interquartile_range(d);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Null distribution of the test statistic.

struct NullDistConfig {
  int p = 400;
  int d_max = 5;
  int w = 10;
  int reps = 2000;
  std::uint64_t seed = 1;
  bool estimated = false;  // plug-in variant: estimate the matrix first
  long burn_in = 0;        // samples for the plug-in estimate; 0 = ceil(p*d_max*log p)
  int grid = 20;
  bool use_bic = false;    // plug-in selection rule; default matches the pipeline
};

struct NullDistResult {
  std::vector<double> t_samples;
  double mean = 0.0;
  double sd = 0.0;
  double ks = 0.0;
  long burn_in_used = 0;
  nlohmann::json config_echo;
};

inline NullDistResult null_distribution_experiment(const NullDistConfig& cfg) {
  if (cfg.reps < 100) {
    throw std::invalid_argument("null_distribution_experiment: need reps >= 100");
  }
  const PrecisionMatrix truth = clt_demo_precision(cfg.p, cfg.d_max,
                                                   derive_seed(cfg.seed, 1));
  NullDistResult out;
  std::optional<PrecisionMatrix> plug_in;
  if (cfg.estimated) {
    out.burn_in_used =
        cfg.burn_in > 0
            ? cfg.burn_in
            : static_cast<long>(std::ceil(static_cast<double>(cfg.p) * cfg.d_max *
                                          std::log(static_cast<double>(cfg.p))));
    const Eigen::MatrixXd warmup =
        sample_ggm(truth, out.burn_in_used, derive_seed(cfg.seed, 2));
    if (cfg.use_bic) {
      plug_in = bic_select(warmup, cfg.grid).solution.omega_hat;
    } else {
      plug_in = calibrated_select(warmup, cfg.grid).solution.omega_hat;
    }
  }
  const PrecisionMatrix& used = plug_in ? *plug_in : truth;
  const PartialCorrelationMatrix rmat = partial_correlation(used);
  const Eigen::VectorXd diag = used.matrix().diagonal();

  out.t_samples.reserve(static_cast<std::size_t>(cfg.reps));
  for (int i = 0; i < cfg.reps; ++i) {
    // data always follows the true matrix; only the statistic sees `used`
    const Eigen::MatrixXd window =
        sample_ggm(truth, cfg.w, cfg.seed ^ static_cast<std::uint64_t>(i));
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(cfg.p);
    for (int r = 0; r < cfg.w; ++r) {
      acc += (used.matrix() * window.row(r).transpose()).array().square().matrix();
    }
    const Eigen::VectorXd y =
        acc.array() / (static_cast<double>(cfg.w) * diag.array());
    out.t_samples.push_back(t_statistic(y, rmat, cfg.w));
  }

  double sum = 0.0;
  for (const double t : out.t_samples) sum += t;
  out.mean = sum / static_cast<double>(cfg.reps);
  double ss = 0.0;
  for (const double t : out.t_samples) ss += (t - out.mean) * (t - out.mean);
  out.sd = std::sqrt(ss / static_cast<double>(cfg.reps - 1));
  out.ks = ks_distance_normal(out.t_samples);
  out.config_echo = {{"p", cfg.p},       {"d_max", cfg.d_max},
                     {"w", cfg.w},       {"reps", cfg.reps},
                     {"seed", cfg.seed}, {"estimated", cfg.estimated},
                     {"burn_in", out.burn_in_used}};
  return out;
}

// ---------------------------------------------------------------------------
// Power of the known-matrix detector over a single-change scenario.

struct ExperimentReport {
  double pi0_hat = 0.0;
  double pi1_hat = 0.0;
  double false_alarm_count = 0.0;  // average pre-change flags per replicate
  std::vector<long> delays;        // filled by delay-style experiments only
  std::vector<double> per_replicate_pi0;
  std::vector<double> per_replicate_pi1;
  nlohmann::json config_echo;
};

// Runs the fixed pre-change-matrix detector across the whole stream of each
// replicate (the matrix is never re-estimated, so every post-change test is
// expected to flag) and aggregates the per-replicate error rates. Replicate i
// re-renders the scenario from seed ^ i: fresh network, fresh noise.
inline ExperimentReport power_experiment(const ScenarioSpec& scenario,
                                         const DetectorConfig& detector, int reps,
                                         std::uint64_t seed) {
  if (scenario.segments.size() != 2) {
    throw std::invalid_argument(
        "power_experiment: scenario must contain exactly one change");
  }
  if (reps < 1) throw std::invalid_argument("power_experiment: reps must be >= 1");
  ExperimentReport out;
  for (int i = 0; i < reps; ++i) {
    ScenarioSpec replicate = scenario;
    replicate.seed = seed ^ static_cast<std::uint64_t>(i);
    const RenderedStream stream = render_stream(replicate);
    const long t_star = stream.change_times.front() - 1;  // last pre-change sample

    StreamingDetector det(detector);
    det.set_matrix(stream.segment_matrices.front());
    std::vector<std::uint8_t> flags;
    flags.reserve(static_cast<std::size_t>(stream.data.rows() - detector.w));
    for (long t = 0; t < stream.data.rows(); ++t) {
      const auto result = det.push(stream.data.row(t).transpose());
      if (result) flags.push_back(result->flagged ? 1 : 0);
    }
    const ErrorRates rates = estimate_error_rates(flags, t_star, detector.w);
    out.per_replicate_pi0.push_back(rates.pi0_hat);
    out.per_replicate_pi1.push_back(rates.pi1_hat);
    out.pi0_hat += rates.pi0_hat;
    out.pi1_hat += rates.pi1_hat;
    out.false_alarm_count += rates.pi0_hat * static_cast<double>(t_star - detector.w);
  }
  out.pi0_hat /= static_cast<double>(reps);
  out.pi1_hat /= static_cast<double>(reps);
  out.false_alarm_count /= static_cast<double>(reps);
  out.config_echo = {{"scenario", scenario.to_json()},
                     {"w", detector.w},
                     {"pi0", detector.pi0},
                     {"zeta", detector.zeta},
                     {"reps", reps},
                     {"seed", seed}};
  return out;
}

// ---------------------------------------------------------------------------
// Full-pipeline benchmark: a 10^4-sample stream with three planted changes
// (dense multiplicative, low-rank spectral, fresh random regime), evaluated
// over a grid of pipeline configurations that share replicate streams.

struct BenchProtocol {
  int p = 100;
  int d = 20;
  double lambda0 = 0.1;
  std::vector<long> lengths = {2999, 3000, 3000, 1001};
  double beta_uniform = 0.2;
  int lowrank_r = 50;
  double beta_lowrank = 0.4;
};

inline std::vector<PrecisionMatrix> build_bench_matrices(const BenchProtocol& proto,
                                                         std::uint64_t seed) {
  std::vector<PrecisionMatrix> out;
  out.push_back(random_sparse_precision(proto.p, proto.d, proto.lambda0,
                                        derive_seed(seed, 11), /*normalize=*/true));
  out.push_back(uniform_change(out[0], proto.beta_uniform));
  // spectral change: top r eigenvalues of the current regime scaled by
  // (1 + beta), eigenvectors kept
  out.push_back(lowrank_change(out[1], proto.lowrank_r, proto.beta_lowrank));
  out.push_back(random_sparse_precision(proto.p, proto.d, proto.lambda0,
                                        derive_seed(seed, 12), /*normalize=*/true));
  return out;
}

struct BenchChangeSummary {
  std::string label;
  double median_delay = std::numeric_limits<double>::quiet_NaN();
  double iqr_delay = std::numeric_limits<double>::quiet_NaN();
  int misses = 0;
};

struct BenchRow {
  int n0 = 0;
  int batch = 0;
  int kappa = 0;
  std::vector<BenchChangeSummary> changes;
  double avg_false_alarms = 0.0;
};

struct BenchResult {
  std::vector<BenchRow> rows;
  nlohmann::json config_echo;
};

// Reported delay is the alarm delay: (confirmation arrival index) - c, where
// c is the first sample of the new regime and the confirmation arrival is the
// sample whose processing confirmed the iota-run. This counts every sample
// the detector consumed past the change before raising the alarm (look-ahead
// and confirmation run included).
inline BenchResult pipeline_experiment(const BenchProtocol& proto,
                                       const std::vector<PipelineConfig>& configs,
                                       int reps, std::uint64_t seed) {
  if (configs.empty()) throw std::invalid_argument("pipeline_experiment: no configs");
  if (reps < 1) throw std::invalid_argument("pipeline_experiment: reps must be >= 1");
  const std::vector<std::string> labels = {"uniform", "lowrank", "random"};
  const std::size_t n_changes = proto.lengths.size() - 1;

  // delays[config][change] across replicates
  std::vector<std::vector<std::vector<double>>> delays(
      configs.size(), std::vector<std::vector<double>>(n_changes));
  std::vector<int> misses(configs.size() * n_changes, 0);
  std::vector<double> false_alarms(configs.size(), 0.0);

  long horizon = 0;
  for (const long len : proto.lengths) horizon += len;

  for (int rep = 0; rep < reps; ++rep) {
    const std::uint64_t rep_seed = seed ^ static_cast<std::uint64_t>(rep);
    const std::vector<PrecisionMatrix> matrices =
        build_bench_matrices(proto, rep_seed);
    Eigen::MatrixXd stream(horizon, proto.p);
    std::vector<long> change_times;
    long row = 0;
    for (std::size_t k = 0; k < proto.lengths.size(); ++k) {
      stream.middleRows(row, proto.lengths[k]) =
          sample_ggm(matrices[k], proto.lengths[k], derive_seed(rep_seed, 500 + k));
      row += proto.lengths[k];
      if (k + 1 < proto.lengths.size()) change_times.push_back(row + 1);
    }

    for (std::size_t c = 0; c < configs.size(); ++c) {
      const RunResult result = run(stream, configs[c]);
      std::vector<long> confirmations;
      for (const StepEvent& ev : result.trace) {
        if (ev.alarm_confirmed) confirmations.push_back(ev.t);
      }
      // same one-to-one greedy matching as delay_stats, split per change
      std::vector<bool> claimed(change_times.size(), false);
      for (const long det : confirmations) {
        bool matched = false;
        for (std::size_t k = 0; k < change_times.size(); ++k) {
          const long seg_end =
              (k + 1 < change_times.size()) ? change_times[k + 1] : horizon + 1;
          if (det >= change_times[k] && det < seg_end && !claimed[k]) {
            claimed[k] = true;
            delays[c][k].push_back(static_cast<double>(det - change_times[k]));
            matched = true;
            break;
          }
        }
        if (!matched) false_alarms[c] += 1.0;
      }
      for (std::size_t k = 0; k < change_times.size(); ++k) {
        if (!claimed[k]) misses[c * n_changes + k] += 1;
      }
    }
  }

  BenchResult out;
  for (std::size_t c = 0; c < configs.size(); ++c) {
    BenchRow row;
    row.n0 = configs[c].n0;
    row.batch = configs[c].batch;
    row.kappa = configs[c].kappa;
    for (std::size_t k = 0; k < n_changes; ++k) {
      BenchChangeSummary summary;
      summary.label = k < labels.size() ? labels[k] : "change" + std::to_string(k);
      summary.misses = misses[c * n_changes + k];
      if (!delays[c][k].empty()) {
        summary.median_delay = median(delays[c][k]);
        summary.iqr_delay = interquartile_range(delays[c][k]);
      }
      row.changes.push_back(std::move(summary));
    }
    row.avg_false_alarms = false_alarms[c] / static_cast<double>(reps);
    out.rows.push_back(std::move(row));
  }
  out.config_echo = {{"p", proto.p},
                     {"d", proto.d},
                     {"lambda0", proto.lambda0},
                     {"beta_uniform", proto.beta_uniform},
                     {"lowrank_r", proto.lowrank_r},
                     {"beta_lowrank", proto.beta_lowrank},
                     {"reps", reps},
                     {"seed", seed}};
  return out;
}

}  // namespace ggmwatch
