#pragma once

#include <deque>
#include <optional>
#include <stdexcept>

#include "ggmwatch/precision.hpp"
#include "ggmwatch/special_functions.hpp"

namespace ggmwatch {

// Raised when a window score leaves the barrier domain (y_s <= 0). With real
// data this only happens for degenerate inputs such as all-zero observations,
// so it signals corruption rather than a statistical event.
class BarrierDomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DetectorConfig {
  int w = 15;          // detection delay window
  double pi0 = 0.01;   // target per-test false alarm rate
  double zeta = 0.0;   // critical value

  static DetectorConfig make(int w, double pi0) {
    if (w < 1) throw std::invalid_argument("DetectorConfig: w must be >= 1");
    if (!(pi0 > 0.0) || !(pi0 < 1.0)) {
      throw std::invalid_argument("DetectorConfig: pi0 must lie in (0, 1)");
    }
    DetectorConfig cfg;
    cfg.w = w;
    cfg.pi0 = pi0;
    cfg.zeta = gaussian_upper_quantile(pi0);
    return cfg;
  }
};

// Sliding window of the most recent w observations, oldest first. Statistics
// are only defined once exactly w vectors are present.
class WindowBuffer {
 public:
  explicit WindowBuffer(int capacity) : capacity_(capacity) {
    if (capacity < 1) throw std::invalid_argument("WindowBuffer: capacity must be >= 1");
  }

  void push(Eigen::VectorXd x) {
    if (!samples_.empty() &&
        samples_.front().size() != x.size()) {
      throw std::invalid_argument("WindowBuffer: dimension mismatch");
    }
    samples_.push_back(std::move(x));
    if (static_cast<int>(samples_.size()) > capacity_) samples_.pop_front();
  }

  bool full() const { return static_cast<int>(samples_.size()) == capacity_; }
  int size() const { return static_cast<int>(samples_.size()); }
  int capacity() const { return capacity_; }
  void clear() { samples_.clear(); }
  const std::deque<Eigen::VectorXd>& samples() const { return samples_; }

 private:
  int capacity_;
  std::deque<Eigen::VectorXd> samples_;
};

struct TestResult {
  double t_stat = 0.0;
  bool flagged = false;
  Eigen::VectorXd y_values;
  double denominator = 0.0;
};

// Per-node window scores: y[s] = (1/(w * Omega_ss)) * sum_r <x_r, Omega_col_s>^2.
// Under a stationary regime w*y[s] is chi-square with w degrees of freedom.
inline Eigen::VectorXd y_stats(const PrecisionMatrix& omega,
                               const WindowBuffer& window) {
  if (!window.full()) {
    throw std::invalid_argument("y_stats: window not full");
  }
  const int p = omega.dim();
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(p);
  for (const Eigen::VectorXd& x : window.samples()) {
    if (x.size() != p) throw std::invalid_argument("y_stats: dimension mismatch");
    acc += (omega.matrix() * x).array().square().matrix();
  }
  const double w = static_cast<double>(window.capacity());
  return acc.array() / (w * omega.matrix().diagonal().array());
}

// Standard deviation scale of sum_s f(y_s) under the null:
// g2(w) * sqrt(sum_ij h(R_ij)); with the r^4 proxy the square root is the
// squared entrywise 4-norm of R. The diagonal alone contributes p, so the
// value is always >= g2(w) * sqrt(p) > 0.
inline double barrier_denominator(const PartialCorrelationMatrix& r, int w) {
  return barrier_null_sd(w) * std::sqrt(r.quartic_sum);
}

// T = sum_s [f(y_s) - g1(w)] / denominator. The numerator uses compensated
// summation so thousand-node sums of near-cancelling terms stay stable.
inline double t_statistic(const Eigen::VectorXd& y,
                          const PartialCorrelationMatrix& r, int w) {
  if (y.size() != r.dim()) {
    throw std::invalid_argument("t_statistic: dimension mismatch");
  }
  const double g1 = barrier_null_mean(w);
  double sum = 0.0;
  double carry = 0.0;
  for (Eigen::Index s = 0; s < y.size(); ++s) {
    if (!(y[s] > 0.0)) {
      throw BarrierDomainError("t_statistic: nonpositive window score");
    }
    const double term = barrier(y[s]) - g1 - carry;
    const double next = sum + term;
    carry = (next - sum) - term;
    sum = next;
  }
  return sum / barrier_denominator(r, w);
}

inline bool decide(double t_stat, const DetectorConfig& config) {
  if (!std::isfinite(t_stat)) {
    throw std::invalid_argument("decide: statistic must be finite");
  }
  return t_stat >= config.zeta;  // boundary included
}

// One full test: identical computation whether `omega` is the true pre-change
// matrix or a plug-in estimate.
inline TestResult test_step(const PrecisionMatrix& omega, const WindowBuffer& window,
                            const DetectorConfig& config) {
  TestResult out;
  out.y_values = y_stats(omega, window);
  const PartialCorrelationMatrix r = partial_correlation(omega);
  out.denominator = barrier_denominator(r, config.w);
  out.t_stat = t_statistic(out.y_values, r, config.w);
  out.flagged = decide(out.t_stat, config);
  return out;
}

// Streaming evaluator over a sample-at-a-time feed. Caches the squared
// projections (Omega x)_s^2 of each buffered sample so a step costs O(p^2)
// instead of O(w p^2); summation order matches y_stats, so results are
// bit-identical to the batch path. set_matrix() rebuilds the cache, which is
// how mini-batch re-estimates swap in without dropping the window.
class StreamingDetector {
 public:
  explicit StreamingDetector(DetectorConfig config) : config_(config) {}

  const DetectorConfig& config() const { return config_; }

  void set_matrix(const PrecisionMatrix& omega) {
    omega_ = omega;
    rmat_ = partial_correlation(omega);
    denominator_ = barrier_denominator(rmat_, config_.w);
    diag_ = omega.matrix().diagonal();
    for (std::size_t i = 0; i < raw_.size(); ++i) {
      squared_[i] = (omega.matrix() * raw_[i]).array().square().matrix();
    }
  }

  bool has_matrix() const { return omega_.has_value(); }
  bool window_full() const {
    return static_cast<int>(raw_.size()) == config_.w;
  }

  void reset_window() {
    raw_.clear();
    squared_.clear();
  }

  std::optional<TestResult> push(const Eigen::VectorXd& x) {
    if (!omega_) throw std::logic_error("StreamingDetector: matrix not set");
    if (x.size() != omega_->dim()) {
      throw std::invalid_argument("StreamingDetector: dimension mismatch");
    }
    raw_.push_back(x);
    squared_.push_back((omega_->matrix() * x).array().square().matrix());
    if (static_cast<int>(raw_.size()) > config_.w) {
      raw_.pop_front();
      squared_.pop_front();
    }
    if (!window_full()) return std::nullopt;

    const int p = omega_->dim();
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(p);
    for (const Eigen::VectorXd& sq : squared_) acc += sq;

    TestResult out;
    out.y_values = acc.array() / (static_cast<double>(config_.w) * diag_.array());
    out.denominator = denominator_;
    out.t_stat = t_statistic(out.y_values, rmat_, config_.w);
    out.flagged = decide(out.t_stat, config_);
    return out;
  }

 private:
  DetectorConfig config_;
  std::optional<PrecisionMatrix> omega_;
  PartialCorrelationMatrix rmat_;
  double denominator_ = 0.0;
  Eigen::VectorXd diag_;
  std::deque<Eigen::VectorXd> raw_;
  std::deque<Eigen::VectorXd> squared_;
};

}  // namespace ggmwatch
