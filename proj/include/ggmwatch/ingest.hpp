#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ggmwatch/io.hpp"
#include "ggmwatch/random.hpp"

namespace ggmwatch {

// Price panel: tickers in input order, strictly increasing dates (when a date
// column is present), strictly positive prices, no missing cells. Rows with
// any unparsable or missing cell are dropped at load time and counted.
struct PricePanel {
  std::vector<std::string> tickers;
  std::vector<std::string> dates;  // empty when the input has no date column
  Eigen::MatrixXd prices;
};

struct PanelLoadResult {
  PricePanel panel;
  long dropped_rows = 0;
};

// CSV with a mandatory header row; an optional first column holds ISO-8601
// dates (detected by the first data cell failing numeric parse or the header
// cell reading "date"). Column order is preserved exactly.
inline PanelLoadResult load_price_panel(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_price_panel: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error("load_price_panel: empty file " + path);
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> header = detail::split_csv_line(line);
  if (header.size() < 1) throw std::runtime_error("load_price_panel: bad header");

  std::vector<std::vector<std::string>> raw_rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    raw_rows.push_back(detail::split_csv_line(line));
  }
  if (raw_rows.empty()) throw std::runtime_error("load_price_panel: no data rows");

  std::string first_header = header.front();
  std::transform(first_header.begin(), first_header.end(), first_header.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  double probe = 0.0;
  const bool has_dates =
      first_header == "date" || !detail::parse_double(raw_rows.front().front(), &probe);
  const std::size_t first_col = has_dates ? 1 : 0;
  if (header.size() <= first_col) {
    throw std::runtime_error("load_price_panel: no ticker columns");
  }

  PanelLoadResult out;
  out.panel.tickers.assign(header.begin() + static_cast<long>(first_col),
                           header.end());
  const std::size_t p = out.panel.tickers.size();

  std::vector<std::vector<double>> kept;
  for (const auto& row : raw_rows) {
    if (row.size() != p + first_col) {
      ++out.dropped_rows;
      continue;
    }
    std::vector<double> values(p);
    bool good = true;
    for (std::size_t j = 0; j < p; ++j) {
      const std::string& cell = row[j + first_col];
      if (cell.empty() || cell == "NA" || cell == "NaN" || cell == "nan" ||
          !detail::parse_double(cell, &values[j]) || !std::isfinite(values[j])) {
        good = false;
        break;
      }
    }
    if (!good) {
      ++out.dropped_rows;
      continue;
    }
    for (const double v : values) {
      if (!(v > 0.0)) {
        throw std::runtime_error("load_price_panel: nonpositive price in " + path);
      }
    }
    if (has_dates) out.panel.dates.push_back(row.front());
    kept.push_back(std::move(values));
  }
  if (kept.size() < 2) {
    throw std::runtime_error("load_price_panel: fewer than two clean rows");
  }
  for (std::size_t i = 1; i < out.panel.dates.size(); ++i) {
    if (!(out.panel.dates[i - 1] < out.panel.dates[i])) {
      throw std::runtime_error("load_price_panel: dates not strictly increasing");
    }
  }
  out.panel.prices.resize(static_cast<long>(kept.size()), static_cast<long>(p));
  for (std::size_t i = 0; i < kept.size(); ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      out.panel.prices(static_cast<long>(i), static_cast<long>(j)) = kept[i][j];
    }
  }
  return out;
}

// X[t, s] = log(P[t+1, s] / P[t, s]); output has one fewer row than prices.
inline Eigen::MatrixXd log_returns(const Eigen::MatrixXd& prices,
                                   bool center = false) {
  if (prices.rows() < 2) throw std::invalid_argument("log_returns: need T >= 2");
  if ((prices.array() <= 0.0).any()) {
    throw std::invalid_argument("log_returns: prices must be strictly positive");
  }
  Eigen::MatrixXd returns =
      (prices.bottomRows(prices.rows() - 1).array() /
       prices.topRows(prices.rows() - 1).array())
          .log();
  if (center) {
    returns.rowwise() -= returns.colwise().mean();
  }
  return returns;
}

inline Eigen::MatrixXd log_returns(const PricePanel& panel, bool center = false) {
  return log_returns(panel.prices, center);
}

// Rolling per-column sample standard deviation over windows of w+1 points:
// V[t, s] = sd(X[t, s], ..., X[t+w, s]); output has T - w rows.
inline Eigen::MatrixXd volatility_proxy(const Eigen::MatrixXd& returns, int w) {
  if (w < 1) throw std::invalid_argument("volatility_proxy: w must be >= 1");
  const long t_len = returns.rows();
  if (t_len <= w) {
    throw std::invalid_argument("volatility_proxy: window exceeds series length");
  }
  const long out_len = t_len - w;
  const double points = static_cast<double>(w + 1);
  Eigen::MatrixXd out(out_len, returns.cols());
  for (long t = 0; t < out_len; ++t) {
    const auto block = returns.middleRows(t, w + 1);
    const Eigen::RowVectorXd mean = block.colwise().mean();
    const Eigen::RowVectorXd ss =
        (block.rowwise() - mean).array().square().colwise().sum();
    out.row(t) = (ss / (points - 1.0)).array().sqrt();
  }
  return out;
}

// Cross-sectional average of the rolling volatilities: the panel-wide
// "return volatility index" series.
inline Eigen::VectorXd cross_sectional_mean(const Eigen::MatrixXd& m) {
  return m.rowwise().mean();
}

// Random sub-panel of `count` tickers; chosen indices are re-sorted so the
// relative input column order is preserved.
inline PricePanel subset_panel(const PricePanel& panel, int count,
                               std::uint64_t seed) {
  const int p = static_cast<int>(panel.tickers.size());
  if (count < 1 || count > p) {
    throw std::invalid_argument("subset_panel: count out of range");
  }
  Rng rng(seed);
  std::vector<int> idx = sample_without_replacement(p, count, rng);
  std::sort(idx.begin(), idx.end());
  PricePanel out;
  out.dates = panel.dates;
  out.prices.resize(panel.prices.rows(), count);
  for (int j = 0; j < count; ++j) {
    out.tickers.push_back(panel.tickers[static_cast<std::size_t>(idx[j])]);
    out.prices.col(j) = panel.prices.col(idx[j]);
  }
  return out;
}

}  // namespace ggmwatch
