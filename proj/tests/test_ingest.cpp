#include "ggmwatch/ingest.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "ggmwatch/io.hpp"

using namespace ggmwatch;

namespace {

class TempDir {
 public:
  TempDir() {
    path_ = std::filesystem::temp_directory_path() /
            ("ggmwatch_test_" + std::to_string(::getpid()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

}  // namespace

TEST(LogReturns, ClosedFormsAndErrors) {
  Eigen::MatrixXd constant(4, 2);
  constant.setConstant(42.0);
  EXPECT_EQ(log_returns(constant).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(log_returns(constant).rows(), 3);

  Eigen::MatrixXd two(2, 1);
  two << 100.0, 110.0;
  EXPECT_NEAR(log_returns(two)(0, 0), 0.0953102, 1e-7);

  Eigen::MatrixXd bad(2, 1);
  bad << 100.0, -1.0;
  EXPECT_THROW(log_returns(bad), std::invalid_argument);
  EXPECT_THROW(log_returns(two.topRows(1)), std::invalid_argument);

  // centering removes the column means
  Eigen::MatrixXd drift(50, 1);
  for (int i = 0; i < 50; ++i) drift(i, 0) = 100.0 * std::exp(0.01 * i);
  const Eigen::MatrixXd centered = log_returns(drift, true);
  EXPECT_NEAR(centered.col(0).mean(), 0.0, 1e-14);
}

TEST(VolatilityProxy, WindowsAndBruteForce) {
  Eigen::MatrixXd flat(10, 2);
  flat.setConstant(0.5);
  const Eigen::MatrixXd quiet = volatility_proxy(flat, 3);
  EXPECT_EQ(quiet.rows(), 7);
  EXPECT_NEAR(quiet.cwiseAbs().maxCoeff(), 0.0, 1e-15);

  // alternating +-a over a window of w+1 points: sample sd = a sqrt((w+1)/w)
  const int w = 5;
  const double a = 0.3;
  Eigen::MatrixXd alternating(12, 1);
  for (int i = 0; i < 12; ++i) alternating(i, 0) = (i % 2 == 0 ? a : -a);
  const Eigen::MatrixXd vol = volatility_proxy(alternating, w);
  for (long t = 0; t < vol.rows(); ++t) {
    EXPECT_NEAR(vol(t, 0), a * std::sqrt((w + 1.0) / w), 1e-12);
  }

  // brute-force recomputation on random data
  Rng rng(808);
  Eigen::MatrixXd noise(40, 3);
  for (long i = 0; i < noise.size(); ++i) noise(i) = rng.gaussian();
  const Eigen::MatrixXd fast = volatility_proxy(noise, 7);
  for (long t = 0; t < fast.rows(); ++t) {
    for (int j = 0; j < 3; ++j) {
      double mean = 0.0;
      for (int k = 0; k <= 7; ++k) mean += noise(t + k, j);
      mean /= 8.0;
      double ss = 0.0;
      for (int k = 0; k <= 7; ++k) ss += std::pow(noise(t + k, j) - mean, 2);
      EXPECT_NEAR(fast(t, j), std::sqrt(ss / 7.0), 1e-12);
    }
  }
  EXPECT_THROW(volatility_proxy(noise, 40), std::invalid_argument);

  const Eigen::VectorXd index = cross_sectional_mean(fast);
  EXPECT_EQ(index.size(), fast.rows());
  EXPECT_NEAR(index[0], fast.row(0).mean(), 1e-15);
}

TEST(PricePanel, LoadCleansAndValidates) {
  TempDir dir;
  const std::string path = dir.file("prices.csv");
  write_file(path,
             "date,AAA,BBB,CCC\n"
             "2020-01-01,10,20,30\n"
             "2020-01-02,11,,31\n"     // missing cell -> dropped
             "2020-01-03,12,22,32\n"
             "2020-01-04,13,NA,33\n"   // NA -> dropped
             "2020-01-05,14,24,34\n");
  const PanelLoadResult loaded = load_price_panel(path);
  EXPECT_EQ(loaded.dropped_rows, 2);
  EXPECT_EQ(loaded.panel.tickers, (std::vector<std::string>{"AAA", "BBB", "CCC"}));
  EXPECT_EQ(loaded.panel.prices.rows(), 3);
  EXPECT_EQ(loaded.panel.dates.front(), "2020-01-01");
  EXPECT_DOUBLE_EQ(loaded.panel.prices(2, 1), 24.0);

  const std::string no_dates = dir.file("no_dates.csv");
  write_file(no_dates, "X,Y\n1,2\n3,4\n");
  const PanelLoadResult plain = load_price_panel(no_dates);
  EXPECT_TRUE(plain.panel.dates.empty());
  EXPECT_EQ(plain.panel.prices.rows(), 2);

  const std::string unsorted = dir.file("unsorted.csv");
  write_file(unsorted, "date,X\n2020-01-02,1\n2020-01-01,2\n");
  EXPECT_THROW(load_price_panel(unsorted), std::runtime_error);

  const std::string negative = dir.file("negative.csv");
  write_file(negative, "date,X\n2020-01-01,1\n2020-01-02,-2\n");
  EXPECT_THROW(load_price_panel(negative), std::runtime_error);
}

TEST(PricePanel, SubsetPreservesColumnOrder) {
  PricePanel panel;
  panel.tickers = {"A", "B", "C", "D", "E", "F"};
  panel.prices.resize(3, 6);
  for (int j = 0; j < 6; ++j) panel.prices.col(j).setConstant(j + 1.0);
  const PricePanel sub = subset_panel(panel, 3, 99);
  ASSERT_EQ(sub.tickers.size(), 3u);
  // chosen tickers appear in original relative order with matching columns
  for (std::size_t j = 1; j < sub.tickers.size(); ++j) {
    EXPECT_LT(sub.tickers[j - 1], sub.tickers[j]);
  }
  for (std::size_t j = 0; j < sub.tickers.size(); ++j) {
    const double expected = sub.tickers[j][0] - 'A' + 1.0;
    EXPECT_DOUBLE_EQ(sub.prices(0, static_cast<long>(j)), expected);
  }
  EXPECT_THROW(subset_panel(panel, 7, 1), std::invalid_argument);
}

TEST(MatrixIo, CsvRoundTripIsLossless) {
  TempDir dir;
  Rng rng(313);
  Eigen::MatrixXd m(7, 4);
  for (long i = 0; i < m.size(); ++i) m(i) = rng.gaussian() * std::pow(10.0, int(rng.below(7)) - 3);
  const std::string path = dir.file("m.csv");
  write_matrix_csv(path, m);
  const Eigen::MatrixXd back = read_matrix_csv(path);
  ASSERT_EQ(back.rows(), m.rows());
  ASSERT_EQ(back.cols(), m.cols());
  EXPECT_EQ((back - m).cwiseAbs().maxCoeff(), 0.0);  // 17 digits: bit round trip

  const std::vector<std::string> header{"a", "b", "c", "d"};
  const std::string with_header = dir.file("h.csv");
  write_matrix_csv(with_header, m, &header);
  EXPECT_EQ((read_matrix_csv(with_header) - m).cwiseAbs().maxCoeff(), 0.0);
}

TEST(MatrixIo, BinaryRoundTripAndHeaderChecks) {
  TempDir dir;
  Rng rng(314);
  Eigen::MatrixXd m(5, 9);
  for (long i = 0; i < m.size(); ++i) m(i) = rng.gaussian();
  const std::string path = dir.file("m.bin");
  write_matrix_binary(path, m);
  const Eigen::MatrixXd back = read_matrix_binary(path);
  EXPECT_EQ((back - m).cwiseAbs().maxCoeff(), 0.0);

  write_file(dir.file("junk.bin"), "nope");
  EXPECT_THROW(read_matrix_binary(dir.file("junk.bin")), std::runtime_error);
}

TEST(IniFile, SectionsCommentsAndLookup) {
  TempDir dir;
  const std::string path = dir.file("config.ini");
  write_file(path,
             "# top comment\n"
             "[detector]\n"
             "w = 22\n"
             "pi0 = 0.05\n"
             "; another comment\n"
             "[pipeline]\n"
             "n0 = 200\n"
             "B = 10\n");
  const IniFile ini = IniFile::load(path);
  EXPECT_EQ(ini.get("detector.w").value(), "22");
  EXPECT_EQ(ini.get("pipeline.B").value(), "10");
  EXPECT_FALSE(ini.get("pipeline.missing").has_value());

  write_file(dir.file("bad.ini"), "[x]\nnot a pair\n");
  EXPECT_THROW(IniFile::load(dir.file("bad.ini")), std::runtime_error);
}

TEST(TraceCsv, AbsentStatisticsWrittenAsNa) {
  TempDir dir;
  std::vector<StepEvent> trace(2);
  trace[0].t = 1;
  trace[0].mode = PipelineMode::kBurnIn;
  trace[1].t = 2;
  trace[1].mode = PipelineMode::kMonitor;
  trace[1].statistic = 1.25;
  trace[1].flagged = true;
  const std::string path = dir.file("trace.csv");
  write_trace_csv(path, trace);
  std::ifstream in(path);
  std::string header, row1, row2;
  std::getline(in, header);
  std::getline(in, row1);
  std::getline(in, row2);
  EXPECT_EQ(header, "t,mode,statistic,flagged,alarm_confirmed,refit_performed");
  EXPECT_EQ(row1, "1,burnin,NA,0,0,0");
  EXPECT_EQ(row2, "2,monitor,1.25,1,0,0");
}
