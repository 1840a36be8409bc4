// Command-line harness around the ggmwatch library: synthetic stream
// generation, online detection, null-distribution and power experiments, the
// full-pipeline benchmark, and price-panel ingestion.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ggmwatch/harness.hpp"
#include "ggmwatch/ingest.hpp"
#include "ggmwatch/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string default_out_dir() {
  const char* env = std::getenv("GGMWATCH_OUT_DIR");
  return env != nullptr && *env != '\0' ? env : ".";
}

fs::path prepare_out_dir(const std::string& out) {
  fs::path dir(out);
  fs::create_directories(dir);
  return dir;
}

// Config-file values fill in any pipeline option the command line left at its
// default; explicit flags always win.
struct PipelineOptions {
  int w = 22;
  double pi0 = 0.05;
  int n0 = 200;
  int batch = 10;
  int kappa = 2;
  int iota = 5;
  std::string selection = "calibrated";  // calibrated | bic
  std::optional<long> guard;

  void apply_ini(const ggmwatch::IniFile& ini, const CLI::App& cmd) {
    auto maybe = [&](const char* flag, const std::string& key, auto& slot) {
      if (cmd.count(flag) == 0) {
        if (const auto v = ini.get(key)) slot = std::stod(*v);
      }
    };
    maybe("--w", "detector.w", w);
    maybe("--pi0", "detector.pi0", pi0);
    maybe("--n0", "pipeline.n0", n0);
    maybe("--batch", "pipeline.B", batch);
    maybe("--kappa", "pipeline.kappa", kappa);
    maybe("--iota", "pipeline.iota", iota);
    if (cmd.count("--selection") == 0) {
      if (const auto v = ini.get("pipeline.selection")) selection = *v;
    }
    if (cmd.count("--guard") == 0) {
      if (const auto v = ini.get("pipeline.separation_guard")) guard = std::stol(*v);
    }
  }

  ggmwatch::PipelineConfig build() const {
    ggmwatch::PipelineConfig cfg;
    cfg.detector = ggmwatch::DetectorConfig::make(w, pi0);
    cfg.n0 = n0;
    cfg.batch = batch;
    cfg.kappa = kappa;
    cfg.iota = iota;
    if (selection == "bic") {
      cfg.selection = ggmwatch::SelectionRule::kBic;
    } else if (selection == "calibrated") {
      cfg.selection = ggmwatch::SelectionRule::kCalibrated;
    } else {
      throw std::invalid_argument("selection must be 'calibrated' or 'bic'");
    }
    cfg.separation_guard = guard;
    cfg.validate();
    return cfg;
  }

  json echo() const {
    json j{{"w", w},     {"pi0", pi0},     {"n0", n0},        {"B", batch},
           {"kappa", kappa}, {"iota", iota}, {"selection", selection}};
    if (guard) j["separation_guard"] = *guard;
    return j;
  }
};

int cmd_simulate(const std::string& spec_path, const std::string& out,
                 bool write_matrices) {
  const ggmwatch::ScenarioSpec spec = ggmwatch::ScenarioSpec::load(spec_path);
  const ggmwatch::RenderedStream stream = ggmwatch::render_stream(spec);
  const fs::path dir = prepare_out_dir(out);
  ggmwatch::write_matrix_csv((dir / "stream.csv").string(), stream.data);
  ggmwatch::write_json_file((dir / "changes.json").string(),
                            json(stream.change_times));
  ggmwatch::write_json_file((dir / "config.json").string(), spec.to_json());
  if (write_matrices) {
    for (std::size_t k = 0; k < stream.segment_matrices.size(); ++k) {
      ggmwatch::write_matrix_csv(
          (dir / ("omega_" + std::to_string(k) + ".csv")).string(),
          stream.segment_matrices[k].matrix());
    }
  }
  std::cout << "wrote " << stream.data.rows() << " samples, "
            << stream.change_times.size() << " change(s) to " << dir.string()
            << "\n";
  return 0;
}

int cmd_detect(const std::string& data_path, const PipelineOptions& opts,
               const std::string& out) {
  const Eigen::MatrixXd stream = ggmwatch::read_matrix_csv(data_path);
  const ggmwatch::PipelineConfig cfg = opts.build();
  // the true max degree is unknown pre-estimation: warn conservatively
  if (const auto warning = ggmwatch::check_separation(
          cfg, static_cast<int>(stream.cols()), static_cast<int>(stream.cols()))) {
    std::cerr << "advisory: " << *warning << "\n";
  }
  const ggmwatch::RunResult result = ggmwatch::run(stream, cfg);
  const fs::path dir = prepare_out_dir(out);
  ggmwatch::write_trace_csv((dir / "trace.csv").string(), result.trace);
  ggmwatch::write_json_file((dir / "detected.json").string(), json(result.detected));
  json cfg_echo = opts.echo();
  cfg_echo["data"] = data_path;
  ggmwatch::write_json_file((dir / "config.json").string(), cfg_echo);
  std::cout << "detected " << result.detected.size() << " change(s)";
  if (!result.detected.empty()) {
    std::cout << " at";
    for (const long t : result.detected) std::cout << ' ' << t;
  }
  std::cout << "\n";
  return 0;
}

int cmd_null_dist(const ggmwatch::NullDistConfig& cfg, const std::string& out) {
  const ggmwatch::NullDistResult result =
      ggmwatch::null_distribution_experiment(cfg);
  const fs::path dir = prepare_out_dir(out);
  Eigen::MatrixXd column(static_cast<long>(result.t_samples.size()), 1);
  for (long i = 0; i < column.rows(); ++i) {
    column(i, 0) = result.t_samples[static_cast<std::size_t>(i)];
  }
  const std::vector<std::string> header{"t_stat"};
  ggmwatch::write_matrix_csv((dir / "samples.csv").string(), column, &header);
  ggmwatch::write_json_file((dir / "summary.json").string(),
                            json{{"mean", result.mean},
                                 {"sd", result.sd},
                                 {"ks_distance", result.ks},
                                 {"reps", cfg.reps}});
  ggmwatch::write_json_file((dir / "config.json").string(), result.config_echo);
  std::cout << "mean=" << result.mean << " sd=" << result.sd
            << " ks=" << result.ks << "\n";
  return 0;
}

int cmd_power(const std::string& scenario_path, int w, double pi0, int reps,
              std::uint64_t seed, const std::string& out) {
  const ggmwatch::ScenarioSpec spec = ggmwatch::ScenarioSpec::load(scenario_path);
  const ggmwatch::DetectorConfig detector = ggmwatch::DetectorConfig::make(w, pi0);
  const ggmwatch::ExperimentReport report =
      ggmwatch::power_experiment(spec, detector, reps, seed);
  const fs::path dir = prepare_out_dir(out);
  Eigen::MatrixXd per_rep(reps, 2);
  for (int i = 0; i < reps; ++i) {
    per_rep(i, 0) = report.per_replicate_pi0[static_cast<std::size_t>(i)];
    per_rep(i, 1) = report.per_replicate_pi1[static_cast<std::size_t>(i)];
  }
  const std::vector<std::string> header{"pi0_hat", "pi1_hat"};
  ggmwatch::write_matrix_csv((dir / "samples.csv").string(), per_rep, &header);
  ggmwatch::write_json_file((dir / "summary.json").string(),
                            json{{"pi0_hat", report.pi0_hat},
                                 {"pi1_hat", report.pi1_hat},
                                 {"avg_false_alarms", report.false_alarm_count}});
  ggmwatch::write_json_file((dir / "config.json").string(), report.config_echo);
  std::cout << "pi0_hat=" << report.pi0_hat << " pi1_hat=" << report.pi1_hat
            << "\n";
  return 0;
}

int cmd_bench(const std::string& protocol, const std::string& sweep,
              const PipelineOptions& base, int reps, std::uint64_t seed,
              const std::string& out) {
  if (protocol != "s52") {
    throw CLI::ValidationError("--protocol", "unknown protocol " + protocol);
  }
  ggmwatch::BenchProtocol proto;
  std::vector<ggmwatch::PipelineConfig> configs;
  auto with = [&](int n0, int batch, int kappa) {
    PipelineOptions o = base;
    o.n0 = n0;
    o.batch = batch;
    o.kappa = kappa;
    configs.push_back(o.build());
  };
  if (sweep == "none") {
    with(base.n0, base.batch, base.kappa);
  } else if (sweep == "n0") {
    for (const int n0 : {1100, 1300, 1500, 1700, 1900, 2100}) {
      with(n0, base.batch, base.kappa);
    }
  } else if (sweep == "kappa") {
    for (const int n0 : {1500, 2000}) {
      for (const int kappa : {1, 2, 3, 4}) with(n0, base.batch, kappa);
    }
  } else if (sweep == "B") {
    for (const int n0 : {1100, 1500}) {
      for (const int batch : {5, 10, 20, 40}) with(n0, batch, base.kappa);
    }
  } else {
    throw CLI::ValidationError("--sweep", "expected none|n0|kappa|B");
  }

  const ggmwatch::BenchResult result =
      ggmwatch::pipeline_experiment(proto, configs, reps, seed);
  const fs::path dir = prepare_out_dir(out);
  std::ofstream table((dir / "tables.csv").string());
  table << "n0,B,kappa";
  for (const auto& change : result.rows.front().changes) {
    table << ',' << change.label << "_median_delay," << change.label
          << "_iqr_delay," << change.label << "_misses";
  }
  table << ",avg_false_alarms\n";
  for (const auto& row : result.rows) {
    table << row.n0 << ',' << row.batch << ',' << row.kappa;
    for (const auto& change : row.changes) {
      table << ',' << ggmwatch::format_g17(change.median_delay) << ','
            << ggmwatch::format_g17(change.iqr_delay) << ',' << change.misses;
    }
    table << ',' << ggmwatch::format_g17(row.avg_false_alarms) << '\n';
  }
  table.close();
  json echo = result.config_echo;
  echo["sweep"] = sweep;
  echo["base"] = base.echo();
  ggmwatch::write_json_file((dir / "config.json").string(), echo);
  std::cout << "wrote " << result.rows.size() << " config row(s) to "
            << (dir / "tables.csv").string() << "\n";
  return 0;
}

int cmd_ingest(const std::string& prices_path, bool center, int subset,
               std::uint64_t subset_seed, int vol_window, const std::string& out) {
  ggmwatch::PanelLoadResult loaded = ggmwatch::load_price_panel(prices_path);
  if (loaded.dropped_rows > 0) {
    std::cerr << "dropped " << loaded.dropped_rows << " incomplete row(s)\n";
  }
  ggmwatch::PricePanel panel = loaded.panel;
  if (subset > 0) {
    panel = ggmwatch::subset_panel(panel, subset, subset_seed);
  }
  const Eigen::MatrixXd returns = ggmwatch::log_returns(panel, center);

  const fs::path out_path(out);
  fs::create_directories(out_path.parent_path().empty() ? "."
                                                        : out_path.parent_path());
  const bool dated = !panel.dates.empty();
  {
    std::ofstream file(out_path);
    if (!file) throw std::runtime_error("ingest: cannot open " + out);
    if (dated) file << "date,";
    for (std::size_t j = 0; j < panel.tickers.size(); ++j) {
      if (j > 0) file << ',';
      file << panel.tickers[j];
    }
    file << '\n';
    for (long t = 0; t < returns.rows(); ++t) {
      if (dated) file << panel.dates[static_cast<std::size_t>(t + 1)] << ',';
      for (long j = 0; j < returns.cols(); ++j) {
        if (j > 0) file << ',';
        file << ggmwatch::format_g17(returns(t, j));
      }
      file << '\n';
    }
  }
  std::cout << "wrote " << returns.rows() << " return rows x " << returns.cols()
            << " tickers to " << out << "\n";

  if (vol_window > 0) {
    const Eigen::MatrixXd vol = ggmwatch::volatility_proxy(returns, vol_window);
    const Eigen::VectorXd index = ggmwatch::cross_sectional_mean(vol);
    const fs::path vol_path = out_path.parent_path() /
                              (out_path.stem().string() + "_volatility.csv");
    ggmwatch::write_matrix_csv(vol_path.string(), vol, &panel.tickers);
    const fs::path idx_path =
        out_path.parent_path() /
        (out_path.stem().string() + "_volatility_index.csv");
    std::ofstream file(idx_path);
    file << "volatility_index\n";
    for (long t = 0; t < index.size(); ++t) {
      file << ggmwatch::format_g17(index[t]) << '\n';
    }
    std::cout << "wrote volatility proxy (" << vol.rows() << " rows) and index\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"online change detection in sparse Gaussian graphical models"};
  app.require_subcommand(1);

  // simulate
  std::string sim_spec, sim_out = default_out_dir();
  bool sim_matrices = false;
  auto* simulate = app.add_subcommand("simulate", "render a piecewise stream");
  simulate->add_option("--spec", sim_spec, "scenario JSON file")->required();
  simulate->add_option("--out", sim_out, "output directory");
  simulate->add_flag("--write-matrices", sim_matrices, "dump segment matrices");

  // detect
  std::string det_data, det_config, det_out = default_out_dir();
  PipelineOptions det_opts;
  auto* detect = app.add_subcommand("detect", "run the online pipeline on a CSV");
  detect->add_option("--data", det_data, "input stream CSV")->required();
  detect->add_option("--config", det_config, "key=value config file");
  detect->add_option("--out", det_out, "output directory");
  detect->add_option("--w", det_opts.w, "detection window");
  detect->add_option("--pi0", det_opts.pi0, "false alarm rate");
  detect->add_option("--n0", det_opts.n0, "burn-in length");
  detect->add_option("--batch,-B", det_opts.batch, "mini-batch size B");
  detect->add_option("--kappa", det_opts.kappa, "model selection period");
  detect->add_option("--iota", det_opts.iota, "consecutive flags to confirm");
  detect->add_option("--selection", det_opts.selection,
                     "model selection rule: calibrated|bic");
  long det_guard = 0;
  detect->add_option("--guard", det_guard, "expected change spacing (advisory)");

  // null-dist
  ggmwatch::NullDistConfig nd;
  std::string nd_out = default_out_dir();
  auto* null_dist = app.add_subcommand("null-dist", "null distribution of the statistic");
  null_dist->add_option("--p", nd.p, "graph size")->required();
  null_dist->add_option("--dmax", nd.d_max, "row sparsity")->required();
  null_dist->add_option("--w", nd.w, "detection window")->required();
  null_dist->add_option("--reps", nd.reps, "replicates");
  null_dist->add_option("--seed", nd.seed, "seed");
  null_dist->add_flag("--estimated", nd.estimated, "plug-in estimated matrix");
  null_dist->add_option("--burnin", nd.burn_in,
                        "plug-in burn-in samples (default ceil(p*dmax*log p))");
  null_dist->add_option("--out", nd_out, "output directory");

  // power
  std::string pw_scenario, pw_out = default_out_dir();
  int pw_w = 15, pw_reps = 20;
  double pw_pi0 = 0.01;
  std::uint64_t pw_seed = 1;
  auto* power = app.add_subcommand("power", "known-matrix detection power");
  power->add_option("--scenario", pw_scenario, "scenario JSON file")->required();
  power->add_option("--reps", pw_reps, "replicates");
  power->add_option("--seed", pw_seed, "seed");
  power->add_option("--w", pw_w, "detection window");
  power->add_option("--pi0", pw_pi0, "false alarm rate");
  power->add_option("--out", pw_out, "output directory");

  // bench
  std::string bn_protocol = "s52", bn_sweep = "none", bn_out = default_out_dir();
  int bn_reps = 20;
  std::uint64_t bn_seed = 1;
  PipelineOptions bn_opts;
  bn_opts.w = 20;
  bn_opts.pi0 = 0.01;
  bn_opts.n0 = 1500;
  bn_opts.batch = 50;
  bn_opts.kappa = 4;
  auto* bench = app.add_subcommand("bench", "full-pipeline delay benchmark");
  bench->add_option("--protocol", bn_protocol, "benchmark protocol (s52)");
  bench->add_option("--sweep", bn_sweep, "none|n0|kappa|B");
  bench->add_option("--reps", bn_reps, "replicates");
  bench->add_option("--seed", bn_seed, "seed");
  bench->add_option("--n0", bn_opts.n0, "burn-in length");
  bench->add_option("--batch,-B", bn_opts.batch, "mini-batch size B");
  bench->add_option("--kappa", bn_opts.kappa, "model selection period");
  bench->add_option("--iota", bn_opts.iota, "consecutive flags to confirm");
  bench->add_option("--w", bn_opts.w, "detection window");
  bench->add_option("--pi0", bn_opts.pi0, "confirmation gate tail probability");
  bench->add_option("--selection", bn_opts.selection,
                    "model selection rule: calibrated|bic");
  bench->add_option("--out", bn_out, "output directory");

  // ingest
  std::string in_prices, in_out = "returns.csv";
  bool in_center = false;
  int in_subset = 0, in_vol = 0;
  std::uint64_t in_subset_seed = 1;
  auto* ingest = app.add_subcommand("ingest", "price panel -> log returns");
  ingest->add_option("--prices", in_prices, "price panel CSV")->required();
  ingest->add_flag("--center", in_center, "demean each column");
  ingest->add_option("--subset", in_subset, "random ticker sub-panel size");
  ingest->add_option("--subset-seed", in_subset_seed, "sub-panel seed");
  ingest->add_option("--vol-window", in_vol, "also write rolling volatility");
  ingest->add_option("--out", in_out, "output returns CSV path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed()) return cmd_simulate(sim_spec, sim_out, sim_matrices);
    if (detect->parsed()) {
      if (detect->count("--guard") > 0) det_opts.guard = det_guard;
      if (!det_config.empty()) {
        det_opts.apply_ini(ggmwatch::IniFile::load(det_config), *detect);
      }
      return cmd_detect(det_data, det_opts, det_out);
    }
    if (null_dist->parsed()) return cmd_null_dist(nd, nd_out);
    if (power->parsed()) {
      return cmd_power(pw_scenario, pw_w, pw_pi0, pw_reps, pw_seed, pw_out);
    }
    if (bench->parsed()) {
      return cmd_bench(bn_protocol, bn_sweep, bn_opts, bn_reps, bn_seed, bn_out);
    }
    if (ingest->parsed()) {
      return cmd_ingest(in_prices, in_center, in_subset, in_subset_seed, in_vol,
                        in_out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
