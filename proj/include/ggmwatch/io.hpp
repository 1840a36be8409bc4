#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ggmwatch/pipeline.hpp"

namespace ggmwatch {

// All CSV numerics use 17 significant digits so 64-bit floats round-trip
// losslessly through text.
inline std::string format_g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

inline void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& m,
                             const std::vector<std::string>* header = nullptr) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_matrix_csv: cannot open " + path);
  if (header != nullptr) {
    for (std::size_t j = 0; j < header->size(); ++j) {
      if (j > 0) out << ',';
      out << (*header)[j];
    }
    out << '\n';
  }
  for (long i = 0; i < m.rows(); ++i) {
    for (long j = 0; j < m.cols(); ++j) {
      if (j > 0) out << ',';
      out << format_g17(m(i, j));
    }
    out << '\n';
  }
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

inline bool parse_double(const std::string& s, double* out) {
  if (s.empty()) return false;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') return false;
  *out = v;
  return true;
}

}  // namespace detail

// Numeric CSV reader; a non-numeric first row is treated as a header and
// skipped. Rejects ragged rows and non-numeric cells.
inline Eigen::MatrixXd read_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_matrix_csv: cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> fields = detail::split_csv_line(line);
    std::vector<double> row(fields.size());
    bool numeric = true;
    for (std::size_t j = 0; j < fields.size(); ++j) {
      if (!detail::parse_double(fields[j], &row[j])) {
        numeric = false;
        break;
      }
    }
    if (!numeric) {
      if (first) {
        first = false;
        continue;  // header row
      }
      throw std::runtime_error("read_matrix_csv: non-numeric cell in " + path);
    }
    first = false;
    if (!rows.empty() && rows.front().size() != row.size()) {
      throw std::runtime_error("read_matrix_csv: ragged rows in " + path);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("read_matrix_csv: no data in " + path);
  Eigen::MatrixXd m(static_cast<long>(rows.size()),
                    static_cast<long>(rows.front().size()));
  for (long i = 0; i < m.rows(); ++i) {
    for (long j = 0; j < m.cols(); ++j) {
      m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
  }
  return m;
}

// Compact binary matrix dump: two little-endian uint64 dims, then row-major
// little-endian float64 entries.
inline void write_matrix_binary(const std::string& path, const Eigen::MatrixXd& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_matrix_binary: cannot open " + path);
  const std::uint64_t rows = static_cast<std::uint64_t>(m.rows());
  const std::uint64_t cols = static_cast<std::uint64_t>(m.cols());
  out.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
  out.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
  for (long i = 0; i < m.rows(); ++i) {
    for (long j = 0; j < m.cols(); ++j) {
      const double v = m(i, j);
      out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
  }
}

inline Eigen::MatrixXd read_matrix_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_matrix_binary: cannot open " + path);
  std::uint64_t rows = 0, cols = 0;
  in.read(reinterpret_cast<char*>(&rows), sizeof(rows));
  in.read(reinterpret_cast<char*>(&cols), sizeof(cols));
  if (!in || rows == 0 || cols == 0 || rows > (1ULL << 32) || cols > (1ULL << 32)) {
    throw std::runtime_error("read_matrix_binary: bad header in " + path);
  }
  Eigen::MatrixXd m(static_cast<long>(rows), static_cast<long>(cols));
  for (std::uint64_t i = 0; i < rows; ++i) {
    for (std::uint64_t j = 0; j < cols; ++j) {
      double v = 0.0;
      in.read(reinterpret_cast<char*>(&v), sizeof(v));
      m(static_cast<long>(i), static_cast<long>(j)) = v;
    }
  }
  if (!in) throw std::runtime_error("read_matrix_binary: truncated file " + path);
  return m;
}

// Trace export: one row per consumed sample; absent statistics are written as
// NA so burn-in periods stay visible downstream.
inline void write_trace_csv(const std::string& path,
                            const std::vector<StepEvent>& trace) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_trace_csv: cannot open " + path);
  out << "t,mode,statistic,flagged,alarm_confirmed,refit_performed\n";
  for (const StepEvent& ev : trace) {
    out << ev.t << ',' << to_string(ev.mode) << ',';
    if (ev.statistic) {
      out << format_g17(*ev.statistic);
    } else {
      out << "NA";
    }
    out << ',' << (ev.flagged ? 1 : 0) << ',' << (ev.alarm_confirmed ? 1 : 0) << ','
        << (ev.refit_performed ? 1 : 0) << '\n';
  }
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_json_file: cannot open " + path);
  out << j.dump(2) << '\n';
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_json_file: cannot open " + path);
  nlohmann::json j;
  in >> j;
  return j;
}

// Flat "key = value" configuration with [section] headers; lookup keys are
// "section.key". Lines starting with '#' or ';' are comments.
struct IniFile {
  std::map<std::string, std::string> values;

  static IniFile load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("IniFile: cannot open " + path);
    IniFile ini;
    std::string line, section;
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    while (std::getline(in, line)) {
      line = trim(line);
      if (line.empty() || line[0] == '#' || line[0] == ';') continue;
      if (line.front() == '[' && line.back() == ']') {
        section = trim(line.substr(1, line.size() - 2));
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw std::runtime_error("IniFile: malformed line '" + line + "'");
      }
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      ini.values[section.empty() ? key : section + "." + key] = value;
    }
    return ini;
  }

  std::optional<std::string> get(const std::string& key) const {
    const auto it = values.find(key);
    if (it == values.end()) return std::nullopt;
    return it->second;
  }
};

}  // namespace ggmwatch
