#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ggmwatch/precision.hpp"
#include "ggmwatch/random.hpp"

namespace ggmwatch {

// Sparse random precision matrix: U has exactly d standard-normal entries per
// row at positions drawn uniformly without replacement; H = U U^T normalized
// by its largest absolute entry; the result is H + lambda0 * I, so the
// smallest eigenvalue is at least lambda0. With normalize = true the matrix
// is rescaled to unit diagonal afterwards.
inline PrecisionMatrix random_sparse_precision(int p, int d, double lambda0,
                                               std::uint64_t seed,
                                               bool normalize = false) {
  if (p < 1 || d < 1 || d > p) {
    throw std::invalid_argument("random_sparse_precision: need 1 <= d <= p");
  }
  if (!(lambda0 > 0.0)) {
    throw std::invalid_argument("random_sparse_precision: lambda0 must be > 0");
  }
  Rng rng(seed);
  Eigen::MatrixXd u = Eigen::MatrixXd::Zero(p, p);
  for (int i = 0; i < p; ++i) {
    for (int col : sample_without_replacement(p, d, rng)) {
      u(i, col) = rng.gaussian();
    }
  }
  Eigen::MatrixXd h = u * u.transpose();
  h /= h.cwiseAbs().maxCoeff();
  h.diagonal().array() += lambda0;
  if (normalize) h = normalize_to_correlation(h);
  return PrecisionMatrix::validate(std::move(h));
}

// Well-conditioned demo matrix for null-distribution studies: U has d_max
// Uniform(-1,1) entries per row, Omega = U + U^T + 1.5 * d_max * I, rescaled
// so the smallest eigenvalue is exactly 1. Diagonal dominance holds with high
// probability; the rare indefinite draw retries with a derived seed.
inline PrecisionMatrix clt_demo_precision(int p, int d_max, std::uint64_t seed) {
  if (p < 1 || d_max < 1 || d_max > p) {
    throw std::invalid_argument("clt_demo_precision: need 1 <= d_max <= p");
  }
  for (int attempt = 0; attempt < 16; ++attempt) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(attempt)));
    Eigen::MatrixXd u = Eigen::MatrixXd::Zero(p, p);
    for (int i = 0; i < p; ++i) {
      for (int col : sample_without_replacement(p, d_max, rng)) {
        u(i, col) = rng.uniform(-1.0, 1.0);
      }
    }
    Eigen::MatrixXd omega = u + u.transpose();
    omega.diagonal().array() += 1.5 * static_cast<double>(d_max);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(omega,
                                                       Eigen::EigenvaluesOnly);
    const double lambda_min = eig.eigenvalues().minCoeff();
    if (lambda_min <= 1e-8) continue;
    omega /= lambda_min;
    return PrecisionMatrix::validate(std::move(omega));
  }
  throw std::runtime_error("clt_demo_precision: could not reach positive lambda_min");
}

// Star graph: hub at node 0, Omega = 1.1 I + (e_0 u^T + u e_0^T)/(p*max|u|)
// with u a standard Gaussian vector padded with a leading zero. Gershgorin
// keeps it SPD for every draw.
inline PrecisionMatrix star_precision(int p, std::uint64_t seed) {
  if (p < 2) throw std::invalid_argument("star_precision: need p >= 2");
  Rng rng(seed);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(p);
  for (int i = 1; i < p; ++i) u[i] = rng.gaussian();
  const double scale = static_cast<double>(p) * u.cwiseAbs().maxCoeff();
  Eigen::MatrixXd omega = Eigen::MatrixXd::Identity(p, p) * 1.1;
  omega.row(0) += (u / scale).transpose();
  omega.col(0) += u / scale;
  return PrecisionMatrix::validate(std::move(omega));
}

// Dense multiplicative change: (1 + beta) * Omega. Leaves the partial
// correlation matrix untouched; the detector sees it through the scale of the
// window scores.
inline PrecisionMatrix uniform_change(const PrecisionMatrix& omega, double beta) {
  if (!(beta > -1.0)) {
    throw std::invalid_argument("uniform_change: beta must be > -1");
  }
  return PrecisionMatrix::validate((1.0 + beta) * omega.matrix(),
                                   omega.sparsity_eps());
}

// Spectral change: multiply the r largest eigenvalues by (1 + beta), keep the
// eigenvectors. r = p reproduces uniform_change.
inline PrecisionMatrix lowrank_change(const PrecisionMatrix& omega, int r,
                                      double beta) {
  const int p = omega.dim();
  if (r < 1 || r > p) throw std::invalid_argument("lowrank_change: need 1 <= r <= p");
  if (!(beta > -1.0)) throw std::invalid_argument("lowrank_change: beta must be > -1");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(omega.matrix());
  Eigen::VectorXd values = eig.eigenvalues();  // ascending
  for (int i = p - r; i < p; ++i) values[i] *= (1.0 + beta);
  Eigen::MatrixXd changed =
      eig.eigenvectors() * values.asDiagonal() * eig.eigenvectors().transpose();
  return PrecisionMatrix::validate(std::move(changed), omega.sparsity_eps());
}

// Perturbation confined to one node and its neighbors: Omega + v e_s^T + e_s v^T.
// v must vanish outside the neighborhood of s. If the result is not SPD, v is
// halved (up to 20 times) until validation passes.
inline PrecisionMatrix localized_change(const PrecisionMatrix& omega, int node,
                                        Eigen::VectorXd v) {
  const int p = omega.dim();
  if (node < 0 || node >= p) {
    throw std::invalid_argument("localized_change: node out of range");
  }
  if (v.size() != p) throw std::invalid_argument("localized_change: bad v size");
  for (int u = 0; u < p; ++u) {
    if (v[u] != 0.0 && std::abs(omega.matrix()(node, u)) <= omega.sparsity_eps()) {
      throw std::invalid_argument(
          "localized_change: v supported outside the neighborhood of node");
    }
  }
  for (int attempt = 0; attempt <= 20; ++attempt) {
    Eigen::MatrixXd changed = omega.matrix();
    changed.col(node) += v;
    changed.row(node) += v.transpose();
    try {
      return PrecisionMatrix::validate(std::move(changed), omega.sparsity_eps());
    } catch (const NotPositiveDefiniteError&) {
      v *= 0.5;
    }
  }
  throw NotPositiveDefiniteError("localized_change: SPD unattainable after 20 halvings");
}

// Draws a perturbation direction on the neighborhood of `node` with the given
// Euclidean norm; convenience wrapper for localized scenarios.
inline Eigen::VectorXd random_neighbor_perturbation(const PrecisionMatrix& omega,
                                                    int node, double norm,
                                                    std::uint64_t seed) {
  const int p = omega.dim();
  if (node < 0 || node >= p) {
    throw std::invalid_argument("random_neighbor_perturbation: node out of range");
  }
  Rng rng(seed);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(p);
  for (int u = 0; u < p; ++u) {
    if (std::abs(omega.matrix()(node, u)) > omega.sparsity_eps()) {
      v[u] = rng.gaussian();
    }
  }
  const double len = v.norm();
  if (len == 0.0) {
    throw std::runtime_error("random_neighbor_perturbation: isolated node");
  }
  return v * (norm / len);
}

// -------------------------------------------------------------------------
// Piecewise-constant stream specification.

struct SegmentSpec {
  long length = 0;
  std::string generator;    // random_sparse | clt_demo | star |
                            // uniform_change | lowrank_change | localized_change
  nlohmann::json params;    // generator-specific parameters
};

struct ScenarioSpec {
  int p = 0;
  std::uint64_t seed = 0;
  bool normalize = true;    // unit-diagonal base matrices (stream experiments)
  std::vector<SegmentSpec> segments;

  static ScenarioSpec from_json(const nlohmann::json& j) {
    ScenarioSpec spec;
    spec.p = j.at("p").get<int>();
    spec.seed = j.value("seed", std::uint64_t{0});
    spec.normalize = j.value("normalize", true);
    for (const auto& seg : j.at("segments")) {
      SegmentSpec s;
      s.length = seg.at("length").get<long>();
      s.generator = seg.at("generator").get<std::string>();
      s.params = seg.value("params", nlohmann::json::object());
      spec.segments.push_back(std::move(s));
    }
    return spec;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["p"] = p;
    j["seed"] = seed;
    j["normalize"] = normalize;
    j["segments"] = nlohmann::json::array();
    for (const auto& s : segments) {
      j["segments"].push_back(
          {{"length", s.length}, {"generator", s.generator}, {"params", s.params}});
    }
    return j;
  }

  static ScenarioSpec load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("ScenarioSpec: cannot open " + path);
    nlohmann::json j;
    in >> j;
    return from_json(j);
  }
};

inline std::vector<PrecisionMatrix> build_segment_matrices(const ScenarioSpec& spec) {
  if (spec.segments.empty()) {
    throw std::invalid_argument("ScenarioSpec: at least one segment required");
  }
  std::vector<PrecisionMatrix> out;
  for (std::size_t i = 0; i < spec.segments.size(); ++i) {
    const SegmentSpec& seg = spec.segments[i];
    if (seg.length < 1) throw std::invalid_argument("ScenarioSpec: segment length < 1");
    const std::uint64_t seg_seed = derive_seed(spec.seed, 100 + i);
    const nlohmann::json& prm = seg.params;
    if (seg.generator == "random_sparse") {
      out.push_back(random_sparse_precision(spec.p, prm.at("d").get<int>(),
                                            prm.value("lambda0", 0.1), seg_seed,
                                            spec.normalize));
    } else if (seg.generator == "clt_demo") {
      out.push_back(clt_demo_precision(spec.p, prm.at("d_max").get<int>(), seg_seed));
    } else if (seg.generator == "star") {
      out.push_back(star_precision(spec.p, seg_seed));
    } else if (seg.generator == "uniform_change") {
      if (i == 0) throw std::invalid_argument("uniform_change needs a predecessor");
      out.push_back(uniform_change(out.back(), prm.at("beta").get<double>()));
    } else if (seg.generator == "lowrank_change") {
      if (i == 0) throw std::invalid_argument("lowrank_change needs a predecessor");
      out.push_back(lowrank_change(out.back(), prm.at("r").get<int>(),
                                   prm.at("beta").get<double>()));
    } else if (seg.generator == "localized_change") {
      if (i == 0) throw std::invalid_argument("localized_change needs a predecessor");
      const int node = prm.at("node").get<int>();
      Eigen::VectorXd v = random_neighbor_perturbation(
          out.back(), node, prm.at("norm").get<double>(), derive_seed(seg_seed, 7));
      out.push_back(localized_change(out.back(), node, std::move(v)));
    } else {
      throw std::invalid_argument("ScenarioSpec: unknown generator " + seg.generator);
    }
    if (i > 0) {
      const double diff =
          (out[i].matrix() - out[i - 1].matrix()).cwiseAbs().maxCoeff();
      const double scale = out[i - 1].matrix().cwiseAbs().maxCoeff();
      if (diff <= 1e-12 * (1.0 + scale)) {
        throw std::invalid_argument(
            "ScenarioSpec: consecutive segments must actually differ");
      }
    }
  }
  return out;
}

struct RenderedStream {
  Eigen::MatrixXd data;                       // T x p
  std::vector<long> change_times;             // 1-based first sample of each new regime
  std::vector<PrecisionMatrix> segment_matrices;
};

inline RenderedStream render_stream(const ScenarioSpec& spec) {
  std::vector<PrecisionMatrix> matrices = build_segment_matrices(spec);
  long total = 0;
  for (const auto& seg : spec.segments) total += seg.length;
  RenderedStream out{Eigen::MatrixXd(total, spec.p), {}, {}};
  long row = 0;
  for (std::size_t i = 0; i < spec.segments.size(); ++i) {
    const long len = spec.segments[i].length;
    out.data.middleRows(row, len) =
        sample_ggm(matrices[i], len, derive_seed(spec.seed, 500 + i));
    row += len;
    if (i + 1 < spec.segments.size()) out.change_times.push_back(row + 1);
  }
  out.segment_matrices = std::move(matrices);
  return out;
}

}  // namespace ggmwatch
