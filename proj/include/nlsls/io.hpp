#pragma once

/**
 * @file
 * @brief JSON and CSV export: solution certificates (round trip is bit-exact,
 * doubles are written as shortest round-trip decimals), iteration logs,
 * rollout reports, curvature estimates, tubes and rollout trajectories.
 *
 * Requires nlohmann/json.hpp on the include path.
 *
 * CSV layouts
 *   tubes.csv     k,component,center,half_width,lower,upper   one row per (k, state component)
 *   rollouts.csv  rollout,k,x0..x{n-1},u0..u{m-1}             one row per (rollout, k)
 */

#include "nlsls/config.hpp"
#include "nlsls/robust_ocp.hpp"
#include "nlsls/sls.hpp"
#include "nlsls/sqp.hpp"
#include "nlsls/validation.hpp"

#include <nlohmann/json.hpp>

#include <Eigen/Core>

#include <charconv>
#include <cmath>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace nlsls {

using json = nlohmann::json;

inline constexpr const char* kSolutionFormat = "nlsls-solution";
inline constexpr int kSolutionVersion = 1;

// Non-finite doubles have no JSON literal; they are written as strings.
inline json number_to_json(double x) {
  if (std::isfinite(x)) return x;
  if (std::isnan(x)) return "nan";
  return x > 0 ? "inf" : "-inf";
}

inline double number_from_json(const json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
  }
  throw std::runtime_error("expected a number, got " + j.dump());
}

inline json to_json(const VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(number_to_json(v[i]));
  return a;
}

inline VectorXd vector_from_json(const json& j) {
  if (!j.is_array()) throw std::runtime_error("expected an array");
  VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = number_from_json(j[i]);
  return v;
}

/// Row-major nested arrays.
inline json to_json(const MatrixXd& m) {
  json a = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) a.push_back(to_json(VectorXd(m.row(i).transpose())));
  return a;
}

inline MatrixXd matrix_from_json(const json& j, Eigen::Index rows, Eigen::Index cols) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows) throw std::runtime_error("matrix: wrong row count");
  MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const VectorXd r = vector_from_json(j[static_cast<std::size_t>(i)]);
    if (r.size() != cols) throw std::runtime_error("matrix: wrong column count");
    m.row(i) = r.transpose();
  }
  return m;
}

inline json to_json_list(const std::vector<VectorXd>& vs) {
  json a = json::array();
  for (const auto& v : vs) a.push_back(to_json(v));
  return a;
}

inline std::vector<VectorXd> list_from_json(const json& j) {
  if (!j.is_array()) throw std::runtime_error("expected an array of vectors");
  std::vector<VectorXd> out;
  for (const auto& v : j) out.push_back(vector_from_json(v));
  return out;
}

/// blocks[i][j] is M^{i,j} (row i, j blocks left of the diagonal), row-major.
inline json to_json(const BlockLowerTriangular& m) {
  json blocks = json::array();
  for (int i = 0; i < m.horizon(); ++i) {
    json row = json::array();
    for (int j = 0; j <= i; ++j) row.push_back(to_json(MatrixXd(m.block(i, j))));
    blocks.push_back(std::move(row));
  }
  return {{"horizon", m.horizon()}, {"block_rows", m.block_rows()}, {"block_cols", m.block_cols()},
          {"blocks", std::move(blocks)}};
}

inline BlockLowerTriangular block_lower_triangular_from_json(const json& j) {
  BlockLowerTriangular m(j.at("horizon").get<int>(), j.at("block_rows").get<int>(), j.at("block_cols").get<int>());
  const auto& blocks = j.at("blocks");
  if (!blocks.is_array() || static_cast<int>(blocks.size()) != m.horizon()) {
    throw std::runtime_error("block matrix: wrong number of block rows");
  }
  for (int i = 0; i < m.horizon(); ++i) {
    const auto& row = blocks[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<int>(row.size()) != i + 1) {
      throw std::runtime_error("block matrix: block row " + std::to_string(i) + " has the wrong length");
    }
    for (int jj = 0; jj <= i; ++jj) {
      m.block(i, jj) = matrix_from_json(row[static_cast<std::size_t>(jj)], m.block_rows(), m.block_cols());
    }
  }
  return m;
}

inline json to_json(const SystemResponse& r) { return {{"phi_x", to_json(r.phi_x)}, {"phi_u", to_json(r.phi_u)}}; }

inline SystemResponse system_response_from_json(const json& j) {
  return {block_lower_triangular_from_json(j.at("phi_x")), block_lower_triangular_from_json(j.at("phi_u"))};
}

inline json to_json(const CertificateResiduals& r) {
  return {{"slp", number_to_json(r.slp)},
          {"dynamics", number_to_json(r.dynamics)},
          {"tightening", number_to_json(r.tightening)},
          {"tau", number_to_json(r.tau)},
          {"tau_min", number_to_json(r.tau_min)}};
}

inline CertificateResiduals residuals_from_json(const json& j) {
  CertificateResiduals r;
  r.slp = number_from_json(j.at("slp"));
  r.dynamics = number_from_json(j.at("dynamics"));
  r.tightening = number_from_json(j.at("tightening"));
  r.tau = number_from_json(j.at("tau"));
  r.tau_min = number_from_json(j.at("tau_min"));
  return r;
}

inline json to_json(const SolutionCertificate& s) {
  return {{"z", to_json_list(s.z)},         {"v", to_json_list(s.v)},
          {"tau", to_json(s.tau)},          {"response", to_json(s.resp)},
          {"K", to_json(s.K)},              {"residuals", to_json(s.residuals)}};
}

inline SolutionCertificate certificate_from_json(const json& j) {
  SolutionCertificate s;
  s.z = list_from_json(j.at("z"));
  s.v = list_from_json(j.at("v"));
  s.tau = vector_from_json(j.at("tau"));
  s.resp = system_response_from_json(j.at("response"));
  s.K = block_lower_triangular_from_json(j.at("K"));
  s.residuals = residuals_from_json(j.at("residuals"));
  const int t = s.resp.horizon();
  if (static_cast<int>(s.z.size()) != t + 1 || static_cast<int>(s.v.size()) != t + 1 || s.tau.size() != t) {
    throw std::runtime_error("solution: trajectory lengths do not match the response horizon");
  }
  return s;
}

inline json to_json(const CertificationReport& r) {
  return {{"certified", r.certified}, {"tol", r.tol}, {"residuals", to_json(r.residuals)}, {"failures", r.failures}};
}

inline json to_json(const IterationLog& l) {
  return {{"iteration", l.iteration},
          {"step_primal", number_to_json(l.step_primal)},
          {"step_dual", number_to_json(l.step_dual)},
          {"cost", number_to_json(l.cost)},
          {"violation", number_to_json(l.violation)},
          {"merit_before", number_to_json(l.merit_before)},
          {"merit", number_to_json(l.merit)},
          {"penalty", number_to_json(l.penalty)},
          {"step_length", number_to_json(l.step_length)},
          {"qp_status", qp::to_string(l.qp_status)},
          {"qp_iterations", l.qp_iterations},
          {"seconds", l.seconds}};
}

/// solution.json: the certificate plus solver status and the hash of the config it came from.
inline json solution_document(const ProblemConfig& cfg, const SqpResult& res) {
  const auto& p = cfg.problem;
  return {{"format", kSolutionFormat},
          {"version", kSolutionVersion},
          {"config", cfg.source},
          {"config_hash", hex64(cfg.hash)},
          {"model", cfg.model_kind},
          {"mode", to_string(p.mode)},
          {"horizon", p.horizon},
          {"nx", p.nx()},
          {"nu", p.nu()},
          {"mu", {{"diagonal", to_json(p.mu.mu)}, {"source", to_string(p.mu.source)}}},
          {"status", to_string(res.status)},
          {"message", res.message},
          {"iterations", res.iterations},
          {"seconds", res.seconds},
          {"certification", to_json(res.report)},
          {"certificate", to_json(res.certificate)}};
}

struct SolutionFile {
  std::string config_hash;
  std::string status;
  bool certified = false;
  SolutionCertificate certificate;
};

inline SolutionFile solution_from_json(const json& j) {
  if (j.value("format", "") != kSolutionFormat) throw std::runtime_error("not a solution file");
  if (j.value("version", 0) != kSolutionVersion) throw std::runtime_error("unsupported solution file version");
  SolutionFile f;
  f.config_hash = j.at("config_hash").get<std::string>();
  f.status = j.at("status").get<std::string>();
  f.certified = j.at("certification").at("certified").get<bool>();
  f.certificate = certificate_from_json(j.at("certificate"));
  return f;
}

inline json to_json(const RolloutReport& rep) {
  json rollouts = json::array();
  for (const auto& r : rep.rollouts) {
    rollouts.push_back({{"max_violation", number_to_json(r.max_violation)},
                        {"inside", r.inside},
                        {"error_norm", to_json(r.error_norm)},
                        {"tau_margin", to_json(r.tau_margin)}});
  }
  return {{"slack", rep.slack},
          {"rollouts", rep.rollouts.size()},
          {"clean", rep.clean()},
          {"violating_rollouts", rep.violating_rollouts},
          {"tube_exits", rep.tube_exits},
          {"tau_exceedances", rep.tau_exceedances},
          {"worst_violation", number_to_json(rep.worst_violation)},
          {"min_tau_margin", number_to_json(rep.min_tau_margin)},
          {"per_rollout", std::move(rollouts)}};
}

inline json to_json(const SampleDomain& d) {
  json blocks = json::array();
  for (const auto& b : d.unit_norm_blocks) blocks.push_back({b.start, b.length});
  return {{"lower", to_json(d.lower)}, {"upper", to_json(d.upper)}, {"unit_norm_blocks", std::move(blocks)}};
}

inline json to_json(const CurvatureBound& mu) {
  return {{"mu", to_json(mu.mu)}, {"source", to_string(mu.source)}, {"samples", mu.samples}, {"seed", mu.seed}};
}

/// Shortest decimal that reads back to the same double.
inline std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

inline void write_tubes_csv(std::ostream& os, const Tube& tube) {
  os << "k,component,center,half_width,lower,upper\n";
  for (int k = 0; k <= tube.horizon(); ++k) {
    const auto& c = tube.center[static_cast<std::size_t>(k)];
    const VectorXd hw = tube.half_width(k);
    for (Eigen::Index i = 0; i < c.size(); ++i) {
      os << k << ',' << i << ',' << format_double(c[i]) << ',' << format_double(hw[i]) << ','
         << format_double(c[i] - hw[i]) << ',' << format_double(c[i] + hw[i]) << '\n';
    }
  }
}

inline void write_rollouts_csv(std::ostream& os, const std::vector<Trajectory>& trajectories) {
  if (trajectories.empty()) {
    os << "rollout,k\n";
    return;
  }
  const auto nx = trajectories[0].x[0].size(), nu = trajectories[0].u[0].size();
  os << "rollout,k";
  for (Eigen::Index i = 0; i < nx; ++i) os << ",x" << i;
  for (Eigen::Index i = 0; i < nu; ++i) os << ",u" << i;
  os << '\n';
  for (std::size_t r = 0; r < trajectories.size(); ++r) {
    const auto& tr = trajectories[r];
    for (std::size_t k = 0; k < tr.x.size(); ++k) {
      os << r << ',' << k;
      for (Eigen::Index i = 0; i < nx; ++i) os << ',' << format_double(tr.x[k][i]);
      for (Eigen::Index i = 0; i < nu; ++i) os << ',' << format_double(tr.u[k][i]);
      os << '\n';
    }
  }
}

}  // namespace nlsls
