// nlsls: solve, validate and mu-estimate front end.

#include "exit_codes.hpp"

#include "nlsls/config.hpp"
#include "nlsls/io.hpp"
#include "nlsls/sqp.hpp"
#include "nlsls/validation.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace nlsls;
using namespace nlsls::cli;

namespace {

struct Flags {
  std::string config;
  std::string out = ".";
  std::string solution;
  int rollouts = 1000;
  std::string mode = "uniform";
  std::optional<std::uint64_t> seed;
  std::optional<int> max_iters;
  std::optional<double> tol;
  std::optional<long long> samples;
  std::string line_search;
};

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  return f;
}

int exit_code(SqpStatus s) {
  switch (s) {
    case SqpStatus::converged: return kOk;
    case SqpStatus::infeasible: return kInfeasible;
    case SqpStatus::certification_failed: return kCertificationFailed;
    case SqpStatus::max_iterations:
    case SqpStatus::qp_failure:
    case SqpStatus::line_search_failure: return kNotConverged;
  }
  return kInternal;
}

int cmd_solve(const Flags& fl) {
  auto cfg = load_config(fl.config);
  if (fl.max_iters) cfg.sqp.max_iters = *fl.max_iters;
  if (fl.tol) cfg.sqp.conv_tol = *fl.tol;
  if (fl.line_search == "backtracking") cfg.sqp.line_search = LineSearch::backtracking;
  if (fl.line_search == "full_step") cfg.sqp.line_search = LineSearch::full_step;
  resolve_curvature(cfg);

  const fs::path out(fl.out);
  fs::create_directories(out);
  auto log = open_out(out / "iterations.jsonl");
  const auto res = solve(cfg.problem, cfg.sqp, [&](const IterationLog& l) {
    log << to_json(l).dump() << '\n';
    log.flush();
    std::cerr << "iter " << l.iteration << "  step " << l.step_primal << "  dual " << l.step_dual << "  cost "
              << l.cost << "  viol " << l.violation << '\n';
  });

  std::cout << "status: " << to_string(res.status) << "\niterations: " << res.iterations
            << "\nseconds: " << res.seconds << '\n';
  if (!res.message.empty()) std::cout << "message: " << res.message << '\n';
  if (res.status == SqpStatus::converged || res.status == SqpStatus::certification_failed) {
    open_out(out / "solution.json") << solution_document(cfg, res).dump(1) << '\n';
    auto tubes = open_out(out / "tubes.csv");
    write_tubes_csv(tubes, build_tube(res.certificate, cfg.problem.disturbance(), cfg.problem.mu));
    for (const auto& f : res.report.failures) std::cout << "certification: " << f << '\n';
  }
  return exit_code(res.status);
}

int cmd_validate(const Flags& fl) {
  auto cfg = load_config(fl.config);
  const fs::path out(fl.out);
  const fs::path sol_path = fl.solution.empty() ? out / "solution.json" : fs::path(fl.solution);
  json doc;
  SolutionFile sol;
  try {
    doc = json::parse(read_text_file(sol_path));
    sol = solution_from_json(doc);
  } catch (const std::exception& e) {
    throw std::invalid_argument(sol_path.string() + ": " + e.what());
  }
  if (sol.config_hash != hex64(cfg.hash)) {
    std::cerr << "error: " << sol_path.string() << " was produced from a different config (hash " << sol.config_hash
              << ", config " << hex64(cfg.hash) << ")\n";
    return kStaleSolution;
  }
  if (!sol.certified) {
    std::cerr << "error: " << sol_path.string() << " holds an uncertified solution (" << sol.status << ")\n";
    return kStaleSolution;
  }
  // An estimated mu is taken from the solution rather than sampled again.
  if (cfg.curvature.estimate) cfg.problem.mu = CurvatureBound::user(vector_from_json(doc.at("mu").at("diagonal")));
  if (sol.certificate.horizon() != cfg.problem.horizon) throw std::runtime_error("solution horizon does not match");

  const auto mode = disturbance_mode_from_string(fl.mode);
  const auto run = validate(cfg.problem, sol.certificate, fl.rollouts, mode, fl.seed.value_or(cfg.seed));
  fs::create_directories(out);
  auto report = to_json(run.report);
  report["mode"] = fl.mode;
  report["seed"] = fl.seed.value_or(cfg.seed);
  report["solution"] = sol_path.string();
  open_out(out / "report.json") << report.dump(1) << '\n';
  auto csv = open_out(out / "rollouts.csv");
  write_rollouts_csv(csv, run.trajectories);

  const auto& r = run.report;
  std::cout << "rollouts: " << r.rollouts.size() << " (" << fl.mode << ")\nviolating rollouts: " << r.violating_rollouts
            << "\ntube exits: " << r.tube_exits << "\ntau exceedances: " << r.tau_exceedances
            << "\nworst constraint value: " << r.worst_violation << "\nmin tau margin: " << r.min_tau_margin << '\n';
  return r.clean() ? kOk : kViolations;
}

int cmd_mu_estimate(const Flags& fl) {
  auto cfg = load_config(fl.config);
  if (cfg.curvature.domain.lower.size() == 0) {
    throw ConfigError(cfg.source, 0, "mu-estimate needs 'curvature.lower' and 'curvature.upper'");
  }
  const long long n = fl.samples.value_or(cfg.curvature.samples);
  const std::uint64_t seed = fl.seed.value_or(cfg.curvature.seed);
  const auto mu = mu_monte_carlo(*cfg.problem.model, cfg.curvature.domain, n, seed);
  json j = to_json(mu);
  j["model"] = cfg.model_kind;
  j["config"] = cfg.source;
  j["config_hash"] = hex64(cfg.hash);
  j["domain"] = to_json(cfg.curvature.domain);
  if (fl.out.empty() || fl.out == "-") {
    std::cout << j.dump(1) << '\n';
  } else {
    const fs::path out(fl.out);
    fs::create_directories(out);
    open_out(out / "mu.json") << j.dump(1) << '\n';
    std::cout << "mu: " << mu.mu.transpose() << '\n';
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust nonlinear trajectory optimization with system level synthesis"};
  app.require_subcommand(1);
  Flags fl;

  auto* solve_cmd = app.add_subcommand("solve", "solve a config; writes solution.json, tubes.csv, iterations.jsonl");
  solve_cmd->add_option("--config", fl.config, "problem config (.toml)")->required()->check(CLI::ExistingFile);
  solve_cmd->add_option("--out", fl.out, "output directory");
  solve_cmd->add_option("--max-iters", fl.max_iters, "SQP iteration limit");
  solve_cmd->add_option("--tol", fl.tol, "SQP convergence tolerance");
  solve_cmd->add_option("--line-search", fl.line_search, "full_step or backtracking")
      ->check(CLI::IsMember({"full_step", "backtracking"}));

  auto* val_cmd = app.add_subcommand("validate", "Monte-Carlo rollouts of a solution; writes report.json, rollouts.csv");
  val_cmd->add_option("--config", fl.config, "problem config the solution was computed from")
      ->required()
      ->check(CLI::ExistingFile);
  val_cmd->add_option("--solution", fl.solution, "solution file (default <out>/solution.json)");
  val_cmd->add_option("--out", fl.out, "output directory");
  val_cmd->add_option("--rollouts", fl.rollouts, "number of rollouts")->check(CLI::NonNegativeNumber);
  val_cmd->add_option("--mode", fl.mode, "uniform, vertex or worst_axis")
      ->check(CLI::IsMember({"uniform", "vertex", "worst_axis"}));
  val_cmd->add_option("--seed", fl.seed, "rollout seed (default: config seed)");

  auto* mu_cmd = app.add_subcommand("mu-estimate", "Monte-Carlo curvature estimate as JSON");
  mu_cmd->add_option("--config", fl.config, "problem config")->required()->check(CLI::ExistingFile);
  mu_cmd->add_option("--samples", fl.samples, "number of samples (default: config)")->check(CLI::PositiveNumber);
  mu_cmd->add_option("--seed", fl.seed, "sampling seed (default: config)");
  mu_cmd->add_option("--out", fl.out, "output directory for mu.json; '-' prints to stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*solve_cmd) return cmd_solve(fl);
    if (*val_cmd) return cmd_validate(fl);
    if (*mu_cmd) return cmd_mu_estimate(fl);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const json::exception& e) {
    std::cerr << "solution file error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInternal;
  }
  return kUsage;
}
