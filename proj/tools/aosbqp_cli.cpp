// Command-line front end: solve, oracle, check, scenario.
// Exit codes: 0 converged, 1 usage or failed check, 2 infeasible, 3 non-convergence.

#include "aosbqp/driver.hpp"
#include "aosbqp/result_io.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

using namespace aosbqp;

namespace {

struct CommonArgs {
  std::string case_path;
  std::string config_path;
  std::string variant;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  std::string format = "kv";
};

SolverConfig load_solver_config(const CommonArgs& a) {
  SolverConfig cfg = a.config_path.empty() ? SolverConfig{} : SolverConfig::from_kv(KeyValueConfig::load(a.config_path));
  if (!a.variant.empty()) cfg.variant = parse_ao2_variant(a.variant);
  if (a.seed) {
    cfg.seed = *a.seed;
    cfg.scenario.rank_seed = *a.seed;
  }
  cfg.validate();
  return cfg;
}

GridCase effective_case(const GridCase& grid, const SolverConfig& cfg) {
  if (!cfg.apply_scenario) return grid;
  ScenarioConfig sc = cfg.scenario;
  sc.rank_seed = cfg.seed;
  return apply_scenario(grid, sc);
}

void print_summary(const SolveResult& r) {
  std::printf("variant            %s\n", r.variant.c_str());
  std::printf("status             %s\n", r.status.c_str());
  std::printf("objective          %.10g\n", r.objective);
  std::printf("supplied active    %.10g p.u.\n", r.supplied_active);
  std::printf("supplied reactive  %.10g p.u.\n", r.supplied_reactive);
  std::printf("|phi(y)|           %.3e\n", r.final_phi);
  std::printf("outer iterations   %d\n", r.outer_iterations);
  std::printf("penalty iterations %d\n", r.penalty_iterations);
  std::printf("wall time          %.4f s\n", r.timings.total_seconds);
  std::printf("y                 ");
  for (Eigen::Index k = 0; k < r.switches.size(); ++k) std::printf(" %d", static_cast<int>(r.switches[k]));
  std::printf("\n");
}

int cmd_solve(const CommonArgs& a) {
  const SolverConfig cfg = load_solver_config(a);
  const OutputFormat fmt = parse_output_format(a.format);
  const GridCase grid = load_case(a.case_path);
  try {
    const SolveResult r = run_ao_sbqp(grid, cfg);
    write_outputs(a.out_dir, r, fmt);
    print_summary(r);
    return 0;
  } catch (const SolveFailure& e) {
    std::fprintf(stderr, "solve failed: %s\n", e.what());
    write_outputs(a.out_dir, e.partial(), fmt);
    print_summary(e.partial());
    return e.exit_code();
  }
}

int cmd_oracle(const CommonArgs& a, bool compare) {
  const SolverConfig cfg = load_solver_config(a);
  const GridCase grid = effective_case(load_case(a.case_path), cfg);
  const auto entries = enumerate_oracle(grid, cfg.ao1);

  std::filesystem::create_directories(a.out_dir);
  std::ofstream csv(a.out_dir + "/oracle.csv");
  if (!csv) throw std::runtime_error("cannot write " + a.out_dir + "/oracle.csv");
  csv << "rank,feasible,objective,status,y\n";
  std::printf("%-5s %-9s %-14s %s\n", "rank", "feasible", "objective", "y");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    std::string ys;
    for (Eigen::Index k = 0; k < e.y.size(); ++k) ys += e.y[k] > 0.5 ? '1' : '0';
    char obj[40];
    std::snprintf(obj, sizeof obj, "%.17g", e.objective);
    csv << i + 1 << ',' << (e.feasible ? 1 : 0) << ',' << obj << ',' << to_string(e.status) << ',' << ys << "\n";
    std::printf("%-5zu %-9s %-14.8g %s\n", i + 1, e.feasible ? "yes" : "no", e.objective, ys.c_str());
  }
  if (!compare) return 0;

  SolverConfig solve_cfg = cfg;
  solve_cfg.apply_scenario = false;
  try {
    const SolveResult r = run_ao_sbqp(grid, solve_cfg);
    const double best = entries.front().feasible ? entries.front().objective : 0.0;
    std::printf("ao-sbqp objective %.10g, enumerated optimum %.10g, gap %.3e\n", r.objective, best,
                best - r.objective);
    return 0;
  } catch (const SolveFailure& e) {
    std::fprintf(stderr, "solve failed: %s\n", e.what());
    return e.exit_code();
  }
}

int cmd_check(const CommonArgs& a, int points) {
  const SolverConfig cfg = load_solver_config(a);
  const GridCase grid = effective_case(load_case(a.case_path), cfg);
  const PowerModel model(grid);
  const std::uint64_t seed = a.seed.value_or(1);
  bool ok = true;

  const DerivativeReport rep = check_derivatives(model, points, seed);
  std::printf("derivatives at %d points: dP/dx %.2e  dE %.2e  dC %.2e  Q %.2e\n", rep.points, rep.dP_dx, rep.dE,
              rep.dC, rep.hessian_y);
  ok = ok && rep.max() <= 1e-6;

  const AdmittanceMatrix& y = model.admittance();
  const double sym = std::max((y.G - y.G.transpose()).cwiseAbs().maxCoeff(), (y.B - y.B.transpose()).cwiseAbs().maxCoeff());
  const double lap = std::max(y.G.rowwise().sum().cwiseAbs().maxCoeff(), y.B.rowwise().sum().cwiseAbs().maxCoeff());
  std::printf("admittance: asymmetry %.2e  row-sum %.2e\n", sym, lap);
  ok = ok && sym <= 1e-12 && lap <= 1e-12;

  double nsum = 0.0;
  for (int p = 0; p < points; ++p) {
    const ModelPoint pt = random_interior_point(model, seed + 1000 + static_cast<std::uint64_t>(p));
    const PowerVector out = model.node_outflow(pt.state);
    for (Eigen::Index k = 0; k < model.num_buses(); ++k) {
      double sp = 0.0, sq = 0.0;
      for (const LineEnd& e : model.neighbors()[k]) {
        const auto [fp, fq] = model.line_flow(pt.state, k, e.other);
        sp += fp;
        sq += fq;
      }
      nsum = std::max({nsum, std::abs(sp - out[2 * k]), std::abs(sq - out[2 * k + 1])});
    }
  }
  std::printf("neighbor-sum identity: %.2e\n", nsum);
  ok = ok && nsum <= 1e-12;
  std::printf("%s\n", ok ? "check passed" : "check FAILED");
  return ok ? 0 : 1;
}

int cmd_scenario(const CommonArgs& a, const std::string& out_path) {
  ScenarioConfig sc;
  if (!a.config_path.empty()) {
    // Either a solver config (scenario.* keys) or a bare scenario file.
    const KeyValueConfig kv = KeyValueConfig::load(a.config_path);
    const bool solver_layout = std::any_of(kv.entries().begin(), kv.entries().end(),
                                           [](const auto& e) { return e.first.rfind("scenario.", 0) == 0; });
    sc = solver_layout ? SolverConfig::from_kv(kv).scenario : scenario_from_kv(kv);
  }
  if (a.seed) sc.rank_seed = *a.seed;
  const GridCase out = apply_scenario(load_case(a.case_path), sc);
  const std::string text = serialize_case(out);
  if (out_path.empty() || out_path == "-") {
    std::cout << text;
  } else {
    std::ofstream f(out_path);
    if (!f) throw std::runtime_error("cannot write " + out_path);
    f << text;
  }
  return 0;
}

void add_common(CLI::App* sub, CommonArgs& a, bool outputs) {
  sub->add_option("--case", a.case_path, "Case file (MATPOWER layout)")->required()->check(CLI::ExistingFile);
  sub->add_option("--config", a.config_path, "Key-value config file")->check(CLI::ExistingFile);
  sub->add_option("--seed", a.seed, "Rank seed (overrides the config)");
  if (outputs) {
    sub->add_option("--variant", a.variant, "mixed | relaxed-one | relaxed-two");
    sub->add_option("--out-dir", a.out_dir, "Directory for result files");
    sub->add_option("--format", a.format, "kv | json")->check(CLI::IsMember({"kv", "json"}));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"AO-SBQP demand shut-off solver"};
  app.require_subcommand(1);
  CommonArgs a;
  bool compare = false;
  int points = 20;
  std::string out_path;

  auto* solve = app.add_subcommand("solve", "Run the AO1/AO2 alternation");
  add_common(solve, a, true);
  auto* oracle = app.add_subcommand("oracle", "Enumerate every binary y with one AO1 each");
  add_common(oracle, a, true);
  oracle->add_flag("--compare", compare, "Also run the solver and report the gap");
  auto* check = app.add_subcommand("check", "Derivative and invariant self-tests");
  add_common(check, a, false);
  check->add_option("--points", points, "Random points for the derivative check");
  auto* scenario = app.add_subcommand("scenario", "Write the demand-to-power mismatch case");
  add_common(scenario, a, false);
  scenario->add_option("--out", out_path, "Output case file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*solve) return cmd_solve(a);
    if (*oracle) return cmd_oracle(a, compare);
    if (*check) return cmd_check(a, points);
    if (*scenario) return cmd_scenario(a, out_path);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
