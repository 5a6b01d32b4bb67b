#pragma once

#include "aosbqp/ao1_opf.hpp"
#include "aosbqp/ao2_sbqp.hpp"
#include "aosbqp/grid_model.hpp"
#include "aosbqp/kv_config.hpp"
#include "aosbqp/power_equations.hpp"

#include <algorithm>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace aosbqp {

struct SolverConfig {
  PenaltySchedule schedule;
  Ao2Variant variant = Ao2Variant::Mixed;
  double outer_eps = 1e-6;
  int outer_max_iters = 20;
  /// Rank seed of the scenario when one is applied.
  std::uint64_t seed = 1;
  /// One AO2 pass followed by the final AO1, no outer iteration.
  bool single_shot = false;
  /// Apply `scenario` to the case before solving.
  bool apply_scenario = false;
  ScenarioConfig scenario;
  SubproblemOptions subproblem;
  Ao1Options ao1;

  void validate() const;
  /// Keys: variant, rho0, beta, rho_max, eps, outer_eps, outer_max_iters,
  /// seed, single_shot, full_balance_rows, reg_floor, ao1_max_iterations,
  /// apply_scenario and scenario.<key> for every scenario key.
  static SolverConfig from_kv(const KeyValueConfig& kv);
};

/// Scenario keys: pd_shift, qd_shift, shift_mode, qg_bound_scale,
/// pg_upper_scale, rank_levels, rank_seed, demand_set_mode.
ScenarioConfig scenario_from_kv(const KeyValueConfig& kv, const std::string& prefix = "");

struct StageTimings {
  double ao1_seconds = 0.0;
  double ao2_seconds = 0.0;
  double total_seconds = 0.0;
};

struct SolveResult {
  std::string variant;
  std::string status;
  State state;
  InputVector input;
  SwitchVector switches;
  /// Bus ids of switches / input entries, in order.
  std::vector<int> demand_buses;
  std::vector<int> generator_buses;
  /// sum y r pd, sum y pd, sum y qd.
  double objective = 0.0;
  double supplied_active = 0.0;
  double supplied_reactive = 0.0;
  /// Largest phi of an AO2 exit iterate before snapping, over all AO2 runs.
  double final_phi = 0.0;
  /// Largest entry of C at the reported point.
  double max_constraint = 0.0;
  int outer_iterations = 0;
  /// Most penalty subproblem solves in one AO2 run (the zero-penalty solve excluded).
  int penalty_iterations = 0;
  std::vector<SbqpTrace> ao2_traces;
  StageTimings timings;
};

class SolveFailure : public std::runtime_error {
 public:
  enum class Kind { Infeasible, NonConvergence };
  SolveFailure(Kind kind, const std::string& what, SolveResult partial)
      : std::runtime_error(what), kind_(kind), partial_(std::move(partial)) {}
  Kind kind() const { return kind_; }
  const SolveResult& partial() const { return partial_; }
  int exit_code() const { return kind_ == Kind::Infeasible ? 2 : 3; }

 private:
  Kind kind_;
  SolveResult partial_;
};

/// Alternates AO1 and AO2 from y = 1 until consecutive AO1 solutions agree
/// in the infinity norm over (x, u). Throws SolveFailure.
SolveResult run_ao_sbqp(const GridCase& grid, const SolverConfig& cfg);

struct OracleEntry {
  SwitchVector y;
  bool feasible = false;
  double objective = 0.0;
  Ao1Status status = Ao1Status::MaxIterations;
};

inline constexpr Eigen::Index kOracleMaxDemands = 20;

/// One AO1 per binary y. Feasible entries first by decreasing objective,
/// then infeasible ones; ties keep enumeration order. Throws
/// std::invalid_argument above kOracleMaxDemands demands.
std::vector<OracleEntry> enumerate_oracle(const GridCase& grid, const Ao1Options& opts = {});

/// Largest relative deviation of each analytic derivative from central
/// differences, relative to max(1, |fd|).
struct DerivativeReport {
  double dP_dx = 0.0;
  double dE = 0.0;
  double dC = 0.0;
  double hessian_y = 0.0;
  int points = 0;
  double max() const { return std::max({dP_dx, dE, dC, hessian_y}); }
};

DerivativeReport check_derivatives(const PowerModel& model, int points, std::uint64_t seed, double h = 1e-6);

/// Random point strictly inside the bounds (angles within +-0.3 rad).
struct ModelPoint {
  State state;
  InputVector input;
  SwitchVector y;
};
ModelPoint random_interior_point(const PowerModel& model, std::uint64_t seed);

}  // namespace aosbqp
