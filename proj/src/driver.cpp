#include "aosbqp/driver.hpp"

#include "aosbqp/kernels.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <tuple>

namespace aosbqp {

void SolverConfig::validate() const {
  schedule.validate();
  if (!(outer_eps > 0)) throw std::invalid_argument("outer_eps must be positive");
  if (outer_max_iters < 1) throw std::invalid_argument("outer_max_iters must be >= 1");
  if (!(subproblem.reg_floor > 0)) throw std::invalid_argument("reg_floor must be positive");
  if (ao1.max_iterations < 1) throw std::invalid_argument("ao1_max_iterations must be >= 1");
  if (apply_scenario) scenario.validate();
}

ScenarioConfig scenario_from_kv(const KeyValueConfig& kv, const std::string& prefix) {
  ScenarioConfig cfg;
  if (auto v = kv.get_double(prefix + "pd_shift")) cfg.pd_shift = *v;
  if (auto v = kv.get_double(prefix + "qd_shift")) cfg.qd_shift = *v;
  if (auto v = kv.get(prefix + "shift_mode")) cfg.shift_mode = parse_shift_mode(*v);
  if (auto v = kv.get_double(prefix + "qg_bound_scale")) cfg.qg_bound_scale = *v;
  if (auto v = kv.get_double(prefix + "pg_upper_scale")) cfg.pg_upper_scale = *v;
  if (auto v = kv.get_int(prefix + "rank_levels")) cfg.rank_levels = static_cast<int>(*v);
  if (auto v = kv.get_int(prefix + "rank_seed")) cfg.rank_seed = static_cast<std::uint64_t>(*v);
  if (auto v = kv.get(prefix + "demand_set_mode")) cfg.demand_set_mode = parse_demand_set_mode(*v);
  return cfg;
}

SolverConfig SolverConfig::from_kv(const KeyValueConfig& kv) {
  kv.expect_only({"variant", "rho0", "beta", "rho_max", "eps", "outer_eps", "outer_max_iters", "seed", "single_shot",
                  "full_balance_rows", "reg_floor", "ao1_max_iterations", "apply_scenario", "scenario.pd_shift",
                  "scenario.qd_shift", "scenario.shift_mode", "scenario.qg_bound_scale", "scenario.pg_upper_scale",
                  "scenario.rank_levels", "scenario.demand_set_mode"});
  SolverConfig cfg;
  if (auto v = kv.get("variant")) cfg.variant = parse_ao2_variant(*v);
  if (auto v = kv.get_double("rho0")) cfg.schedule.rho0 = *v;
  if (auto v = kv.get_double("beta")) cfg.schedule.beta = *v;
  if (auto v = kv.get_double("rho_max")) cfg.schedule.rho_max = *v;
  if (auto v = kv.get_double("eps")) cfg.schedule.eps = *v;
  if (auto v = kv.get_double("outer_eps")) cfg.outer_eps = *v;
  if (auto v = kv.get_int("outer_max_iters")) cfg.outer_max_iters = static_cast<int>(*v);
  if (auto v = kv.get_int("seed")) cfg.seed = static_cast<std::uint64_t>(*v);
  if (auto v = kv.get_bool("single_shot")) cfg.single_shot = *v;
  if (auto v = kv.get_bool("full_balance_rows")) cfg.subproblem.full_balance_rows = *v;
  if (auto v = kv.get_double("reg_floor")) cfg.subproblem.reg_floor = *v;
  if (auto v = kv.get_int("ao1_max_iterations")) cfg.ao1.max_iterations = static_cast<int>(*v);
  if (auto v = kv.get_bool("apply_scenario")) cfg.apply_scenario = *v;
  cfg.scenario = scenario_from_kv(kv, "scenario.");
  cfg.scenario.rank_seed = cfg.seed;
  cfg.validate();
  return cfg;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Eigen::VectorXd joint(const Ao1Result& r) {
  Eigen::VectorXd z(2 * r.state.v.size() + 2 * r.input.pg.size());
  z << r.state.stacked(), r.input.stacked();
  return z;
}

void fill_point(SolveResult& out, const PowerModel& model, const Ao1Result& ao1, const SwitchVector& y) {
  out.state = ao1.state;
  out.input = ao1.input;
  out.switches = y;
  out.objective = delivered_objective(model.grid(), y);
  out.supplied_active = model.demand_p().dot(y);
  out.supplied_reactive = model.demand_q().dot(y);
  out.max_constraint = model.constraints(ao1.state, ao1.input, y).maxCoeff();
}

}  // namespace

SolveResult run_ao_sbqp(const GridCase& input_grid, const SolverConfig& cfg) {
  cfg.validate();
  const auto t_start = Clock::now();
  GridCase grid = input_grid;
  if (cfg.apply_scenario) {
    ScenarioConfig sc = cfg.scenario;
    sc.rank_seed = cfg.seed;
    grid = apply_scenario(grid, sc);
  }
  grid.validate();
  const PowerModel model(grid);

  SolveResult out;
  out.variant = to_string(cfg.variant);
  for (const auto& d : grid.demands) out.demand_buses.push_back(d.bus);
  for (const auto& gen : grid.generators) out.generator_buses.push_back(gen.bus);
  SwitchVector y = SwitchVector::Ones(model.num_demands());
  std::optional<Eigen::VectorXd> previous;

  for (int outer = 1;; ++outer) {
    out.outer_iterations = outer;
    auto t0 = Clock::now();
    const Ao1Result ao1 = solve_ao1(model, y, std::nullopt, cfg.ao1);
    out.timings.ao1_seconds += seconds_since(t0);
    fill_point(out, model, ao1, y);

    const Eigen::VectorXd z = joint(ao1);
    const bool settled = previous && (z - *previous).lpNorm<Eigen::Infinity>() <= cfg.outer_eps;
    const bool last_shot = cfg.single_shot && outer == 2;
    if (settled || last_shot) {
      out.timings.total_seconds = seconds_since(t_start);
      if (ao1.status != Ao1Status::Converged || out.max_constraint > 1e-6) {
        out.status = "infeasible";
        throw SolveFailure(SolveFailure::Kind::Infeasible,
                           std::string("AO1 at the final switches is ") + to_string(ao1.status) +
                               " (balance residual " + std::to_string(ao1.balance_residual) + ")",
                           out);
      }
      out.status = "converged";
      return out;
    }
    if (outer >= cfg.outer_max_iters) {
      out.status = "max-iterations";
      out.timings.total_seconds = seconds_since(t_start);
      throw SolveFailure(SolveFailure::Kind::NonConvergence,
                         "outer loop reached " + std::to_string(cfg.outer_max_iters) + " iterations", out);
    }
    previous = z;

    const LinearizationPoint lin{ao1.state, ao1.input, y, ao1.duals};
    t0 = Clock::now();
    try {
      Ao2Result ao2 = run_ao2(model, lin, cfg.schedule, cfg.variant, cfg.subproblem);
      out.timings.ao2_seconds += seconds_since(t0);
      out.final_phi = std::max(out.final_phi, phi(ao2.y_relaxed));
      out.penalty_iterations = std::max(out.penalty_iterations, static_cast<int>(ao2.trace.rows.size()) - 1);
      out.ao2_traces.push_back(std::move(ao2.trace));
      y = ao2.y;
    } catch (const Ao2NonConvergence& e) {
      out.ao2_traces.push_back(e.trace());
      out.status = "max-iterations";
      out.timings.ao2_seconds += seconds_since(t0);
      out.timings.total_seconds = seconds_since(t_start);
      throw SolveFailure(SolveFailure::Kind::NonConvergence, e.what(), out);
    }
  }
}

std::vector<OracleEntry> enumerate_oracle(const GridCase& grid, const Ao1Options& opts) {
  const PowerModel model(grid);
  const Eigen::Index nd = model.num_demands();
  if (nd > kOracleMaxDemands) {
    throw std::invalid_argument("oracle refuses " + std::to_string(nd) + " demands (limit " +
                                std::to_string(kOracleMaxDemands) + ")");
  }
  const long long count = 1LL << nd;
  std::vector<OracleEntry> entries(static_cast<std::size_t>(count));
#pragma omp parallel for schedule(dynamic)
  for (long long mask = 0; mask < count; ++mask) {
    SwitchVector y(nd);
    for (Eigen::Index d = 0; d < nd; ++d) y[d] = (mask >> d) & 1LL ? 1.0 : 0.0;
    const Ao1Result r = solve_ao1(model, y, std::nullopt, opts);
    OracleEntry& e = entries[static_cast<std::size_t>(mask)];
    e.y = y;
    e.status = r.status;
    e.feasible = r.status == Ao1Status::Converged;
    e.objective = delivered_objective(model.grid(), y);
  }
  std::stable_sort(entries.begin(), entries.end(), [](const OracleEntry& a, const OracleEntry& b) {
    if (a.feasible != b.feasible) return a.feasible;
    return a.objective > b.objective;
  });
  return entries;
}

ModelPoint random_interior_point(const PowerModel& model, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Eigen::Index n = model.num_buses(), g = model.num_generators(), nd = model.num_demands();
  ModelPoint p{State{Eigen::VectorXd(n), Eigen::VectorXd(n)}, InputVector{Eigen::VectorXd(g), Eigen::VectorXd(g)},
               SwitchVector(nd)};
  for (Eigen::Index k = 0; k < n; ++k) {
    const Bus& bus = model.grid().buses[k];
    p.state.v[k] = bus.v_min + (0.1 + 0.8 * unit(rng)) * (bus.v_max - bus.v_min);
    p.state.theta[k] = std::clamp(-0.3 + 0.6 * unit(rng), bus.theta_min, bus.theta_max);
  }
  for (Eigen::Index j = 0; j < g; ++j) {
    const Generator& gen = model.grid().generators[j];
    p.input.pg[j] = gen.pg_min + (0.1 + 0.8 * unit(rng)) * (gen.pg_max - gen.pg_min);
    p.input.qg[j] = gen.qg_min + (0.1 + 0.8 * unit(rng)) * (gen.qg_max - gen.qg_min);
  }
  for (Eigen::Index d = 0; d < nd; ++d) p.y[d] = 0.05 + 0.9 * unit(rng);
  return p;
}

namespace {

double rel_err(const Eigen::MatrixXd& analytic, const Eigen::MatrixXd& fd) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < fd.rows(); ++i) {
    for (Eigen::Index j = 0; j < fd.cols(); ++j) {
      worst = std::max(worst, std::abs(analytic(i, j) - fd(i, j)) / std::max(1.0, std::abs(fd(i, j))));
    }
  }
  return worst;
}

}  // namespace

DerivativeReport check_derivatives(const PowerModel& model, int points, std::uint64_t seed, double h) {
  const Eigen::Index n = model.num_buses(), g = model.num_generators(), nd = model.num_demands();
  const Eigen::Index nx = 2 * n, nu = 2 * g;
  const ConstraintLayout lay = model.layout();
  DerivativeReport rep;
  rep.points = points;
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  for (int p = 0; p < points; ++p) {
    const ModelPoint pt = random_interior_point(model, seed + static_cast<std::uint64_t>(p));
    Eigen::VectorXd w(nx + nu + nd);
    w << pt.state.stacked(), pt.input.stacked(), pt.y;
    auto split = [&](const Eigen::VectorXd& v) {
      return std::tuple{State::from_stacked(v.head(nx)), InputVector::from_stacked(v.segment(nx, nu)),
                        SwitchVector(v.tail(nd))};
    };

    const Jacobians jac = model.jacobians(pt.state, pt.input, pt.y);

    const kernels::VectorFunction outflow = [&](const Eigen::VectorXd& x) {
      return Eigen::VectorXd(model.node_outflow(State::from_stacked(x)));
    };
    rep.dP_dx = std::max(rep.dP_dx, rel_err(jac.dP_dx, kernels::central_difference_serial(outflow, w.head(nx), h)));

    const kernels::VectorFunction energy = [&](const Eigen::VectorXd& v) {
      auto [x, u, y] = split(v);
      return Eigen::VectorXd::Constant(1, model.objective(x, u, y)).eval();
    };
    rep.dE = std::max(rep.dE, rel_err(jac.dE.transpose(), kernels::central_difference_serial(energy, w, h)));

    const kernels::VectorFunction cons = [&](const Eigen::VectorXd& v) {
      auto [x, u, y] = split(v);
      return model.constraints(x, u, y);
    };
    rep.dC = std::max(rep.dC, rel_err(jac.dC, kernels::central_difference_serial(cons, w, h)));

    // Q against differences of grad_y L0 = grad_y E - dC/dy^T duals.
    Eigen::VectorXd duals(lay.size());
    for (Eigen::Index i = 0; i < duals.size(); ++i) duals[i] = unit(rng);
    const kernels::VectorFunction grad_l = [&](const Eigen::VectorXd& y) {
      const Jacobians j = model.jacobians(pt.state, pt.input, y);
      return Eigen::VectorXd(j.dE.tail(nd) - j.dC.rightCols(nd).transpose() * duals);
    };
    rep.hessian_y =
        std::max(rep.hessian_y, rel_err(model.hessian_y(duals), kernels::central_difference_serial(grad_l, pt.y, h)));
  }
  return rep;
}

}  // namespace aosbqp
