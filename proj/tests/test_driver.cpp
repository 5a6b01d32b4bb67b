#include "aosbqp/driver.hpp"
#include "aosbqp/kv_config.hpp"
#include "aosbqp/result_io.hpp"

#include "doctest.h"
#include "test_support.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace aosbqp;
using testing_support::case30;
using testing_support::case5;

namespace {

SolverConfig five_bus_config() {
  return SolverConfig::from_kv(KeyValueConfig::load(testing_support::data_path("scenario_5bus.cfg")));
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("key-value config parsing") {
  const KeyValueConfig kv = KeyValueConfig::parse("# comment\n\nrho0 = 2.5\nsingle_shot = true\nouter_max_iters=7\nrho0 = 3\n");
  CHECK(kv.get_double("rho0") == 3.0);
  CHECK(kv.get_bool("single_shot") == true);
  CHECK(kv.get_int("outer_max_iters") == 7);
  CHECK_FALSE(kv.get("missing").has_value());
  CHECK_THROWS_AS(KeyValueConfig::parse("no equals sign\n"), ConfigError);
  CHECK_THROWS_AS(KeyValueConfig::parse("rho0 = abc\n").get_double("rho0"), ConfigError);
  CHECK_THROWS_AS(SolverConfig::from_kv(KeyValueConfig::parse("rh0 = 1\n")), ConfigError);
  CHECK_THROWS_AS(SolverConfig::from_kv(KeyValueConfig::parse("beta = 0.5\n")), std::invalid_argument);
}

TEST_CASE("solver config reads every key") {
  const SolverConfig c = SolverConfig::from_kv(KeyValueConfig::parse(
      "variant = relaxed-two\nrho0 = 0.5\nbeta = 4\nrho_max = 1e9\neps = 1e-7\nouter_eps = 1e-5\nouter_max_iters = 9\n"
      "seed = 42\nsingle_shot = true\nfull_balance_rows = false\nreg_floor = 0.1\nao1_max_iterations = 150\n"
      "apply_scenario = true\nscenario.pd_shift = 1.5\nscenario.shift_mode = multiplicative\n"
      "scenario.demand_set_mode = loaded-buses\n"));
  CHECK(c.variant == Ao2Variant::RelaxedTwo);
  CHECK(c.schedule.rho0 == 0.5);
  CHECK(c.schedule.beta == 4.0);
  CHECK(c.schedule.rho_max == 1e9);
  CHECK(c.schedule.eps == 1e-7);
  CHECK(c.outer_eps == 1e-5);
  CHECK(c.outer_max_iters == 9);
  CHECK(c.seed == 42);
  CHECK(c.scenario.rank_seed == 42);
  CHECK(c.single_shot);
  CHECK(c.subproblem.reg_floor == 0.1);
  CHECK(c.ao1.max_iterations == 150);
  CHECK(c.apply_scenario);
  CHECK(c.scenario.pd_shift == 1.5);
  CHECK(c.scenario.shift_mode == ShiftMode::Multiplicative);
  CHECK(c.scenario.demand_set_mode == DemandSetMode::LoadedBuses);
}

TEST_CASE("supply-adequate cases keep every demand on") {
  for (const GridCase& g : {case5(), case30()}) {
    for (Ao2Variant v : {Ao2Variant::Mixed, Ao2Variant::RelaxedOne, Ao2Variant::RelaxedTwo}) {
      SolverConfig c;
      c.variant = v;
      const SolveResult r = run_ao_sbqp(g, c);
      CHECK(r.status == "converged");
      CHECK(r.switches == SwitchVector::Ones(static_cast<Eigen::Index>(g.num_demands())));
    }
  }
}

TEST_CASE("oracle enumerates and orders the five-bus mismatch case") {
  const SolverConfig c = five_bus_config();
  ScenarioConfig sc = c.scenario;
  const GridCase g = apply_scenario(case5(), sc);
  const auto entries = enumerate_oracle(g);
  REQUIRE(entries.size() == 8);
  bool seen_infeasible = false;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    CHECK(e.objective == doctest::Approx(delivered_objective(g, e.y)));
    if (!e.feasible) seen_infeasible = true;
    CHECK_FALSE((e.feasible && seen_infeasible));
    if (i > 0 && e.feasible) CHECK(entries[i - 1].objective >= e.objective);
    if (e.y.sum() == 0.0) {
      CHECK(e.feasible);
      CHECK(e.objective == 0.0);
    }
  }
  CHECK(entries.back().y == SwitchVector::Ones(3));
  CHECK_FALSE(entries.back().feasible);
}

TEST_CASE("oracle refuses too many demands") {
  GridCase g = apply_scenario(case30(), ScenarioConfig{});
  CHECK(g.num_demands() > static_cast<std::size_t>(kOracleMaxDemands));
  CHECK_THROWS_AS(enumerate_oracle(g), std::invalid_argument);
}

TEST_CASE("five-bus solve lands on a feasible enumerated point") {
  const SolverConfig c = five_bus_config();
  const SolveResult r = run_ao_sbqp(case5(), c);
  CHECK(r.status == "converged");
  CHECK(r.max_constraint <= 1e-6);
  const auto entries = enumerate_oracle(apply_scenario(case5(), c.scenario));
  bool matched = false;
  for (const auto& e : entries) matched = matched || (e.feasible && e.y == r.switches);
  CHECK(matched);
  CHECK(r.objective <= entries.front().objective + 1e-6);
}

TEST_CASE("single-shot runs one AO2 pass") {
  SolverConfig c = five_bus_config();
  c.single_shot = true;
  c.variant = Ao2Variant::RelaxedOne;
  const SolveResult r = run_ao_sbqp(case5(), c);
  CHECK(r.outer_iterations == 2);
  CHECK(r.ao2_traces.size() == 1);
}

TEST_CASE("infeasible final point raises with exit code 2") {
  // The slack generator must produce at least 0.5 p.u. but the only load is
  // 0.2 p.u. and the line is nearly lossless, so no y balances.
  const char* text = R"(mpc.baseMVA = 100;
mpc.bus = [
	1	3	0	0	0	0	1	1	0	0	1	1.1	0.9;
	2	1	20	5	0	0	1	1	0	0	1	1.1	0.9;
];
mpc.gen = [
	1	0	0	100	-100	1	100	1	200	50;
];
mpc.branch = [
	1	2	0.0001	1.0;
];
)";
  try {
    run_ao_sbqp(parse_case(text), SolverConfig{});
    FAIL("expected failure");
  } catch (const SolveFailure& e) {
    CHECK(e.kind() == SolveFailure::Kind::Infeasible);
    CHECK(e.exit_code() == 2);
    CHECK(e.partial().status == "infeasible");
  }
}

TEST_CASE("result documents round-trip in both formats") {
  const SolveResult r = run_ao_sbqp(case5(), five_bus_config());
  const ResultDocument d = make_document(r);
  for (OutputFormat f : {OutputFormat::KeyValue, OutputFormat::Json}) {
    CHECK(parse_result(emit_result(d, f), f) == d);
  }
  CHECK(parse_output_format("json") == OutputFormat::Json);
  CHECK_THROWS_AS(parse_output_format("xml"), std::invalid_argument);
}

TEST_CASE("written outputs: trace rows match inner iterations, results are deterministic") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "aosbqp_test_outputs";
  fs::remove_all(dir);
  const SolveResult r = run_ao_sbqp(case5(), five_bus_config());
  write_outputs((dir / "a").string(), r, OutputFormat::KeyValue);
  write_outputs((dir / "b").string(), run_ao_sbqp(case5(), five_bus_config()), OutputFormat::KeyValue);
  CHECK(slurp(dir / "a" / "result.txt") == slurp(dir / "b" / "result.txt"));
  CHECK(slurp(dir / "a" / "trace.csv") == slurp(dir / "b" / "trace.csv"));
  std::size_t rows = 0;
  for (const auto& t : r.ao2_traces) rows += t.rows.size();
  const std::string trace = slurp(dir / "a" / "trace.csv");
  CHECK(static_cast<std::size_t>(std::count(trace.begin(), trace.end(), '\n')) == rows + 1);
  CHECK(trace.rfind("outer,iteration,rho,alpha,phi,psi,status,y_2,y_3,y_4\n", 0) == 0);
  const ResultDocument d = parse_result(slurp(dir / "a" / "result.txt"), OutputFormat::KeyValue);
  CHECK(d.trace_rows == static_cast<int>(rows));
  CHECK(fs::exists(dir / "a" / "timing.txt"));
  CHECK_THROWS(write_outputs("/proc/aosbqp_cannot_write", r, OutputFormat::KeyValue));
  fs::remove_all(dir);
}

TEST_CASE("random interior points stay inside the bounds") {
  const PowerModel m(case30());
  for (std::uint64_t s = 0; s < 10; ++s) {
    const ModelPoint p = random_interior_point(m, s);
    CHECK((p.state.stacked() - m.x_lower()).minCoeff() > 0);
    CHECK((m.x_upper() - p.state.stacked()).minCoeff() > 0);
    CHECK((p.input.stacked() - m.u_lower()).minCoeff() > 0);
    CHECK(p.y.minCoeff() > 0);
    CHECK(p.y.maxCoeff() < 1);
  }
}
