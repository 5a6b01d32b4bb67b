#include "aosbqp/grid_model.hpp"

#include "doctest.h"
#include "test_support.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

using namespace aosbqp;
using testing_support::case30;
using testing_support::case5;

namespace {

std::vector<int> ids_of_generators(const GridCase& g) {
  std::vector<int> out;
  for (const auto& gen : g.generators) out.push_back(gen.bus);
  return out;
}

ParseError::Kind parse_error_kind(const std::string& text) {
  try {
    parse_case(text);
  } catch (const ParseError& e) {
    return e.kind();
  }
  FAIL("no ParseError thrown");
  return ParseError::Kind::Invalid;
}

std::string replace_once(std::string s, const std::string& from, const std::string& to) {
  const auto pos = s.find(from);
  REQUIRE(pos != std::string::npos);
  return s.replace(pos, from.size(), to);
}

}  // namespace

TEST_CASE("five-bus case has the expected generator and demand sets") {
  const GridCase g = case5();
  CHECK(g.num_buses() == 5);
  CHECK(ids_of_generators(g) == std::vector<int>{1, 3, 4, 5});
  std::vector<int> d;
  for (const auto& x : g.demands) d.push_back(x.bus);
  CHECK(d == std::vector<int>{2, 3, 4});
  CHECK(g.buses[g.slack_index()].id == 4);
}

TEST_CASE("two source generators on one bus are merged by summing limits") {
  const GridCase g = case5();
  // Bus 1 carries two units of 40 and 170 MW.
  CHECK(g.generators[0].pg_max == doctest::Approx(2.1));
}

TEST_CASE("thirty-bus case has six generators") {
  const GridCase g = case30();
  CHECK(g.num_buses() == 30);
  CHECK(ids_of_generators(g) == std::vector<int>{1, 2, 13, 22, 23, 27});
}

TEST_CASE("parse errors carry kind and line") {
  const std::string base = testing_support::kTwoBusCase;
  SUBCASE("unknown bus reference") {
    const auto text = replace_once(base, "\t1\t2\t0.0384", "\t1\t99\t0.0384");
    try {
      parse_case(text);
      FAIL("expected error");
    } catch (const ParseError& e) {
      CHECK(e.kind() == ParseError::Kind::UnknownBus);
      CHECK(std::string(e.what()).find("unknown bus reference") != std::string::npos);
      CHECK(e.line() == 11);
    }
  }
  SUBCASE("zero impedance") {
    CHECK(parse_error_kind(replace_once(base, "0.038461538461538464\t0.19230769230769232", "0\t0")) ==
          ParseError::Kind::ZeroImpedance);
  }
  SUBCASE("duplicate branch") {
    CHECK(parse_error_kind(replace_once(base, "0.19230769230769232;\n", "0.19230769230769232;\n\t2\t1\t0.1\t0.2;\n")) ==
          ParseError::Kind::DuplicateBranch);
  }
  SUBCASE("malformed row") {
    CHECK(parse_error_kind(replace_once(base, "\t2\t1\t50\t20", "\t2\t1\tfifty\t20")) == ParseError::Kind::MalformedRow);
  }
  SUBCASE("short row") {
    CHECK(parse_error_kind(replace_once(base, "\t1\t100\t1\t200\t0;", "\t1;")) == ParseError::Kind::MalformedRow);
  }
  SUBCASE("missing table") {
    CHECK(parse_error_kind(replace_once(base, "mpc.gen", "mpc.genx")) == ParseError::Kind::MissingTable);
  }
}

// MW values are divided by baseMVA on load, so a few per-unit values can move by an ulp.
bool close(double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(a)); }

bool same_case(const GridCase& a, const GridCase& b) {
  if (a.base_mva != b.base_mva || a.buses != b.buses || a.branches != b.branches) return false;
  if (a.generators.size() != b.generators.size() || a.demands.size() != b.demands.size()) return false;
  for (std::size_t i = 0; i < a.generators.size(); ++i) {
    const auto &x = a.generators[i], &y = b.generators[i];
    if (x.bus != y.bus || !close(x.pg_min, y.pg_min) || !close(x.pg_max, y.pg_max) || !close(x.qg_min, y.qg_min) ||
        !close(x.qg_max, y.qg_max))
      return false;
  }
  for (std::size_t i = 0; i < a.demands.size(); ++i) {
    const auto &x = a.demands[i], &y = b.demands[i];
    if (x.bus != y.bus || !close(x.pd, y.pd) || !close(x.qd, y.qd) || x.rank != y.rank) return false;
  }
  return true;
}

TEST_CASE("serialize then parse reproduces the case") {
  for (const GridCase& g : {case5(), case30(), apply_scenario(case30(), ScenarioConfig{})}) {
    CHECK(same_case(parse_case(serialize_case(g)), g));
  }
  CHECK(parse_case(serialize_case(case5())) == case5());
}

TEST_CASE("two-bus admittance matches the Laplacian definition") {
  const GridCase g = parse_case(testing_support::kTwoBusCase);
  CHECK(g.branches[0].g == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(g.branches[0].b == doctest::Approx(-5.0).epsilon(1e-12));
  const AdmittanceMatrix y = build_admittance(g);
  CHECK(y.G(0, 0) == doctest::Approx(1.0));
  CHECK(y.G(0, 1) == doctest::Approx(-1.0));
  CHECK(y.B(0, 0) == doctest::Approx(-5.0));
  CHECK(y.B(1, 0) == doctest::Approx(5.0));
}

TEST_CASE("admittance is symmetric, Laplacian, and sparse exactly off the branch list") {
  for (const GridCase& g : {case5(), case30()}) {
    const AdmittanceMatrix y = build_admittance(g);
    const auto n = static_cast<Eigen::Index>(g.num_buses());
    std::set<std::pair<Eigen::Index, Eigen::Index>> adj;
    for (const auto& br : g.branches) {
      const auto f = static_cast<Eigen::Index>(g.bus_index(br.from)), t = static_cast<Eigen::Index>(g.bus_index(br.to));
      adj.insert({f, t});
      adj.insert({t, f});
    }
    for (Eigen::Index k = 0; k < n; ++k) {
      CHECK(std::abs(y.G.row(k).sum()) <= 1e-12);
      CHECK(std::abs(y.B.row(k).sum()) <= 1e-12);
      for (Eigen::Index l = 0; l < n; ++l) {
        CHECK(y.G(k, l) == y.G(l, k));
        CHECK(y.B(k, l) == y.B(l, k));
        if (k != l) {
          const bool zero = y.G(k, l) == 0.0 && y.B(k, l) == 0.0;
          CHECK(zero == (adj.count({k, l}) == 0));
        }
      }
    }
  }
}

TEST_CASE("identity scenario leaves the case unchanged") {
  const GridCase g = case5();
  CHECK(apply_scenario(g, ScenarioConfig::identity()) == g);
}

TEST_CASE("default scenario on the 30-bus case") {
  const GridCase base = case30();
  const GridCase s = apply_scenario(base, ScenarioConfig{});
  CHECK(s.num_buses() * 2 == 60);
  CHECK(s.num_generators() * 2 == 12);
  CHECK(s.num_demands() == 30);
  double p0 = 0, q0 = 0, p1 = 0, q1 = 0;
  for (const auto& d : base.demands) {
    p0 += d.pd;
    q0 += d.qd;
  }
  for (const auto& d : s.demands) {
    p1 += d.pd;
    q1 += d.qd;
    CHECK(d.rank >= 1);
    CHECK(d.rank <= 5);
    CHECK(d.rank == std::floor(d.rank));
  }
  CHECK(p1 - p0 == doctest::Approx(2.5).epsilon(1e-12));
  CHECK(q1 - q0 == doctest::Approx(0.7).epsilon(1e-12));
  for (std::size_t j = 0; j < s.num_generators(); ++j) {
    CHECK(s.generators[j].pg_max == doctest::Approx(0.7 * base.generators[j].pg_max));
    CHECK(s.generators[j].qg_max == doctest::Approx(0.5 * base.generators[j].qg_max));
    CHECK(s.generators[j].qg_min == doctest::Approx(0.5 * base.generators[j].qg_min));
  }
}

TEST_CASE("scenario ranks are reproducible by seed") {
  ScenarioConfig a;
  a.rank_seed = 7;
  const GridCase s1 = apply_scenario(case30(), a), s2 = apply_scenario(case30(), a);
  CHECK(s1 == s2);
  a.rank_seed = 8;
  const GridCase s3 = apply_scenario(case30(), a);
  bool differ = false;
  for (std::size_t d = 0; d < s1.num_demands(); ++d) differ = differ || s1.demands[d].rank != s3.demands[d].rank;
  CHECK(differ);
}

TEST_CASE("scenario rejects bounds that become empty") {
  GridCase g = case5();
  g.generators[0].pg_min = 1.5;
  ScenarioConfig c = ScenarioConfig::identity();
  c.pg_upper_scale = 0.5;
  CHECK_THROWS_AS(apply_scenario(g, c), ScenarioError);
  c.pg_upper_scale = 1.5;
  CHECK_THROWS_AS(apply_scenario(case5(), c), ScenarioError);
}
