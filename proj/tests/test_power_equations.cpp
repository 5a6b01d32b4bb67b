#include "aosbqp/ao1_opf.hpp"
#include "aosbqp/driver.hpp"
#include "aosbqp/kernels.hpp"
#include "aosbqp/power_equations.hpp"

#include "doctest.h"
#include "test_support.hpp"

#include <random>

using namespace aosbqp;
using testing_support::case30;
using testing_support::case5;

namespace {

State random_state(const PowerModel& m, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> v(0.9, 1.1), t(-0.5, 0.5);
  State x{Eigen::VectorXd(m.num_buses()), Eigen::VectorXd(m.num_buses())};
  for (Eigen::Index k = 0; k < m.num_buses(); ++k) {
    x.v[k] = v(rng);
    x.theta[k] = t(rng);
  }
  return x;
}

}  // namespace

TEST_CASE("line flow at flat start is zero") {
  const PowerModel m(case5());
  const State x = State::flat(m.grid());
  for (Eigen::Index k = 0; k < m.num_buses(); ++k) {
    for (const LineEnd& e : m.neighbors()[k]) {
      const auto [p, q] = m.line_flow(x, k, e.other);
      CHECK(p == doctest::Approx(0.0));
      CHECK(q == doctest::Approx(0.0));
    }
  }
  CHECK(m.node_outflow(x).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("line flow matches an independent scalar evaluation") {
  const PowerModel m(parse_case(testing_support::kTwoBusCase));
  State x{Eigen::Vector2d(1.05, 1.0), Eigen::Vector2d(0.1, 0.0)};
  const auto [p, q] = m.line_flow(x, 0, 1);
  CHECK(p == doctest::Approx(0.5818710638539207).epsilon(1e-12));
  CHECK(q == doctest::Approx(0.1839030448111938).epsilon(1e-12));
}

TEST_CASE("line flow with g = 0 and equal angles") {
  GridCase g = parse_case(testing_support::kTwoBusCase);
  g.branches[0].g = 0.0;
  const PowerModel m(g);
  State x{Eigen::Vector2d(1.05, 0.98), Eigen::Vector2d(0.2, 0.2)};
  const auto [p, q] = m.line_flow(x, 0, 1);
  CHECK(p == doctest::Approx(0.0));
  CHECK(q == doctest::Approx(5.0 * 1.05 * (1.05 - 0.98)).epsilon(1e-12));
}

TEST_CASE("line flow rejects non-adjacent buses") {
  const PowerModel m(case5());
  const State x = State::flat(m.grid());
  // Buses 2 and 5 are not connected.
  CHECK_THROWS_AS(m.line_flow(x, 1, 4), std::domain_error);
  CHECK_THROWS_AS(m.line_flow(x, 0, 9), std::domain_error);
}

TEST_CASE("node outflow equals the neighbor sum of line flows") {
  std::mt19937_64 rng(3);
  for (const GridCase& g : {case5(), case30()}) {
    const PowerModel m(g);
    for (int trial = 0; trial < 20; ++trial) {
      const State x = random_state(m, rng);
      const PowerVector out = m.node_outflow(x);
      for (Eigen::Index k = 0; k < m.num_buses(); ++k) {
        double sp = 0, sq = 0;
        for (const LineEnd& e : m.neighbors()[k]) {
          const auto [p, q] = m.line_flow(x, k, e.other);
          sp += p;
          sq += q;
        }
        CHECK(std::abs(sp - out[2 * k]) <= 1e-12);
        CHECK(std::abs(sq - out[2 * k + 1]) <= 1e-12);
      }
    }
  }
}

TEST_CASE("lossless network conserves active power") {
  std::mt19937_64 rng(5);
  const PowerModel m(testing_support::lossless(case30()));
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const PowerVector out = m.node_outflow(random_state(m, rng));
    double s = 0;
    for (Eigen::Index k = 0; k < m.num_buses(); ++k) s += out[2 * k];
    worst = std::max(worst, std::abs(s));
  }
  CHECK(worst <= 1e-10);
}

TEST_CASE("supply follows the switched demand terms") {
  const PowerModel m(case5());
  InputVector u{Eigen::Vector4d(1, 2, 3, 4), Eigen::Vector4d(0.1, 0.2, 0.3, 0.4)};
  SwitchVector y = SwitchVector::Zero(3);
  PowerVector s = m.supply(u, y);
  CHECK(s[0] == 1.0);
  CHECK(s[2] == 0.0);
  CHECK(s[4] == 2.0);
  y << 1.0, 0.5, 1.0;
  s = m.supply(u, y);
  const auto& d = m.grid().demands;
  CHECK(s[2] == doctest::Approx(-d[0].pd));
  CHECK(s[3] == doctest::Approx(-d[0].qd));
  CHECK(s[4] == doctest::Approx(2.0 - 0.25 * d[1].pd));
}

TEST_CASE("objective vanishes at y = 0 and equals delivered demand at a balanced point") {
  const PowerModel m(case5());
  const ModelPoint pt = random_interior_point(m, 11);
  CHECK(m.objective(pt.state, pt.input, SwitchVector::Zero(3)) == 0.0);

  // A converged AO1 point is balanced to its feasibility tolerance.
  SwitchVector y(3);
  y << 1.0, 0.7, 0.4;
  const Ao1Result r = solve_ao1(m, y);
  REQUIRE(r.status == Ao1Status::Converged);
  double expect = 0, k_bound = 0;
  for (Eigen::Index d = 0; d < 3; ++d) {
    const auto& dem = m.grid().demands[static_cast<std::size_t>(d)];
    expect += y[d] * y[d] * y[d] * dem.rank * dem.pd;
    const double vmax = m.grid().buses[static_cast<std::size_t>(m.demand_bus(d))].v_max;
    k_bound += dem.rank * std::max(1.0, vmax * vmax);
  }
  CHECK(std::abs(m.objective(r.state, r.input, y) - expect) <= k_bound * std::max(r.balance_residual, 1e-12) + 1e-12);
}

TEST_CASE("constraint rows have the documented layout and signs") {
  const PowerModel m(case5());
  const ConstraintLayout lay = m.layout();
  CHECK(lay.size() == 8 * 5 + 4 * 4);
  ModelPoint pt = random_interior_point(m, 2);
  pt.state.v[0] = m.grid().buses[0].v_min;
  const Eigen::VectorXd c = m.constraints(pt.state, pt.input, pt.y);
  CHECK(c.size() == lay.size());
  CHECK(c[lay.x_lower()] == 0.0);
  CHECK((c.segment(lay.balance_pos(), 10) + c.segment(lay.balance_neg(), 10)).cwiseAbs().maxCoeff() == 0.0);

  // Overload: every demand far beyond generation.
  GridCase g = case5();
  for (auto& d : g.demands) d.pd = 100.0;
  const PowerModel big(g);
  const Eigen::VectorXd c2 = big.constraints(State::flat(g), InputVector::midpoint(g), SwitchVector::Ones(3));
  CHECK(c2.maxCoeff() > 0.0);
}

TEST_CASE("analytic derivatives agree with central differences") {
  for (const GridCase& g : {case5(), case30(), apply_scenario(case30(), ScenarioConfig{})}) {
    const PowerModel m(g);
    const DerivativeReport r = check_derivatives(m, 20, 17);
    CHECK(r.points == 20);
    CHECK(r.dP_dx <= 1e-6);
    CHECK(r.dE <= 1e-6);
    CHECK(r.dC <= 1e-6);
    CHECK(r.hessian_y <= 1e-6);
  }
}

TEST_CASE("bound rows of dC do not depend on y") {
  const PowerModel m(case30());
  const ModelPoint pt = random_interior_point(m, 4);
  const Jacobians j = m.jacobians(pt.state, pt.input, pt.y);
  const Eigen::Index nd = m.num_demands();
  const ConstraintLayout lay = m.layout();
  CHECK(j.dC.rows() == lay.size());
  CHECK(j.dC.bottomRightCorner(lay.size() - lay.x_lower(), nd).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("dP/dx at flat start on a lossless network has no active-power voltage block") {
  const PowerModel m(testing_support::lossless(case5()));
  const Eigen::MatrixXd j = m.outflow_jacobian(State::flat(m.grid()));
  for (Eigen::Index k = 0; k < 5; ++k) {
    for (Eigen::Index l = 0; l < 5; ++l) CHECK(j(2 * k, 2 * l) == 0.0);
  }
}

TEST_CASE("hessian in y is diagonal with the hand-derived entries") {
  const PowerModel m(case5());
  const Eigen::Index rows = m.layout().size();
  CHECK(m.hessian_y(Eigen::VectorXd::Zero(rows)).cwiseAbs().maxCoeff() == 0.0);
  // Single dual on the P - S active row of the second demand's bus.
  Eigen::VectorXd lam = Eigen::VectorXd::Zero(rows);
  const Eigen::Index k = m.demand_bus(1);
  lam[2 * k] = 0.8;
  const Eigen::MatrixXd q = m.hessian_y(lam);
  CHECK(q(1, 1) == doctest::Approx(-2.0 * 0.8 * m.grid().demands[1].pd));
  CHECK((q - Eigen::MatrixXd(q.diagonal().asDiagonal())).cwiseAbs().maxCoeff() == 0.0);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0, 1);
  for (Eigen::Index i = 0; i < rows; ++i) lam[i] = u(rng);
  const Eigen::MatrixXd q2 = m.hessian_y(lam);
  CHECK((q2 - Eigen::MatrixXd(q2.diagonal().asDiagonal())).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("complementarity penalty") {
  CHECK(phi(Eigen::Vector3d(0, 1, 1)) == 0.0);
  CHECK(phi(Eigen::VectorXd::Constant(6, 0.5)) == doctest::Approx(1.5));
  const Eigen::Vector2d y(0.25, 1.0);
  CHECK(grad_phi(y)[0] == doctest::Approx(0.5));
  CHECK(grad_phi(y)[1] == doctest::Approx(-1.0));
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 50; ++t) {
    Eigen::VectorXd v(8);
    for (auto& e : v) e = u(rng);
    CHECK(phi(v) >= 0.0);
    CHECK(phi(v) <= 2.0);
  }
}

TEST_CASE("parallel kernels reproduce the serial references") {
  std::mt19937_64 rng(21);
  const PowerModel m(case30());
  const State x = random_state(m, rng);
  Eigen::VectorXd a(60), b(60);
  kernels::node_outflow_serial(m.neighbors(), x.v, x.theta, a);
  kernels::node_outflow_parallel(m.neighbors(), x.v, x.theta, b);
  CHECK(a == b);
  Eigen::MatrixXd ja = Eigen::MatrixXd::Zero(60, 60), jb = Eigen::MatrixXd::Zero(60, 60);
  kernels::outflow_jacobian_serial(m.neighbors(), x.v, x.theta, ja);
  kernels::outflow_jacobian_parallel(m.neighbors(), x.v, x.theta, jb);
  CHECK(ja == jb);
  const kernels::VectorFunction fn = [&](const Eigen::VectorXd& z) { return m.node_outflow(State::from_stacked(z)); };
  const Eigen::MatrixXd fa = kernels::central_difference_serial(fn, x.stacked(), 1e-6);
  const Eigen::MatrixXd fb = kernels::central_difference_parallel(fn, x.stacked(), 1e-6);
  CHECK(fa == fb);
  CHECK((fa - ja).cwiseAbs().maxCoeff() <= 1e-6);
}
