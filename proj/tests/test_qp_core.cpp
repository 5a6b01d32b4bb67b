#include "aosbqp/qp_core.hpp"

#include "doctest.h"

#include <random>

using namespace aosbqp;

namespace {

QpProblem box_problem(const Eigen::MatrixXd& q, const Eigen::VectorXd& g, double lo = 0.0, double hi = 1.0) {
  QpProblem p;
  p.Q = q;
  p.g_lin = g;
  p.A.resize(0, g.size());
  p.b.resize(0);
  p.lower = Eigen::VectorXd::Constant(g.size(), lo);
  p.upper = Eigen::VectorXd::Constant(g.size(), hi);
  return p;
}

QpProblem scalar(double q, double g) { return box_problem(Eigen::MatrixXd::Constant(1, 1, q), Eigen::VectorXd::Constant(1, g)); }

// Best box vertex of a maximization, by enumeration.
double best_vertex_value(const QpProblem& p) {
  const Eigen::Index n = p.dim();
  double best = -1e300;
  for (long mask = 0; mask < (1L << n); ++mask) {
    Eigen::VectorXd d(n);
    for (Eigen::Index i = 0; i < n; ++i) d[i] = (mask >> i) & 1 ? p.upper[i] : p.lower[i];
    best = std::max(best, p.value(d));
  }
  return best;
}

}  // namespace

TEST_CASE("interior maximizer of a concave scalar") {
  const QpSolution s = solve_qp(scalar(-1.0, 0.3), QpMode::Concave);
  CHECK(s.status == QpStatus::Optimal);
  CHECK(s.primal[0] == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(s.dual_lower[0] == doctest::Approx(0.0));
  CHECK(s.dual_upper[0] == doctest::Approx(0.0));
}

TEST_CASE("upper bound active with its dual from stationarity") {
  const QpSolution s = solve_qp(scalar(-1.0, 2.0), QpMode::Concave);
  CHECK(s.primal[0] == doctest::Approx(1.0));
  CHECK(s.dual_upper[0] == doctest::Approx(1.0));
  CHECK(s.dual_lower[0] == doctest::Approx(0.0));
  CHECK(s.kkt_residual <= 1e-8);
}

TEST_CASE("stationary mode on a convex scalar reaches the vertex") {
  QpOptions o;
  o.start = Eigen::VectorXd::Constant(1, 0.6);
  const QpProblem p = scalar(1.0, 0.0);
  const QpSolution s = solve_qp(p, QpMode::Stationary, o);
  CHECK(s.status == QpStatus::Optimal);
  CHECK(s.primal[0] == doctest::Approx(1.0));
  CHECK(p.value(s.primal) == doctest::Approx(best_vertex_value(p)));
}

TEST_CASE("diagonal concave box problems match closed-form clipping") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> qd(0.1, 4.0), gd(-3.0, 5.0);
  for (int trial = 0; trial < 40; ++trial) {
    const Eigen::Index n = 1 + trial % 12;
    Eigen::VectorXd q(n), g(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      q[i] = qd(rng);
      g[i] = gd(rng);
    }
    const QpProblem p = box_problem(Eigen::MatrixXd((-q).asDiagonal()), g);
    const QpSolution s = solve_qp(p, QpMode::Concave);
    REQUIRE(s.status == QpStatus::Optimal);
    for (Eigen::Index i = 0; i < n; ++i) CHECK(s.primal[i] == doctest::Approx(std::clamp(g[i] / q[i], 0.0, 1.0)).epsilon(1e-9));
    CHECK(s.kkt_residual <= 1e-8);
  }
}

TEST_CASE("general rows: duals satisfy the KKT system") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 30; ++trial) {
    const Eigen::Index n = 3 + trial % 8, m = 1 + trial % 4;
    Eigen::MatrixXd r(n, n);
    for (auto& e : r.reshaped()) e = nd(rng);
    QpProblem p = box_problem(-(r * r.transpose() + 0.1 * Eigen::MatrixXd::Identity(n, n)), Eigen::VectorXd(n), -1.0, 1.0);
    for (auto& e : p.g_lin) e = 3.0 * nd(rng);
    p.A.resize(m, n);
    for (auto& e : p.A.reshaped()) e = nd(rng);
    p.b = Eigen::VectorXd::Constant(m, 0.5);
    const QpSolution s = solve_qp(p, QpMode::Concave);
    REQUIRE(s.status == QpStatus::Optimal);
    const Eigen::VectorXd stat = p.Q * s.primal + p.g_lin + p.A.transpose() * s.dual_ineq + s.dual_lower - s.dual_upper;
    CHECK(stat.cwiseAbs().maxCoeff() <= 1e-8);
    CHECK((p.b + p.A * s.primal).minCoeff() >= -1e-9);
    CHECK(s.dual_ineq.minCoeff() >= -1e-9);
    CHECK(std::abs(s.dual_ineq.dot(p.b + p.A * s.primal)) <= 1e-8);
    CHECK(qp_kkt_residual(p, s) <= 1e-8);
    // Reproducible.
    const QpSolution again = solve_qp(p, QpMode::Concave);
    CHECK((again.primal - s.primal).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("stationary mode on indefinite problems returns KKT points") {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index n = 4 + trial % 6;
    Eigen::MatrixXd r(n, n);
    for (auto& e : r.reshaped()) e = nd(rng);
    QpProblem p = box_problem(0.5 * (r + r.transpose()), Eigen::VectorXd(n));
    for (auto& e : p.g_lin) e = nd(rng);
    p.A = Eigen::RowVectorXd::Ones(n);
    p.b = Eigen::VectorXd::Constant(1, 0.5 * static_cast<double>(n));
    p.A *= -1.0;
    QpOptions o;
    o.start = Eigen::VectorXd::Constant(n, 0.3);
    const QpSolution s = solve_qp(p, QpMode::Stationary, o);
    REQUIRE(s.status == QpStatus::Optimal);
    CHECK(qp_kkt_residual(p, s) <= 1e-8);
  }
}

TEST_CASE("infeasible rows are reported") {
  QpProblem p = scalar(-1.0, 0.0);
  p.A = Eigen::MatrixXd::Constant(1, 1, 1.0);
  p.b = Eigen::VectorXd::Constant(1, -2.0);  // needs d >= 2, box says d <= 1
  CHECK(solve_qp(p, QpMode::Concave).status == QpStatus::Infeasible);
  CHECK(solve_qp(p, QpMode::Stationary).status == QpStatus::Infeasible);
}

TEST_CASE("inconsistent problems are rejected") {
  QpProblem p = scalar(-1.0, 0.0);
  p.lower[0] = 2.0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  QpProblem q = scalar(-1.0, 0.0);
  q.A.resize(2, 3);
  CHECK_THROWS_AS(q.validate(), std::invalid_argument);
}
