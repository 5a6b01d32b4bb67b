#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>

namespace aosbqp {

/// maximize 1/2 d^T Q d + g_lin^T d  subject to  b + A d >= 0,  lower <= d <= upper.
struct QpProblem {
  Eigen::MatrixXd Q;
  Eigen::VectorXd g_lin;
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  Eigen::Index dim() const { return g_lin.size(); }
  Eigen::Index rows() const { return A.rows(); }
  double value(const Eigen::VectorXd& d) const { return 0.5 * d.dot(Q * d) + g_lin.dot(d); }
  /// Throws std::invalid_argument on inconsistent dimensions or lower > upper.
  void validate() const;
};

enum class QpMode { Concave, Stationary };
enum class QpStatus { Optimal, Infeasible, MaxIterations };

const char* to_string(QpStatus s);
const char* to_string(QpMode m);

/// Duals follow Q d + g_lin + A^T dual_ineq + dual_lower - dual_upper = 0,
/// all nonnegative at a KKT point.
struct QpSolution {
  Eigen::VectorXd primal;
  Eigen::VectorXd dual_ineq;
  Eigen::VectorXd dual_lower;
  Eigen::VectorXd dual_upper;
  QpStatus status = QpStatus::Infeasible;
  double kkt_residual = 0.0;
  int iterations = 0;
};

struct QpOptions {
  double feas_tol = 1e-9;
  double stat_tol = 1e-8;
  /// 0 selects 50 * dim.
  int max_iterations = 0;
  /// Starting point for stationary mode (projected onto the feasible set).
  std::optional<Eigen::VectorXd> start;
};

QpSolution solve_qp(const QpProblem& problem, QpMode mode, const QpOptions& opts = {});

/// Largest violation among stationarity, primal feasibility, dual sign and
/// complementarity for the given primal/dual pair.
double qp_kkt_residual(const QpProblem& problem, const QpSolution& sol);

}  // namespace aosbqp
