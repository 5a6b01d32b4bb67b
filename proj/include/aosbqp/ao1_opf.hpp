#pragma once

#include "aosbqp/power_equations.hpp"

#include <Eigen/Dense>

#include <optional>

namespace aosbqp {

enum class Ao1Status { Converged, MaxIterations, Infeasible };
const char* to_string(Ao1Status s);

struct Ao1Options {
  double tol_feas = 1e-9;   // elastic balance residual
  double tol_kkt = 1e-6;    // dual infeasibility
  double tol_comp = 1e-8;   // bound complementarity
  /// Power balance above this after convergence means the fixed y has no
  /// feasible operating point.
  double tol_infeasible = 1e-6;
  int max_iterations = 200;
  double mu0 = 0.1;
  double mu_min = 1e-11;
};

/// Primal point and, optionally, duals in the C ordering of a previous result.
struct Ao1Warm {
  State state;
  InputVector input;
  std::optional<Eigen::VectorXd> duals;
};

struct Ao1Result {
  State state;
  InputVector input;
  /// Nonnegative duals aligned with PowerModel::constraints.
  Eigen::VectorXd duals;
  double objective = 0.0;
  double kkt_residual = 0.0;
  /// max |P(x) - S(u, y)| at the returned point.
  double balance_residual = 0.0;
  Ao1Status status = Ao1Status::MaxIterations;
  int iterations = 0;
};

/// Maximizes E over (x, u) at fixed switches subject to C <= 0. Interior
/// point with elastic balance rows, so an infeasible y still converges and is
/// then reported as infeasible. Slack-bus v and theta are held at their case
/// values.
Ao1Result solve_ao1(const PowerModel& model, const SwitchVector& y, const std::optional<Ao1Warm>& warm = std::nullopt,
                    const Ao1Options& opts = {});

}  // namespace aosbqp
