#pragma once

#include "aosbqp/grid_model.hpp"

#include <Eigen/Dense>

#include <utility>
#include <vector>

namespace aosbqp {

/// Bus voltages. Flattened layouts interleave per bus: (v_0, theta_0, v_1, ...).
struct State {
  Eigen::VectorXd v;
  Eigen::VectorXd theta;

  /// v at each bus's set point (clipped into its bounds), theta = 0.
  static State flat(const GridCase& grid);
  Eigen::VectorXd stacked() const;
  static State from_stacked(const Eigen::VectorXd& x);
};

/// Generator injections, one pair per entry of GridCase::generators.
/// Flattened as (pg_0, qg_0, pg_1, ...).
struct InputVector {
  Eigen::VectorXd pg;
  Eigen::VectorXd qg;

  /// Midpoint of each generator's bounds.
  static InputVector midpoint(const GridCase& grid);
  Eigen::VectorXd stacked() const;
  static InputVector from_stacked(const Eigen::VectorXd& u);
};

/// One switch per entry of GridCase::demands.
using SwitchVector = Eigen::VectorXd;

/// Per-bus (active, reactive) pairs, interleaved: entry 2k is active power of
/// bus k, entry 2k+1 reactive.
using PowerVector = Eigen::VectorXd;

/// Row blocks of the constraint stack C <= 0, in this fixed order:
///   [0, 2N)          P(x) - S(u,y)
///   [2N, 4N)         S(u,y) - P(x)
///   [4N, 6N)         x_lower - x
///   [6N, 8N)         x - x_upper
///   [8N, 8N+2G)      u_lower - u
///   [8N+2G, 8N+4G)   u - u_upper
/// Within each block rows follow the flattened State / InputVector layout.
struct ConstraintLayout {
  Eigen::Index buses = 0;
  Eigen::Index generators = 0;

  Eigen::Index balance_pos() const { return 0; }
  Eigen::Index balance_neg() const { return 2 * buses; }
  Eigen::Index x_lower() const { return 4 * buses; }
  Eigen::Index x_upper() const { return 6 * buses; }
  Eigen::Index u_lower() const { return 8 * buses; }
  Eigen::Index u_upper() const { return 8 * buses + 2 * generators; }
  Eigen::Index size() const { return 8 * buses + 4 * generators; }
};

/// Derivatives with respect to the joint vector (x, u, y) = (2N | 2G | D).
struct Jacobians {
  Eigen::MatrixXd dP_dx;   // 2N x 2N
  Eigen::VectorXd dE;      // 2N + 2G + D
  Eigen::MatrixXd dC;      // (8N + 4G) x (2N + 2G + D)
};

/// Neighbor entry of the sparse line list used by the flow kernels.
struct LineEnd {
  Eigen::Index other = 0;
  double g = 0.0;
  double b = 0.0;
};
using NeighborList = std::vector<std::vector<LineEnd>>;

NeighborList build_neighbors(const GridCase& grid);

/// Model functions of one grid. Holds the case by value together with the
/// admittance matrix and index maps; all member functions are const and may be
/// called concurrently.
class PowerModel {
 public:
  explicit PowerModel(GridCase grid);

  const GridCase& grid() const { return grid_; }
  const AdmittanceMatrix& admittance() const { return admittance_; }
  const NeighborList& neighbors() const { return neighbors_; }
  ConstraintLayout layout() const { return {n_, g_}; }

  Eigen::Index num_buses() const { return n_; }
  Eigen::Index num_generators() const { return g_; }
  Eigen::Index num_demands() const { return d_; }
  Eigen::Index slack() const { return slack_; }
  /// Index into generators / demands for bus k, or -1.
  int generator_at(Eigen::Index k) const { return gen_at_[k]; }
  int demand_at(Eigen::Index k) const { return demand_at_[k]; }
  Eigen::Index demand_bus(Eigen::Index d) const { return demand_bus_[d]; }
  Eigen::Index generator_bus(Eigen::Index j) const { return gen_bus_[j]; }

  /// Flow on line (k, l), bus indices (not ids). Throws std::domain_error
  /// when the buses are not adjacent.
  std::pair<double, double> line_flow(const State& x, Eigen::Index k, Eigen::Index l) const;

  /// P(x): per-bus outflow, the neighbor sum of line_flow.
  PowerVector node_outflow(const State& x) const;

  /// S(u, y): generation minus switched demand y_k^2 (pd, qd).
  PowerVector supply(const InputVector& u, const SwitchVector& y) const;

  /// Switched ranked delivery written through the admittance matrix.
  double objective(const State& x, const InputVector& u, const SwitchVector& y) const;

  Eigen::VectorXd constraints(const State& x, const InputVector& u, const SwitchVector& y) const;

  Jacobians jacobians(const State& x, const InputVector& u, const SwitchVector& y) const;

  /// d P / d x only (2N x 2N).
  Eigen::MatrixXd outflow_jacobian(const State& x) const;

  /// Hessian in y of E - duals^T C. Diagonal, because E is linear in y and
  /// only the y_k^2 demand terms of the balance rows are curved.
  Eigen::MatrixXd hessian_y(const Eigen::VectorXd& duals) const;

  /// Lower / upper bound vectors in the flattened State / InputVector layouts.
  Eigen::VectorXd x_lower() const;
  Eigen::VectorXd x_upper() const;
  Eigen::VectorXd u_lower() const;
  Eigen::VectorXd u_upper() const;

  Eigen::VectorXd demand_p() const;
  Eigen::VectorXd demand_q() const;
  Eigen::VectorXd ranks() const;

 private:
  GridCase grid_;
  AdmittanceMatrix admittance_;
  NeighborList neighbors_;
  Eigen::Index n_ = 0, g_ = 0, d_ = 0, slack_ = 0;
  std::vector<int> gen_at_, demand_at_;
  std::vector<Eigen::Index> gen_bus_, demand_bus_;
};

/// Complementarity penalty y^T (1 - y) and its gradient 1 - 2y.
double phi(const SwitchVector& y);
Eigen::VectorXd grad_phi(const SwitchVector& y);

/// Delivered ranked demand sum_k y_k r_k pd_k (the original objective).
double delivered_objective(const GridCase& grid, const SwitchVector& y);

}  // namespace aosbqp
