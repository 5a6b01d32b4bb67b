#pragma once

#include "aosbqp/power_equations.hpp"
#include "aosbqp/qp_core.hpp"

#include <Eigen/Dense>

#include <functional>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace aosbqp {

enum class Ao2Variant { Mixed, RelaxedOne, RelaxedTwo };
const char* to_string(Ao2Variant v);
/// "mixed", "relaxed-one", "relaxed-two".
Ao2Variant parse_ao2_variant(std::string_view text);

struct PenaltySchedule {
  double rho0 = 1.0;
  double beta = 10.0;
  double rho_max = 1e12;
  double eps = 1e-6;

  void validate() const;
};

/// One QP solve of the homotopy. Row 0 is the zero-penalty global search.
struct SbqpTraceRow {
  int iteration = 0;
  SwitchVector y;
  double phi = 0.0;
  double rho = 0.0;
  double alpha = 1.0;
  /// Unpenalized model value minus rho * phi(y).
  double psi = 0.0;
  QpStatus status = QpStatus::Optimal;
};

struct SbqpTrace {
  std::vector<SbqpTraceRow> rows;
};

/// AO1 output the subproblems are expanded around.
struct LinearizationPoint {
  State state;
  InputVector input;
  SwitchVector y;
  Eigen::VectorXd duals;
};

struct SubproblemOptions {
  /// Add the linearized y-dependent balance rows of C to the three
  /// aggregate rows. Usually infeasible beyond a handful of demands.
  bool full_balance_rows = false;
  /// Mixed curvature is shifted to have largest eigenvalue -reg_floor.
  double reg_floor = 1e-2;
};

/// QP in the step d = y - lin.y, box [-lin.y, 1 - lin.y].
QpProblem build_subproblem(const PowerModel& model, const LinearizationPoint& lin, double rho, Ao2Variant variant,
                           const SwitchVector& phi_anchor, const SubproblemOptions& opts = {});

/// Mode each variant's subproblem is solved in.
QpMode subproblem_mode(Ao2Variant variant);

struct StepLength {
  double alpha = 1.0;
  /// Unclipped value of the formula (1 when the denominator is degenerate).
  double raw = 1.0;
  bool exact = false;
  bool clipped = false;
};

/// alpha = -(anchor^T grad_phi(anchor)) / (direction^T grad_phi(anchor)),
/// clipped so y_hat + alpha * direction stays in the unit box; 1 (clipped)
/// when |denominator| <= 1e-12.
StepLength step_length_detail(const SwitchVector& y_hat, const Eigen::VectorXd& direction, const SwitchVector& anchor);
double step_length(const SwitchVector& y_hat, const Eigen::VectorXd& direction, const SwitchVector& anchor);

class Ao2NonConvergence : public std::runtime_error {
 public:
  Ao2NonConvergence(const std::string& what, SbqpTrace trace) : std::runtime_error(what), trace_(std::move(trace)) {}
  const SbqpTrace& trace() const { return trace_; }

 private:
  SbqpTrace trace_;
};

struct Ao2Result {
  /// Binary after snapping.
  SwitchVector y;
  /// Last iterate before snapping.
  SwitchVector y_relaxed;
  SbqpTrace trace;
};

/// Builds the step QP for a penalty and a linearization anchor of phi.
using SubproblemBuilder = std::function<QpProblem(double rho, const SwitchVector& anchor)>;

/// Penalty homotopy around base point y_tilde: zero-penalty solve, then
/// penalized solves with the exact step length, rho <- beta rho until
/// phi <= eps. Throws Ao2NonConvergence past rho_max.
Ao2Result run_homotopy(const SubproblemBuilder& build, const SwitchVector& y_tilde, const PenaltySchedule& schedule,
                       QpMode mode);

Ao2Result run_ao2(const PowerModel& model, const LinearizationPoint& lin, const PenaltySchedule& schedule,
                  Ao2Variant variant, const SubproblemOptions& opts = {});

}  // namespace aosbqp
