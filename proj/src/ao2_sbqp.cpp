#include "aosbqp/ao2_sbqp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace aosbqp {

const char* to_string(Ao2Variant v) {
  switch (v) {
    case Ao2Variant::Mixed: return "mixed";
    case Ao2Variant::RelaxedOne: return "relaxed-one";
    case Ao2Variant::RelaxedTwo: return "relaxed-two";
  }
  return "?";
}

Ao2Variant parse_ao2_variant(std::string_view text) {
  if (text == "mixed") return Ao2Variant::Mixed;
  if (text == "relaxed-one") return Ao2Variant::RelaxedOne;
  if (text == "relaxed-two") return Ao2Variant::RelaxedTwo;
  throw std::invalid_argument("unknown AO2 variant '" + std::string(text) + "'");
}

void PenaltySchedule::validate() const {
  if (!(rho0 > 0)) throw std::invalid_argument("rho0 must be positive");
  if (!(beta > 1)) throw std::invalid_argument("beta must exceed 1");
  if (!(eps > 0)) throw std::invalid_argument("eps must be positive");
  if (!(rho_max >= rho0)) throw std::invalid_argument("rho_max must be at least rho0");
}

QpMode subproblem_mode(Ao2Variant variant) {
  return variant == Ao2Variant::Mixed ? QpMode::Concave : QpMode::Stationary;
}

namespace {

constexpr double kShortfallTol = 1e-6;

// Aggregate capacity rows in step coordinates. Network losses at the
// linearization point are charged against generation. When the point carries
// a balance shortfall (AO1 found ỹ infeasible) the supply rows demand at least
// that much shedding. Constants are clamped so that y = 0 stays feasible.
void aggregate_rows(const PowerModel& model, const LinearizationPoint& lin, Eigen::MatrixXd& A, Eigen::VectorXd& b) {
  const Eigen::Index n = model.num_buses();
  const Eigen::VectorXd pd = model.demand_p(), qd = model.demand_q();
  const PowerVector outflow = model.node_outflow(lin.state);
  const PowerVector mismatch = outflow - model.supply(lin.input, lin.y);
  double p_loss = 0.0, q_loss = 0.0, p_short = 0.0, q_short = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    p_loss += outflow[2 * k];
    q_loss += outflow[2 * k + 1];
    p_short += std::max(0.0, mismatch[2 * k]);
    q_short += std::max(0.0, mismatch[2 * k + 1]);
  }
  const Eigen::VectorXd u_hi = model.u_upper(), u_lo = model.u_lower();
  double q_max = 0.0, q_min = 0.0;
  for (Eigen::Index j = 0; j < model.num_generators(); ++j) {
    q_max += u_hi[2 * j + 1];
    q_min += u_lo[2 * j + 1];
  }
  const double p_avail = std::max(0.0, lin.input.pg.sum() - p_loss);
  const double q_avail_hi = std::max(0.0, q_max - q_loss);
  const double q_avail_lo = std::min(0.0, q_min - q_loss);

  A.resize(3, pd.size());
  b.resize(3);
  A.row(0) = -pd.transpose();
  b[0] = p_avail - pd.dot(lin.y);
  if (p_short > kShortfallTol) b[0] = std::max(std::min(b[0], -p_short), -pd.dot(lin.y));
  A.row(1) = -qd.transpose();
  b[1] = q_avail_hi - qd.dot(lin.y);
  if (q_short > kShortfallTol) b[1] = std::max(std::min(b[1], -q_short), -qd.dot(lin.y));
  A.row(2) = qd.transpose();
  b[2] = qd.dot(lin.y) - q_avail_lo;
}

}  // namespace

QpProblem build_subproblem(const PowerModel& model, const LinearizationPoint& lin, double rho, Ao2Variant variant,
                           const SwitchVector& phi_anchor, const SubproblemOptions& opts) {
  const Eigen::Index nd = model.num_demands();
  const SwitchVector& yt = lin.y;
  QpProblem p;
  p.lower = -yt;
  p.upper = Eigen::VectorXd::Ones(nd) - yt;
  aggregate_rows(model, lin, p.A, p.b);

  const Eigen::VectorXd c = model.ranks().cwiseProduct(model.demand_p());
  switch (variant) {
    case Ao2Variant::Mixed: {
      Eigen::MatrixXd q = model.hessian_y(lin.duals);
      const double top = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(q, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
      if (top > -opts.reg_floor) q.diagonal().array() -= top + opts.reg_floor;
      const Jacobians jac = model.jacobians(lin.state, lin.input, yt);
      p.Q = q;
      p.g_lin = jac.dE.tail(nd) - rho * grad_phi(phi_anchor);
      break;
    }
    case Ao2Variant::RelaxedOne: {
      // sum c y^2 - rho y^T (1 - y) expanded around yt.
      const Eigen::VectorXd curv = 2.0 * (c.array() + rho).matrix();
      p.Q = curv.asDiagonal();
      p.g_lin = curv.cwiseProduct(yt) - Eigen::VectorXd::Constant(nd, rho);
      break;
    }
    case Ao2Variant::RelaxedTwo: {
      p.Q = (2.0 * c).asDiagonal();
      p.g_lin = 2.0 * c.cwiseProduct(yt) - rho * grad_phi(phi_anchor);
      break;
    }
  }

  if (opts.full_balance_rows) {
    // Linearized C <= 0 on the balance rows that involve y, as b + A d >= 0.
    const Eigen::VectorXd cval = model.constraints(lin.state, lin.input, yt);
    const Jacobians jac = model.jacobians(lin.state, lin.input, yt);
    const Eigen::MatrixXd dcy = jac.dC.rightCols(nd);
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < 4 * model.num_buses(); ++i) {
      if (dcy.row(i).lpNorm<Eigen::Infinity>() > 0.0) rows.push_back(i);
    }
    const Eigen::Index base = p.A.rows();
    p.A.conservativeResize(base + static_cast<Eigen::Index>(rows.size()), nd);
    p.b.conservativeResize(base + static_cast<Eigen::Index>(rows.size()));
    for (std::size_t k = 0; k < rows.size(); ++k) {
      p.A.row(base + static_cast<Eigen::Index>(k)) = -dcy.row(rows[k]);
      p.b[base + static_cast<Eigen::Index>(k)] = -cval[rows[k]];
    }
  }
  return p;
}

StepLength step_length_detail(const SwitchVector& y_hat, const Eigen::VectorXd& direction, const SwitchVector& anchor) {
  const Eigen::VectorXd gp = grad_phi(anchor);
  const double den = direction.dot(gp);
  StepLength s;
  if (std::abs(den) > 1e-12) {
    s.raw = -anchor.dot(gp) / den;
    s.exact = true;
  }
  double lo = -std::numeric_limits<double>::infinity(), hi = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < direction.size(); ++k) {
    const double d = direction[k];
    if (d > 0) {
      lo = std::max(lo, -y_hat[k] / d);
      hi = std::min(hi, (1.0 - y_hat[k]) / d);
    } else if (d < 0) {
      lo = std::max(lo, (1.0 - y_hat[k]) / d);
      hi = std::min(hi, -y_hat[k] / d);
    }
  }
  s.alpha = std::clamp(s.raw, std::min(lo, 0.0), std::max(hi, 0.0));
  s.clipped = s.alpha != s.raw;
  return s;
}

double step_length(const SwitchVector& y_hat, const Eigen::VectorXd& direction, const SwitchVector& anchor) {
  return step_length_detail(y_hat, direction, anchor).alpha;
}

namespace {

SwitchVector clip_unit(const SwitchVector& y) { return y.cwiseMax(0.0).cwiseMin(1.0); }

bool feasible(const QpProblem& p, const Eigen::VectorXd& d, double tol = 1e-9) {
  if (((d - p.lower).array() < -tol).any() || ((p.upper - d).array() < -tol).any()) return false;
  return p.rows() == 0 || (p.b + p.A * d).minCoeff() >= -tol;
}

}  // namespace

Ao2Result run_homotopy(const SubproblemBuilder& build, const SwitchVector& y_tilde, const PenaltySchedule& schedule,
                       QpMode mode) {
  schedule.validate();
  const Eigen::Index nd = y_tilde.size();
  const QpProblem base = build(0.0, y_tilde);
  Ao2Result out;

  auto record = [&](int iteration, const SwitchVector& y, double rho, double alpha, QpStatus status) {
    SbqpTraceRow row;
    row.iteration = iteration;
    row.y = y;
    row.phi = phi(y);
    row.rho = rho;
    row.alpha = alpha;
    row.psi = base.value(y - y_tilde) - rho * row.phi;
    row.status = status;
    out.trace.rows.push_back(std::move(row));
  };

  QpOptions qo;
  qo.start = Eigen::VectorXd::Zero(nd);
  const QpSolution first = solve_qp(base, mode, qo);
  if (first.status == QpStatus::Infeasible) {
    throw Ao2NonConvergence("zero-penalty subproblem is infeasible", out.trace);
  }
  SwitchVector y_hat = clip_unit(y_tilde + first.primal);
  record(0, y_hat, 0.0, 1.0, first.status);

  double rho = schedule.rho0;
  for (int iteration = 1; phi(y_hat) > schedule.eps; ++iteration) {
    if (rho > schedule.rho_max) {
      throw Ao2NonConvergence("penalty exceeded rho_max with phi = " + std::to_string(phi(y_hat)), out.trace);
    }
    const QpProblem sub = build(rho, y_hat);
    qo.start = y_hat - y_tilde;
    const QpSolution sol = solve_qp(sub, mode, qo);
    if (sol.status == QpStatus::Infeasible) {
      throw Ao2NonConvergence("penalty subproblem is infeasible", out.trace);
    }
    const Eigen::VectorXd dir = clip_unit(y_tilde + sol.primal) - y_hat;
    // The exact step is kept only when it beats the full step on phi; any
    // alpha in [0, 1] stays on the segment between two QP-feasible points.
    double alpha = std::clamp(step_length(y_hat, dir, y_hat), 0.0, 1.0);
    if (!(phi(clip_unit(y_hat + alpha * dir)) < phi(clip_unit(y_hat + dir)))) alpha = 1.0;
    if (dir.lpNorm<Eigen::Infinity>() <= 1e-9) {
      // Stalled on a fractional point the linearized penalty cannot leave
      // (typically a switch above 1/2 held by a capacity row). Try rounding
      // the fractional switches down and keep that if the merit improves.
      const Eigen::VectorXd floor_d = y_hat.array().floor().matrix() - y_tilde;
      const double merit_floor = base.value(floor_d) - rho * phi(y_tilde + floor_d);
      const double merit_stay = base.value(y_hat - y_tilde) - rho * phi(y_hat);
      if (feasible(sub, floor_d) && merit_floor > merit_stay) {
        y_hat = y_tilde + floor_d;
        alpha = 1.0;
        record(iteration, y_hat, rho, alpha, sol.status);
        if (phi(y_hat) <= schedule.eps) break;
        rho *= schedule.beta;
        continue;
      }
    }
    y_hat = clip_unit(y_hat + alpha * dir);
    record(iteration, y_hat, rho, alpha, sol.status);
    if (phi(y_hat) <= schedule.eps) break;
    rho *= schedule.beta;
  }

  out.y_relaxed = y_hat;
  out.y = y_hat.array().round().matrix();
  return out;
}

Ao2Result run_ao2(const PowerModel& model, const LinearizationPoint& lin, const PenaltySchedule& schedule,
                  Ao2Variant variant, const SubproblemOptions& opts) {
  const SubproblemBuilder build = [&](double rho, const SwitchVector& anchor) {
    return build_subproblem(model, lin, rho, variant, anchor, opts);
  };
  return run_homotopy(build, lin.y, schedule, subproblem_mode(variant));
}

}  // namespace aosbqp
