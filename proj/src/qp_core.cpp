#include "aosbqp/qp_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace aosbqp {

void QpProblem::validate() const {
  const Eigen::Index n = g_lin.size();
  if (Q.rows() != n || Q.cols() != n) throw std::invalid_argument("QpProblem: Q must be dim x dim");
  if (lower.size() != n || upper.size() != n) throw std::invalid_argument("QpProblem: box bounds must match dim");
  if (A.cols() != n && A.rows() > 0) throw std::invalid_argument("QpProblem: A must have dim columns");
  if (A.rows() != b.size()) throw std::invalid_argument("QpProblem: A and b row counts differ");
  for (Eigen::Index j = 0; j < n; ++j) {
    if (!(lower[j] <= upper[j])) throw std::invalid_argument("QpProblem: lower > upper");
  }
}

const char* to_string(QpStatus s) {
  switch (s) {
    case QpStatus::Optimal: return "optimal";
    case QpStatus::Infeasible: return "infeasible";
    case QpStatus::MaxIterations: return "max-iterations";
  }
  return "?";
}

const char* to_string(QpMode m) { return m == QpMode::Concave ? "concave" : "stationary"; }

namespace {

// Inequalities a_i^T x >= beta_i, general rows first, then lower and upper box rows.
struct Constraints {
  Eigen::MatrixXd a;
  Eigen::VectorXd beta;
  Eigen::Index general = 0;
  Eigen::Index n = 0;

  bool is_box(Eigen::Index i) const { return i >= general; }
  // Put x exactly on a box row that just became active.
  void snap(Eigen::Index i, Eigen::VectorXd& x) const {
    if (i < general) return;
    const Eigen::Index j = (i - general) % n;
    x[j] = i - general < n ? beta[i] : -beta[i];
  }
};

Constraints make_constraints(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const Eigen::VectorXd& lo,
                             const Eigen::VectorXd& hi) {
  const Eigen::Index n = lo.size(), m = A.rows();
  Constraints c;
  c.general = m;
  c.n = n;
  c.a = Eigen::MatrixXd::Zero(m + 2 * n, n);
  c.beta.resize(m + 2 * n);
  if (m > 0) c.a.topRows(m) = A;
  c.beta.head(m) = -b;
  for (Eigen::Index j = 0; j < n; ++j) {
    c.a(m + j, j) = 1.0;
    c.beta[m + j] = lo[j];
    c.a(m + n + j, j) = -1.0;
    c.beta[m + n + j] = -hi[j];
  }
  return c;
}

struct ActiveSetOutcome {
  Eigen::VectorXd x;
  Eigen::VectorXd multipliers;  // one per constraint row, zero off the working set
  bool converged = false;
  int iterations = 0;
};

Eigen::MatrixXd null_space(const Eigen::MatrixXd& aw_t, Eigen::Index n) {
  if (aw_t.cols() == 0) return Eigen::MatrixXd::Identity(n, n);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(aw_t);
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
  return q.rightCols(n - aw_t.cols());
}

Eigen::MatrixXd working_rows(const Constraints& cons, const std::vector<Eigen::Index>& w) {
  Eigen::MatrixXd aw_t(cons.n, static_cast<Eigen::Index>(w.size()));
  for (std::size_t i = 0; i < w.size(); ++i) aw_t.col(static_cast<Eigen::Index>(i)) = cons.a.row(w[i]).transpose();
  return aw_t;
}

// Primal active-set method for min 1/2 x^T H x + c^T x over the constraint rows,
// from a feasible x. H may be indefinite: directions of negative or zero
// curvature are followed to the nearest blocking constraint, so the result is
// a KKT point that is a global minimizer whenever H is positive semi-definite.
ActiveSetOutcome active_set(const Eigen::MatrixXd& H, const Eigen::VectorXd& c, const Constraints& cons,
                            Eigen::VectorXd x, int cap, double feas_tol) {
  const Eigen::Index n = x.size();
  const Eigen::Index rows = cons.a.rows();
  std::vector<Eigen::Index> w;
  std::vector<char> in_w(rows, 0);

  auto independent = [&](Eigen::Index i) {
    const Eigen::MatrixXd z = null_space(working_rows(cons, w), n);
    if (z.cols() == 0) return false;
    const Eigen::VectorXd ai = cons.a.row(i).transpose();
    return (z.transpose() * ai).norm() > 1e-10 * std::max(1.0, ai.norm());
  };
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (cons.a.row(i).dot(x) - cons.beta[i] <= feas_tol && independent(i)) {
      w.push_back(i);
      in_w[i] = 1;
      cons.snap(i, x);
    }
  }

  ActiveSetOutcome out;
  out.multipliers = Eigen::VectorXd::Zero(rows);
  for (int it = 0; it < cap; ++it) {
    out.iterations = it + 1;
    const Eigen::VectorXd grad = H * x + c;
    const Eigen::MatrixXd aw_t = working_rows(cons, w);
    const Eigen::MatrixXd z = null_space(aw_t, n);
    const Eigen::Index m = z.cols();
    const double gscale = std::max(1.0, grad.lpNorm<Eigen::Infinity>());

    Eigen::VectorXd p = Eigen::VectorXd::Zero(n);
    bool unbounded_dir = false;
    bool stationary = true;
    if (m > 0) {
      const Eigen::VectorXd rg = z.transpose() * grad;
      const Eigen::MatrixXd rh = z.transpose() * H * z;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (rh + rh.transpose()));
      const Eigen::VectorXd& th = eig.eigenvalues();
      const Eigen::MatrixXd& v = eig.eigenvectors();
      const double ztol = 1e-11 * std::max(1.0, th.cwiseAbs().maxCoeff());
      if (th[0] < -ztol) {
        Eigen::VectorXd d = z * v.col(0);
        if (grad.dot(d) > 0.0) d = -d;
        p = d;
        unbounded_dir = true;
        stationary = false;
      } else if (rg.lpNorm<Eigen::Infinity>() > 1e-12 * gscale) {
        Eigen::VectorXd flat = Eigen::VectorXd::Zero(m), newton = Eigen::VectorXd::Zero(m);
        for (Eigen::Index k = 0; k < m; ++k) {
          const double proj = v.col(k).dot(rg);
          if (th[k] <= ztol) {
            flat -= proj * v.col(k);
          } else {
            newton -= (proj / th[k]) * v.col(k);
          }
        }
        if (flat.lpNorm<Eigen::Infinity>() > 1e-12 * gscale) {
          p = z * flat;
          unbounded_dir = true;
        } else {
          p = z * newton;
        }
        stationary = p.lpNorm<Eigen::Infinity>() <= 1e-15 * std::max(1.0, x.lpNorm<Eigen::Infinity>());
      }
    }

    if (stationary) {
      Eigen::VectorXd lam = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(w.size()));
      if (!w.empty()) lam = aw_t.colPivHouseholderQr().solve(grad);
      Eigen::Index drop = -1;
      double most = -1e-11 * gscale;
      for (std::size_t k = 0; k < w.size(); ++k) {
        if (lam[static_cast<Eigen::Index>(k)] < most) {
          most = lam[static_cast<Eigen::Index>(k)];
          drop = static_cast<Eigen::Index>(k);
        }
      }
      if (drop < 0) {
        out.multipliers.setZero();
        for (std::size_t k = 0; k < w.size(); ++k) {
          out.multipliers[w[k]] = std::max(0.0, lam[static_cast<Eigen::Index>(k)]);
        }
        out.x = x;
        out.converged = true;
        return out;
      }
      in_w[w[drop]] = 0;
      w.erase(w.begin() + drop);
      continue;
    }

    double alpha = unbounded_dir ? std::numeric_limits<double>::infinity() : 1.0;
    Eigen::Index blocking = -1;
    const double pnorm = p.norm();
    for (Eigen::Index i = 0; i < rows; ++i) {
      if (in_w[i]) continue;
      const double s = cons.a.row(i).dot(p);
      if (s >= -1e-14 * pnorm) continue;
      const double slack = std::max(0.0, cons.a.row(i).dot(x) - cons.beta[i]);
      const double ai = slack / -s;
      if (ai < alpha) {
        alpha = ai;
        blocking = i;
      }
    }
    if (!std::isfinite(alpha)) {
      out.x = x;
      return out;
    }
    x += alpha * p;
    if (blocking >= 0) {
      cons.snap(blocking, x);
      w.push_back(blocking);
      in_w[blocking] = 1;
    }
  }
  out.x = x;
  return out;
}

Eigen::VectorXd clip(const Eigen::VectorXd& x, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

// Feasible point close to x0, via an elastic variable t on the general rows.
std::optional<Eigen::VectorXd> phase_one(const QpProblem& p, const Eigen::VectorXd& x0, double feas_tol, int cap) {
  const Eigen::Index n = p.dim(), m = p.rows();
  Eigen::VectorXd x = clip(x0, p.lower, p.upper);
  if (m == 0) return x;
  const Eigen::VectorXd r = p.b + p.A * x;
  if (r.minCoeff() >= -feas_tol) return x;

  Eigen::MatrixXd a_ext(m, n + 1);
  a_ext << p.A, Eigen::VectorXd::Ones(m);
  Eigen::VectorXd lo(n + 1), hi(n + 1);
  lo << p.lower, 0.0;
  hi << p.upper, std::numeric_limits<double>::infinity();
  Constraints cons = make_constraints(a_ext, p.b, lo, hi);
  // Drop the infinite upper row on t by making it never binding.
  cons.a.row(m + 2 * (n + 1) - 1).setZero();
  cons.beta[m + 2 * (n + 1) - 1] = -1.0;

  constexpr double eps = 1e-6;
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n + 1, n + 1);
  H.topLeftCorner(n, n) = eps * Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd c(n + 1);
  c << -eps * x, 1.0;
  Eigen::VectorXd z(n + 1);
  z << x, -r.minCoeff() + 1.0;
  const ActiveSetOutcome res = active_set(H, c, cons, z, cap, feas_tol);
  if (!res.converged || res.x[n] > feas_tol) return std::nullopt;
  return Eigen::VectorXd(res.x.head(n));
}

// Euclidean projection onto the feasible set, from a feasible point.
Eigen::VectorXd project(const QpProblem& p, const Constraints& cons, const Eigen::VectorXd& z,
                        const Eigen::VectorXd& feasible, double feas_tol, int cap) {
  if (p.rows() == 0) return clip(z, p.lower, p.upper);
  const Eigen::Index n = p.dim();
  const ActiveSetOutcome res = active_set(Eigen::MatrixXd::Identity(n, n), -z, cons, feasible, cap, feas_tol);
  return res.x;
}

QpSolution finish(const QpProblem& p, const Constraints& cons, const ActiveSetOutcome& res, int iterations) {
  const Eigen::Index n = p.dim(), m = p.rows();
  QpSolution sol;
  sol.primal = res.x;
  sol.dual_ineq = res.multipliers.head(m);
  sol.dual_lower = res.multipliers.segment(m, n);
  sol.dual_upper = res.multipliers.segment(m + n, n);
  sol.iterations = iterations;
  sol.status = res.converged ? QpStatus::Optimal : QpStatus::MaxIterations;
  (void)cons;
  sol.kkt_residual = qp_kkt_residual(p, sol);
  return sol;
}

}  // namespace

double qp_kkt_residual(const QpProblem& p, const QpSolution& s) {
  const Eigen::VectorXd& x = s.primal;
  Eigen::VectorXd stat = p.Q * x + p.g_lin + s.dual_lower - s.dual_upper;
  if (p.rows() > 0) stat += p.A.transpose() * s.dual_ineq;
  double r = stat.lpNorm<Eigen::Infinity>();
  for (Eigen::Index j = 0; j < p.dim(); ++j) {
    r = std::max({r, p.lower[j] - x[j], x[j] - p.upper[j], -s.dual_lower[j], -s.dual_upper[j]});
    r = std::max(r, std::abs(s.dual_lower[j] * (x[j] - p.lower[j])));
    r = std::max(r, std::abs(s.dual_upper[j] * (p.upper[j] - x[j])));
  }
  if (p.rows() > 0) {
    const Eigen::VectorXd slack = p.b + p.A * x;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      r = std::max({r, -slack[i], -s.dual_ineq[i], std::abs(s.dual_ineq[i] * slack[i])});
    }
  }
  return r;
}

QpSolution solve_qp(const QpProblem& problem, QpMode mode, const QpOptions& opts) {
  problem.validate();
  const Eigen::Index n = problem.dim();
  const int cap = opts.max_iterations > 0 ? opts.max_iterations : static_cast<int>(std::max<Eigen::Index>(50 * n, 50));
  const Constraints cons = make_constraints(problem.A, problem.b, problem.lower, problem.upper);
  const Eigen::VectorXd x0 = opts.start ? *opts.start : Eigen::VectorXd::Zero(n);

  const auto feasible = phase_one(problem, x0, opts.feas_tol, cap);
  if (!feasible) {
    QpSolution sol;
    sol.primal = clip(x0, problem.lower, problem.upper);
    sol.dual_ineq = Eigen::VectorXd::Zero(problem.rows());
    sol.dual_lower = Eigen::VectorXd::Zero(n);
    sol.dual_upper = Eigen::VectorXd::Zero(n);
    sol.status = QpStatus::Infeasible;
    sol.kkt_residual = std::numeric_limits<double>::infinity();
    return sol;
  }

  const Eigen::MatrixXd H = -problem.Q;
  const Eigen::VectorXd c = -problem.g_lin;
  if (mode == QpMode::Concave) {
    const ActiveSetOutcome res = active_set(H, c, cons, *feasible, cap, opts.feas_tol);
    return finish(problem, cons, res, res.iterations);
  }

  // Projected gradient ascent with Armijo backtracking, then an active-set
  // polish from the final iterate for exact multipliers.
  Eigen::VectorXd x = project(problem, cons, x0, *feasible, opts.feas_tol, cap);
  double step = 1.0;
  int iters = 0;
  for (; iters < cap; ++iters) {
    const Eigen::VectorXd grad = problem.Q * x + problem.g_lin;
    const double f = problem.value(x);
    bool moved = false;
    for (int bt = 0; bt < 60; ++bt) {
      const Eigen::VectorXd cand = project(problem, cons, x + step * grad, x, opts.feas_tol, cap);
      const Eigen::VectorXd dx = cand - x;
      if (dx.lpNorm<Eigen::Infinity>() <= 1e-13) break;
      if (problem.value(cand) >= f + 1e-4 * grad.dot(dx)) {
        x = cand;
        moved = true;
        step = std::min(step * 2.0, 1e6);
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;
  }
  const ActiveSetOutcome res = active_set(H, c, cons, x, cap, opts.feas_tol);
  return finish(problem, cons, res, iters + res.iterations);
}

}  // namespace aosbqp
