#pragma once

// Data-parallel inner loops. Each kernel has a serial reference that the tests
// and the benchmark compare against; the OpenMP variants write disjoint output
// ranges per iteration, so results are bitwise identical to the serial ones.

#include "aosbqp/power_equations.hpp"

#include <Eigen/Dense>

#include <functional>

namespace aosbqp::kernels {

void node_outflow_serial(const NeighborList& nb, const Eigen::VectorXd& v, const Eigen::VectorXd& theta,
                         Eigen::Ref<Eigen::VectorXd> out);
void node_outflow_parallel(const NeighborList& nb, const Eigen::VectorXd& v, const Eigen::VectorXd& theta,
                           Eigen::Ref<Eigen::VectorXd> out);

/// d P / d x in the interleaved (v, theta) column layout. `out` must be
/// zero-initialised 2N x 2N.
void outflow_jacobian_serial(const NeighborList& nb, const Eigen::VectorXd& v, const Eigen::VectorXd& theta,
                             Eigen::Ref<Eigen::MatrixXd> out);
void outflow_jacobian_parallel(const NeighborList& nb, const Eigen::VectorXd& v, const Eigen::VectorXd& theta,
                               Eigen::Ref<Eigen::MatrixXd> out);

/// Central-difference Jacobian of `fn` at `x`: column j is
/// (fn(x + h e_j) - fn(x - h e_j)) / 2h. `fn` must be safe to call
/// concurrently.
using VectorFunction = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
Eigen::MatrixXd central_difference_serial(const VectorFunction& fn, const Eigen::VectorXd& x, double h);
Eigen::MatrixXd central_difference_parallel(const VectorFunction& fn, const Eigen::VectorXd& x, double h);

/// Below this many buses the parallel kernels fall back to the serial loop.
inline constexpr Eigen::Index kParallelBusThreshold = 256;

}  // namespace aosbqp::kernels
