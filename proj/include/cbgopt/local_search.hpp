#pragma once

#include <functional>

#include <Eigen/Core>

namespace cbgopt::local_search {

struct Result {
  Eigen::VectorXd x;
  double value = 0.0;
  int evaluations = 0;
};

/// Returns f(x) and writes the gradient when `grad` is non-null. May return -inf for
/// infeasible points.
using ValueAndGradient = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd* grad)>;
using Value = std::function<double(const Eigen::VectorXd&)>;

/// Box-constrained ascent with limited-memory BFGS directions, projection onto the box
/// and Armijo backtracking. Every accepted step increases f, so the result is never
/// worse than the start.
Result maximize_lbfgs_box(const ValueAndGradient& f, Eigen::VectorXd x0,
                          const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                          int max_iterations = 100, double rel_tol = 1e-10);

/// Unconstrained Nelder–Mead maximization.
Result maximize_nelder_mead(const Value& f, const Eigen::VectorXd& x0, double initial_step,
                            int max_evaluations = 400, double tol = 1e-10);

/// Derivative-free compass search inside a box. Steps start at `initial_step` times the
/// box width and halve on failure until below `min_step` times the width.
Result maximize_compass_box(const Value& f, Eigen::VectorXd x0, const Eigen::VectorXd& lower,
                            const Eigen::VectorXd& upper, double initial_step = 0.1,
                            double min_step = 1e-6, int max_evaluations = 400);

}  // namespace cbgopt::local_search
