#pragma once

#include <functional>
#include <string>

#include <Eigen/Dense>

namespace msrnn::msm {

/// Objective value at x; writes the gradient when `grad` is non-null.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)>;

struct BfgsOptions {
  std::size_t max_iter = 500;
  double grad_tol = 1e-6;
  /// Largest allowed change of any coordinate in one step.
  double max_step = 2.0;
  /// Accept a stalled line search as converged below this gradient norm.
  double stall_tol = 1e-4;
};

struct BfgsResult {
  Eigen::VectorXd x;
  double f = 0.0;
  Eigen::VectorXd grad;
  std::size_t iterations = 0;
  bool converged = false;
  std::string status;
};

/// Quasi-Newton minimization with an inverse-Hessian BFGS update and Armijo
/// backtracking.
BfgsResult minimize_bfgs(const Objective& f, Eigen::VectorXd x0, const BfgsOptions& opt = {});

}  // namespace msrnn::msm
