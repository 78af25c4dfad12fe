#include "msrnn/msm/bfgs.hpp"

#include <cmath>

#include "msrnn/error.hpp"

namespace msrnn::msm {

BfgsResult minimize_bfgs(const Objective& f, Eigen::VectorXd x0, const BfgsOptions& opt) {
  const auto n = x0.size();
  BfgsResult res;
  res.x = std::move(x0);
  res.grad.resize(n);
  res.f = f(res.x, &res.grad);
  if (!std::isfinite(res.f) || !res.grad.allFinite()) {
    throw NumericalError("BFGS: objective is not finite at the starting point");
  }
  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);
  bool scaled = false;
  Eigen::VectorXd g_new(n);

  for (res.iterations = 0; res.iterations < opt.max_iter; ++res.iterations) {
    if (res.grad.lpNorm<Eigen::Infinity>() < opt.grad_tol) {
      res.converged = true;
      res.status = "gradient tolerance reached";
      return res;
    }
    Eigen::VectorXd d = -H * res.grad;
    double slope = res.grad.dot(d);
    if (!(slope < 0.0)) {
      H.setIdentity();
      d = -res.grad;
      slope = res.grad.dot(d);
    }
    const double big = d.lpNorm<Eigen::Infinity>();
    if (big > opt.max_step) {
      d *= opt.max_step / big;
      slope = res.grad.dot(d);
    }

    double t = 1.0;
    double f_new = 0.0;
    Eigen::VectorXd x_new;
    bool accepted = false;
    for (int k = 0; k < 60; ++k, t *= 0.5) {
      x_new = res.x + t * d;
      f_new = f(x_new, nullptr);
      if (std::isfinite(f_new) && f_new <= res.f + 1e-4 * t * slope) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      res.converged = res.grad.lpNorm<Eigen::Infinity>() < opt.stall_tol;
      res.status = "line search stalled";
      return res;
    }
    f_new = f(x_new, &g_new);
    const Eigen::VectorXd s = x_new - res.x;
    const Eigen::VectorXd y = g_new - res.grad;
    res.x = x_new;
    res.f = f_new;
    res.grad = g_new;

    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (!scaled) {
        H *= sy / y.squaredNorm();
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Eigen::VectorXd Hy = H * y;
      H += ((sy + y.dot(Hy)) * rho * rho) * (s * s.transpose()) - rho * (Hy * s.transpose() + s * Hy.transpose());
    }
  }
  res.converged = res.grad.lpNorm<Eigen::Infinity>() < opt.grad_tol;
  res.status = res.converged ? "gradient tolerance reached" : "iteration limit reached";
  return res;
}

}  // namespace msrnn::msm
