#include "msrnn/msm/model.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "msrnn/error.hpp"

namespace msrnn::msm {

namespace {

constexpr double kProbFloor = 1e-300;

double log_sum_exp(const Eigen::VectorXd& v) {
  const double mx = v.maxCoeff();
  if (!std::isfinite(mx)) return mx;
  return mx + std::log((v.array() - mx).exp().sum());
}

}  // namespace

void MsmParams::check() const {
  const auto m = alpha.size();
  if (m < 1) throw ShapeError("MSM parameters need at least one regime");
  if (sigma2.size() != m) throw ShapeError("sigma2 length differs from alpha length");
  if (beta.cols() != m * (m - 1) || beta.rows() < 1) {
    throw ShapeError("beta must be [coef_dim x " + std::to_string(m * (m - 1)) + "], got [" +
                     std::to_string(beta.rows()) + " x " + std::to_string(beta.cols()) + "]");
  }
  for (Eigen::Index j = 0; j < m; ++j) {
    if (!(sigma2(j) > 0.0)) throw DomainError("sigma2 must be positive");
  }
}

MsmParams MsmParams::zeros(const MsmSpec& spec) {
  const auto m = static_cast<Eigen::Index>(spec.regimes);
  MsmParams p;
  p.alpha = Eigen::VectorXd::Zero(m);
  p.sigma2 = Eigen::VectorXd::Ones(m);
  p.beta = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(spec.coef_dim()), m * (m - 1));
  return p;
}

Eigen::MatrixXd transition_matrix_tvtp(const MsmParams& p, const Eigen::VectorXd& z) {
  const auto m = static_cast<Eigen::Index>(p.regimes());
  if (z.size() != p.beta.rows()) {
    throw ShapeError("covariate vector has " + std::to_string(z.size()) + " entries, beta expects " +
                     std::to_string(p.beta.rows()));
  }
  if (!z.allFinite()) throw NumericalError("non-finite covariate in transition logits");
  const Eigen::RowVectorXd logits = z.transpose() * p.beta;
  Eigen::MatrixXd out(m, m);
  Eigen::VectorXd row(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j + 1 < m; ++j) row(j) = logits(i * (m - 1) + j);
    row(m - 1) = 0.0;
    const double lse = log_sum_exp(row);
    out.row(i) = (row.array() - lse).exp().transpose();
  }
  return out;
}

std::vector<Eigen::MatrixXd> transition_path(const MsmParams& p, const Eigen::MatrixXd& covariates,
                                             std::size_t steps) {
  const auto k = p.beta.rows();
  if (covariates.cols() != k - 1) {
    throw ShapeError("expected " + std::to_string(k - 1) + " covariate columns, got " +
                     std::to_string(covariates.cols()));
  }
  std::vector<Eigen::MatrixXd> out;
  if (steps < 2) return out;
  out.reserve(steps - 1);
  Eigen::VectorXd z(k);
  z(0) = 1.0;
  if (k == 1) {
    out.assign(steps - 1, transition_matrix_tvtp(p, z));
    return out;
  }
  if (static_cast<std::size_t>(covariates.rows()) < steps - 1) {
    throw ShapeError("covariates have " + std::to_string(covariates.rows()) + " rows, need " +
                     std::to_string(steps - 1));
  }
  for (std::size_t t = 1; t < steps; ++t) {
    z.tail(k - 1) = covariates.row(static_cast<Eigen::Index>(t - 1)).transpose();
    out.push_back(transition_matrix_tvtp(p, z));
  }
  return out;
}

Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& P) {
  const auto m = P.rows();
  // Solve (Pᵀ − I) π = 0 with Σπ = 1 replacing the last equation.
  Eigen::MatrixXd A = P.transpose() - Eigen::MatrixXd::Identity(m, m);
  A.row(m - 1).setOnes();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(m);
  b(m - 1) = 1.0;
  Eigen::VectorXd pi = A.fullPivLu().solve(b);
  if (!pi.allFinite() || (pi.array() < -1e-12).any()) {
    pi = Eigen::VectorXd::Constant(m, 1.0 / static_cast<double>(m));
  }
  pi = pi.cwiseMax(0.0);
  return pi / pi.sum();
}

Eigen::VectorXd initial_distribution(const MsmParams& p) {
  const auto m = static_cast<Eigen::Index>(p.regimes());
  if (p.beta.rows() > 1) return Eigen::VectorXd::Constant(m, 1.0 / static_cast<double>(m));
  Eigen::VectorXd z = Eigen::VectorXd::Ones(1);
  return stationary_distribution(transition_matrix_tvtp(p, z));
}

double log_regime_density(double r, double alpha, double sigma2) {
  if (!(sigma2 > 0.0)) throw DomainError("regime density needs sigma2 > 0, got " + std::to_string(sigma2));
  const double d = r - alpha;
  return -0.5 * std::log(2.0 * std::numbers::pi * sigma2) - 0.5 * d * d / sigma2;
}

double regime_density(double r, double alpha, double sigma2) {
  return std::exp(log_regime_density(r, alpha, sigma2));
}

FilterOutput hamilton_filter(std::span<const double> returns, const Eigen::MatrixXd& covariates,
                             const MsmParams& params) {
  params.check();
  const std::size_t T = returns.size();
  if (T == 0) throw InsufficientDataError("hamilton filter needs at least one observation");
  const auto m = static_cast<Eigen::Index>(params.regimes());

  FilterOutput out;
  out.transitions = transition_path(params, covariates, T);
  out.predicted.resize(static_cast<Eigen::Index>(T), m);
  out.filtered.resize(static_cast<Eigen::Index>(T), m);

  Eigen::VectorXd pred = initial_distribution(params);
  Eigen::VectorXd a(m);
  for (std::size_t t = 0; t < T; ++t) {
    const auto ti = static_cast<Eigen::Index>(t);
    if (t > 0) pred = out.transitions[t - 1].transpose() * out.filtered.row(ti - 1).transpose();
    out.predicted.row(ti) = pred.transpose();
    for (Eigen::Index j = 0; j < m; ++j) {
      a(j) = log_regime_density(returns[t], params.alpha(j), params.sigma2(j)) +
             std::log(std::max(pred(j), kProbFloor));
    }
    const double lse = log_sum_exp(a);
    if (!std::isfinite(lse)) {
      throw NumericalError("hamilton filter: degenerate likelihood at t = " + std::to_string(t));
    }
    out.loglik += lse;
    out.filtered.row(ti) = (a.array() - lse).exp().transpose();
  }
  return out;
}

Eigen::MatrixXd kim_smoother(const FilterOutput& f) {
  const Eigen::Index T = f.filtered.rows();
  const Eigen::Index m = f.filtered.cols();
  if (T == 0) throw InsufficientDataError("kim smoother needs a non-empty filter output");
  if (static_cast<Eigen::Index>(f.transitions.size()) != T - 1) {
    throw ShapeError("kim smoother needs T-1 transition matrices");
  }
  Eigen::MatrixXd sm(T, m);
  sm.row(T - 1) = f.filtered.row(T - 1);
  for (Eigen::Index t = T - 2; t >= 0; --t) {
    const Eigen::MatrixXd& P = f.transitions[static_cast<std::size_t>(t)];
    Eigen::VectorXd ratio(m);
    for (Eigen::Index j = 0; j < m; ++j) ratio(j) = sm(t + 1, j) / std::max(f.predicted(t + 1, j), kProbFloor);
    Eigen::VectorXd row = f.filtered.row(t).transpose().cwiseProduct(P * ratio);
    const double s = row.sum();
    if (s > 0.0) {
      sm.row(t) = (row / s).transpose();
    } else {
      sm.row(t) = f.filtered.row(t);
    }
  }
  return sm;
}

FilterOutput filter_and_smooth(std::span<const double> returns, const Eigen::MatrixXd& covariates,
                               const MsmParams& params) {
  FilterOutput f = hamilton_filter(returns, covariates, params);
  f.smoothed = kim_smoother(f);
  return f;
}

double predict_return(const FilterOutput& f, const MsmParams& params, std::size_t t) {
  if (t >= static_cast<std::size_t>(f.predicted.rows())) {
    throw ValidationError("predict_return: t = " + std::to_string(t) + " outside the filtered range");
  }
  return f.predicted.row(static_cast<Eigen::Index>(t)).dot(params.alpha);
}

SimulatedPath simulate_msm(const MsmParams& params, const Eigen::MatrixXd& covariates, std::size_t steps,
                           std::uint64_t seed) {
  params.check();
  const auto transitions = transition_path(params, covariates, steps);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto draw = [&](const Eigen::VectorXd& probs) {
    const double u = unif(rng);
    double acc = 0.0;
    for (Eigen::Index j = 0; j < probs.size(); ++j) {
      acc += probs(j);
      if (u < acc) return static_cast<int>(j);
    }
    return static_cast<int>(probs.size() - 1);
  };

  SimulatedPath out;
  out.returns.reserve(steps);
  out.states.reserve(steps);
  int s = draw(initial_distribution(params));
  for (std::size_t t = 0; t < steps; ++t) {
    if (t > 0) s = draw(transitions[t - 1].row(s).transpose());
    out.states.push_back(s);
    out.returns.push_back(params.alpha(s) + std::sqrt(params.sigma2(s)) * normal(rng));
  }
  return out;
}

}  // namespace msrnn::msm
