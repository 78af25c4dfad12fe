#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace msrnn::msm {

/// Number of regimes plus the covariates entering the transition logits. No
/// covariates means constant transition probabilities.
struct MsmSpec {
  std::size_t regimes = 2;
  std::vector<std::string> covariates;

  std::size_t coef_dim() const { return 1 + covariates.size(); }
  bool time_varying() const { return !covariates.empty(); }
};

/// Gaussian emission per regime plus reference-category logit coefficients.
///
/// `beta` is [coef_dim × m(m−1)]. Column i·(m−1)+j holds the coefficients on
/// [1, covariates...] of the logit for origin i → destination j, j < m−1.
/// The last destination is the zero reference.
struct MsmParams {
  Eigen::VectorXd alpha;
  Eigen::VectorXd sigma2;
  Eigen::MatrixXd beta;

  std::size_t regimes() const { return static_cast<std::size_t>(alpha.size()); }
  std::size_t coef_dim() const { return static_cast<std::size_t>(beta.rows()); }

  /// Validates shapes and positivity; throws ShapeError / DomainError.
  void check() const;
  /// All-zero logits (uniform rows) for the given spec.
  static MsmParams zeros(const MsmSpec& spec);
};

/// Row-stochastic matrix for covariate vector `z` (leading intercept 1).
Eigen::MatrixXd transition_matrix_tvtp(const MsmParams& p, const Eigen::VectorXd& z);

/// Matrices applied at steps 1..T−1; entry t−1 uses covariate row t−1.
/// `covariates` is [T × c] without the intercept column.
std::vector<Eigen::MatrixXd> transition_path(const MsmParams& p, const Eigen::MatrixXd& covariates,
                                             std::size_t steps);

/// Left eigenvector of P for eigenvalue 1, normalized to sum 1.
Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& transition);

/// Uniform for time-varying transitions, stationary otherwise.
Eigen::VectorXd initial_distribution(const MsmParams& p);

double log_regime_density(double r, double alpha, double sigma2);
double regime_density(double r, double alpha, double sigma2);

struct FilterOutput {
  Eigen::MatrixXd predicted;  // [T × m], row t = P(s_t | F_{t−1})
  Eigen::MatrixXd filtered;   // [T × m], row t = P(s_t | F_t)
  Eigen::MatrixXd smoothed;   // [T × m], empty until kim_smoother runs
  double loglik = 0.0;
  std::vector<Eigen::MatrixXd> transitions;  // T−1 entries
};

/// Forward recursion in log space. Throws NumericalError when a step has no
/// finite likelihood.
FilterOutput hamilton_filter(std::span<const double> returns, const Eigen::MatrixXd& covariates,
                             const MsmParams& params);

/// Backward smoothing pass; returns P(s_t | F_T).
Eigen::MatrixXd kim_smoother(const FilterOutput& f);

/// Filter followed by the smoother.
FilterOutput filter_and_smooth(std::span<const double> returns, const Eigen::MatrixXd& covariates,
                               const MsmParams& params);

/// E[r_t | F_{t−1}] = predicted.row(t) · alpha.
double predict_return(const FilterOutput& f, const MsmParams& params, std::size_t t);

struct SimulatedPath {
  std::vector<double> returns;
  std::vector<int> states;
};

/// Draws a regime path and returns. `covariates` must have `steps` rows (or
/// zero columns for constant transitions).
SimulatedPath simulate_msm(const MsmParams& params, const Eigen::MatrixXd& covariates, std::size_t steps,
                           std::uint64_t seed);

}  // namespace msrnn::msm
