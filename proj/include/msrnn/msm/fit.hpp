#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "msrnn/msm/model.hpp"

namespace msrnn::msm {

/// Unconstrained coordinates used by the optimizer:
/// [alpha (m), log sigma2 (m), beta column-major by logit then coefficient].
Eigen::VectorXd pack(const MsmParams& p);
MsmParams unpack(const Eigen::VectorXd& theta, std::size_t regimes, std::size_t coef_dim);

/// Log-likelihood of the filter recursion evaluated on an autodiff tape, with
/// its gradient with respect to the packed coordinates when `grad` is set.
double loglik_with_gradient(const Eigen::VectorXd& theta, std::size_t regimes, std::span<const double> returns,
                            const Eigen::MatrixXd& covariates, Eigen::VectorXd* grad);

/// Relabels regimes by ascending sigma2, rewriting the logits against the new
/// reference destination. The likelihood is unchanged.
MsmParams canonicalize(const MsmParams& p);

struct FitOptions {
  std::size_t starts = 5;
  std::size_t max_iter = 500;
  double grad_tol = 1e-6;
  std::uint64_t seed = 0;
  std::optional<MsmParams> init;
};

struct CoefRow {
  std::string group;  // "regime 1", "transitions", ...
  std::string term;   // "const", "sigma2", "p[1->1]", "p[1->1].hml"
  double coef = 0.0;
  std::optional<double> std_err;

  std::optional<double> z() const;
  std::optional<double> p_value() const;
  std::optional<double> ci_low() const;
  std::optional<double> ci_high() const;
};

struct StartSummary {
  double loglik = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  bool finite = true;
  std::string status;
};

struct FitResult {
  MsmSpec spec;
  MsmParams params;
  double loglik = 0.0;
  bool converged = false;
  std::size_t best_start = 0;
  std::size_t iterations = 0;
  std::size_t observations = 0;
  std::vector<StartSummary> starts;
  std::vector<CoefRow> table;
  bool hessian_singular = false;
  FilterOutput filter;  // with smoothed probabilities
};

/// Maximum likelihood by multi-start BFGS. Returns the best start even when
/// none converged (check `converged`). Standard errors are absent when the
/// numerical Hessian is not positive definite.
FitResult fit_mle(std::span<const double> returns, const Eigen::MatrixXd& covariates, const MsmSpec& spec,
                  const FitOptions& options = {});

std::string coef_table_csv(const FitResult& fit);
std::string coef_table_json(const FitResult& fit);
/// Columns: date (or index when `dates` is empty), then predicted, filtered
/// and smoothed probability per regime.
std::string probabilities_csv(const FitResult& fit, std::span<const std::string> dates = {});
/// Human-readable table in the layout of a regression summary.
std::string coef_table_text(const FitResult& fit);

}  // namespace msrnn::msm
