#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "msrnn/autodiff/tape.hpp"
#include "msrnn/nn/cells.hpp"

namespace msrnn::sw {

struct SwitchingConfig {
  std::size_t regimes = 2;
  nn::CellKind kind = nn::CellKind::lstm;
  std::size_t layers = 2;
  std::size_t units = 100;
  /// Window columns: column 0 is the return, the rest are covariates.
  std::size_t features = 3;
  std::size_t sublayers = 3;
  std::size_t sub_dim = 10;
  std::size_t grid = 5;
  std::size_t degree = 3;
  /// Encoder emits all m*m entries of the multiplier instead of the
  /// off-diagonal ones with a unit diagonal.
  bool full_rho = false;
  /// Regime stacks read only the return column.
  bool returns_only = false;
  /// Keeps P uniform and skips the Bayes step (ablation).
  bool disable_switching = false;

  std::size_t covariates() const { return features - 1; }
  std::size_t z_dim() const { return full_rho ? regimes * regimes : regimes * (regimes - 1); }
  nn::CellConfig cell_shape() const;
  void validate() const;
};

nlohmann::json to_json(const SwitchingConfig& c);
SwitchingConfig switching_config_from_json(const nlohmann::json& j);

/// Streaming count/mean/M2 accumulator; sigma is the population standard
/// deviation, 1 with fewer than two observations, floored at 1e-6.
struct RunningStats {
  static constexpr double kFloor = 1e-6;
  double count = 0.0;
  double mean = 0.0;
  double m2 = 0.0;

  void push(double x);
  double sigma() const;
};

/// Off-diagonal (or full) multipliers from Z, then P = rowwise softmax(P_prev * rho).
/// P_prev is [batch, m, m], z is [batch, z_dim]; entries of z are clamped to ±30.
ad::Var update_transition(ad::Tape& tape, ad::Var p_prev, ad::Var z, std::size_t regimes, bool full_rho);
/// pi_pred[k] = sum_l pi[l] P[l, k] per row.
ad::Var predict_pi(ad::Var p, ad::Var pi_filtered);
/// Bayes step in log space with Gaussian kernel exp(-((y - yhat_k) / sigma_k)^2 / 2).
/// `observed` holds one value per batch row.
ad::Var filter_update(ad::Tape& tape, ad::Var pi_pred, ad::Var yhat, std::span<const double> observed,
                      std::span<const double> sigma);
/// Smallest index attaining the maximum.
std::size_t predict_regime(std::span<const double> pi);

/// Per-step values of one forward pass, batch row 0 only.
struct StepTrace {
  std::vector<double> transition;  // m*m row-major
  std::vector<double> pi_pred;
  std::vector<double> pi_filtered;
  std::vector<double> yhat;
  std::vector<double> sigma;
};

class SwitchingModel {
 public:
  SwitchingModel(const SwitchingConfig& config, std::uint64_t seed);
  SwitchingModel(const SwitchingModel&) = delete;
  SwitchingModel& operator=(const SwitchingModel&) = delete;

  const SwitchingConfig& config() const { return config_; }

  /// Windows are [batch, seq_len, features]. Returns the predictive regime
  /// distribution [batch, m] for the step after the window. Uses the current
  /// running deviations (frozen for the call) and records each row's final
  /// in-window predictions for `commit`.
  ad::Var forward(ad::Tape& tape, const ad::Tensor& windows, std::vector<StepTrace>* trace = nullptr);
  /// Z after the encoder has consumed the covariate steps ([batch, covariates] each).
  ad::Var encode_covariates(ad::Tape& tape, const std::vector<ad::Var>& covariate_steps);
  /// Per-regime predictions from per-regime top hidden states [batch, units].
  ad::Var regime_heads(ad::Tape& tape, const std::vector<ad::Var>& hidden);

  /// Pushes the predictions recorded by the last forward into the running
  /// deviation stats, in batch-row order.
  void commit();
  void reset_stats();
  std::vector<double> sigma() const;
  const std::vector<RunningStats>& stats() const { return stats_; }
  void set_stats(std::vector<RunningStats> stats);

  std::vector<ad::Parameter*> parameters();
  nn::Stack& regime_stack(std::size_t k) { return *regimes_[k]; }
  nn::Stack& encoder() { return *encoder_; }

 private:
  ad::Var step_input(ad::Tape& tape, const ad::Tensor& windows, std::size_t t, bool covariates_only) const;

  SwitchingConfig config_;
  std::vector<std::unique_ptr<nn::Stack>> regimes_;
  std::unique_ptr<nn::Stack> encoder_;
  std::vector<std::unique_ptr<ad::Parameter>> owned_;
  std::vector<nn::Affine> heads_;
  nn::Affine transition_;
  std::vector<RunningStats> stats_;
  std::vector<double> pending_;  // [batch * m] predictions awaiting commit
};

/// CSV with one row per in-window step: step, P entries, pi_pred, pi_filtered, yhat, sigma.
std::string trace_csv(const std::vector<StepTrace>& trace, std::size_t regimes);

}  // namespace msrnn::sw
