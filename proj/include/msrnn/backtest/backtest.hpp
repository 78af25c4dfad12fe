#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "msrnn/data/ohlc.hpp"

namespace msrnn::bt {

constexpr double kDaysPerYear = 365.0;

/// 0 (bear) → −1, 1 (bull) → +1.
std::vector<int> positions_from_regimes(std::span<const int> regimes);

/// strat[0] = 0 and strat[t] = positions[t−1] · asset[t]: the position chosen
/// at the close of day t−1 is held through day t.
std::vector<double> strategy_returns(std::span<const int> positions, std::span<const double> asset);

/// A metric value, or the reason it could not be computed.
struct Metric {
  std::optional<double> value;
  std::string reason;

  static Metric of(double v) { return {v, {}}; }
  static Metric absent(std::string why) { return {std::nullopt, std::move(why)}; }
  bool present() const { return value.has_value(); }
  bool operator==(const Metric&) const = default;
};

struct MetricTable {
  Metric mean_return;       // annualized
  Metric std_return;        // annualized
  Metric sharpe;
  Metric max_drawdown;      // on cumulative log returns, ≤ 0
  Metric sortino;
  Metric daily_turnover;
  Metric annual_turnover;
  Metric return_on_volume;
  Metric beta;
  Metric alpha;
  std::size_t observations = 0;
  std::vector<std::string> warnings;

  bool operator==(const MetricTable&) const = default;
};

/// Ordered (name, metric) pairs as written to the report files.
std::vector<std::pair<std::string, const Metric*>> metric_rows(const MetricTable& t);

// Building blocks shared with compute_metrics.
double annualize_mean(double daily_mean);
double annual_turnover(double daily_turnover);
double sharpe_ratio(double mu, double sigma);
double return_on_volume(double mu, double annual_turnover);
double alpha_from(double mu, double beta, double asset_mu);

/// Minimum of cum_t − max_{u≤t} cum_u over the running sum of `returns`.
double max_drawdown(std::span<const double> returns);

/// Metrics of daily log returns `strategy` against the aligned `asset`
/// series. `positions` (same length) drives the turnover figures. Sample
/// standard deviations; downside deviation is the root mean square of the
/// negative days.
MetricTable compute_metrics(std::span<const double> strategy, std::span<const double> asset,
                            std::span<const int> positions);

struct ClassScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;  // true count
};

struct ConfusionMatrix {
  std::size_t classes = 0;
  std::vector<std::vector<std::size_t>> counts;  // [predicted][true]
  std::vector<ClassScores> scores;
  double accuracy = 0.0;
  std::size_t total = 0;
};

/// Zero denominators give a score of 0.
ConfusionMatrix confusion_and_scores(std::span<const int> predicted, std::span<const int> truth,
                                     std::size_t classes = 2);

struct BacktestResult {
  std::vector<data::Date> dates;
  std::vector<int> predicted;
  std::vector<int> truth;
  std::vector<int> positions;
  std::vector<double> strategy;  // daily log returns, first entry 0
  std::vector<double> asset;
  MetricTable metrics;
  ConfusionMatrix confusion;
};

/// Positions from `predicted`, lagged strategy returns, metrics over the
/// days that hold a position (all but the first) and the confusion matrix.
BacktestResult run_backtest(std::span<const data::Date> dates, std::span<const int> predicted,
                            std::span<const int> truth, std::span<const double> asset);

nlohmann::json metrics_to_json(const MetricTable& t);
MetricTable metrics_from_json(const nlohmann::json& j);

std::string metrics_csv(const MetricTable& t);
std::string equity_csv(const BacktestResult& r);
std::string confusion_csv(const ConfusionMatrix& c);
std::string classification_csv(const ConfusionMatrix& c);
std::string report_markdown(const BacktestResult& r, const std::string& title);

/// Writes metrics.json, metrics.csv, equity.csv, confusion.csv,
/// classification.csv and report.md into `dir`.
void emit_report(const BacktestResult& r, const std::filesystem::path& dir, const std::string& title = "Backtest");

/// Fixed 6-decimal rendering used by every report file.
std::string fixed6(double v);

}  // namespace msrnn::bt
