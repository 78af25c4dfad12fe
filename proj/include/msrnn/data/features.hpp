#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "msrnn/data/ohlc.hpp"

namespace msrnn::data {

struct ReturnSeries {
  std::vector<Date> timestamps;
  std::vector<double> r;
};

/// r_t = ln close_t − ln close_{t−1}; stamped with the later bar's date.
ReturnSeries log_returns(std::span<const OhlcBar> bars);

/// ln(high) − ln(low).
double hml(const OhlcBar& bar);

/// Signed log range: ln(H/L) on down days (open ≥ close), ln(L/H) otherwise.
double signed_log_range(const OhlcBar& bar);
/// Square of the signed log range.
double intraday_variance(const OhlcBar& bar);

struct CovariateSeries {
  std::vector<Date> timestamps;
  std::vector<double> hml;
  std::vector<double> iv;
};

/// Covariates for bars 1..n−1, aligned with log_returns.
CovariateSeries covariates(std::span<const OhlcBar> bars);

struct RegimeLabels {
  /// Index into the close series of the first labelled point.
  std::size_t first = 0;
  std::vector<int> labels;
};

/// 1 (bull) when the mean of the `horizon` closes ending at t is below the
/// mean of the next `horizon` closes, else 0 (bear). Points lacking either
/// full window are dropped.
RegimeLabels label_regimes(std::span<const double> closes, std::size_t horizon = 20);

}  // namespace msrnn::data
