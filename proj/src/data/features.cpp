#include "msrnn/data/features.hpp"

#include <cmath>

#include "msrnn/error.hpp"

namespace msrnn::data {

ReturnSeries log_returns(std::span<const OhlcBar> bars) {
  if (bars.size() < 2) {
    throw InsufficientDataError("log returns need at least 2 bars, got " +
                                std::to_string(bars.size()));
  }
  ReturnSeries out;
  out.timestamps.reserve(bars.size() - 1);
  out.r.reserve(bars.size() - 1);
  for (std::size_t t = 1; t < bars.size(); ++t) {
    out.timestamps.push_back(bars[t].timestamp);
    out.r.push_back(std::log(bars[t].close) - std::log(bars[t - 1].close));
  }
  return out;
}

double hml(const OhlcBar& bar) { return std::log(bar.high) - std::log(bar.low); }

double signed_log_range(const OhlcBar& bar) {
  const double range = std::log(bar.high / bar.low);
  return bar.open >= bar.close ? range : -range;
}

double intraday_variance(const OhlcBar& bar) {
  const double psi = signed_log_range(bar);
  return psi * psi;
}

CovariateSeries covariates(std::span<const OhlcBar> bars) {
  CovariateSeries out;
  for (std::size_t t = 1; t < bars.size(); ++t) {
    out.timestamps.push_back(bars[t].timestamp);
    out.hml.push_back(hml(bars[t]));
    out.iv.push_back(intraday_variance(bars[t]));
  }
  return out;
}

RegimeLabels label_regimes(std::span<const double> closes, std::size_t horizon) {
  if (horizon == 0) throw ValidationError("label horizon must be positive");
  const std::size_t n = closes.size();
  if (n <= 2 * horizon) {
    throw InsufficientDataError("labelling with horizon " + std::to_string(horizon) + " needs more than " +
                                std::to_string(2 * horizon) + " prices, got " + std::to_string(n));
  }
  RegimeLabels out;
  out.first = horizon - 1;
  const double h = static_cast<double>(horizon);
  for (std::size_t t = out.first; t + horizon < n; ++t) {
    double past = 0.0;
    double future = 0.0;
    for (std::size_t i = 0; i < horizon; ++i) {
      past += closes[t + 1 - horizon + i];
      future += closes[t + 1 + i];
    }
    out.labels.push_back(past / h < future / h ? 1 : 0);
  }
  return out;
}

}  // namespace msrnn::data
