#include "msrnn/data/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "msrnn/error.hpp"

namespace msrnn::data {

Date synthetic_epoch() {
  using namespace std::chrono;
  return sys_days(year{2018} / January / 1);
}

std::vector<OhlcBar> bars_from_returns(const std::vector<double>& returns, const std::vector<double>& excess,
                                       double start_price) {
  if (returns.size() != excess.size()) throw ShapeError("bars_from_returns: length mismatch");
  std::vector<OhlcBar> bars;
  bars.reserve(returns.size() + 1);
  const Date d0 = synthetic_epoch();
  bars.push_back({d0, start_price, start_price, start_price, start_price});
  double log_close = std::log(start_price);
  for (std::size_t t = 0; t < returns.size(); ++t) {
    const double log_open = log_close;
    log_close += returns[t];
    const double half = 0.5 * std::max(0.0, excess[t]);
    OhlcBar b;
    b.timestamp = d0 + std::chrono::days(static_cast<int>(t + 1));
    b.open = std::exp(log_open);
    b.close = std::exp(log_close);
    b.high = std::exp(std::max(log_open, log_close) + half);
    b.low = std::exp(std::min(log_open, log_close) - half);
    bars.push_back(b);
  }
  return bars;
}

PlantedSeries planted_regime_bars(std::size_t n, std::uint64_t seed, const PlantedParams& p) {
  if (n < 2) throw InsufficientDataError("planted series needs at least 2 bars");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  PlantedSeries out;
  out.regimes.resize(n);
  out.regimes[0] = unif(rng) < 0.5 ? 1 : 0;
  std::vector<double> returns(n - 1);
  std::vector<double> excess(n - 1);
  for (std::size_t t = 1; t < n; ++t) {
    const int prev = out.regimes[t - 1];
    const int s = unif(rng) < p.stay_prob ? prev : 1 - prev;
    out.regimes[t] = s;
    const double z = normal(rng);
    const double u = unif(rng);
    if (s == 1) {
      returns[t - 1] = p.bull_mean + p.bull_sd * z;
      excess[t - 1] = p.bull_excess_lo + (p.bull_excess_hi - p.bull_excess_lo) * u;
    } else {
      returns[t - 1] = p.bear_mean + p.bear_sd * z;
      excess[t - 1] = p.bear_excess_lo + (p.bear_excess_hi - p.bear_excess_lo) * u;
    }
  }
  out.bars = bars_from_returns(returns, excess, p.start_price);
  return out;
}

}  // namespace msrnn::data
