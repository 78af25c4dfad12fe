#pragma once

#include <cstdint>
#include <vector>

#include "msrnn/data/ohlc.hpp"

namespace msrnn::data {

/// Two-state Markov chain (0 = bear, 1 = bull) driving daily bars. The
/// intraday range carries a state-dependent excess over |r| so the hml and
/// iv covariates separate the states.
struct PlantedParams {
  double stay_prob = 0.97;
  double bull_mean = 0.004;
  double bull_sd = 0.01;
  double bear_mean = -0.004;
  double bear_sd = 0.02;
  double bull_excess_lo = 0.005;
  double bull_excess_hi = 0.015;
  double bear_excess_lo = 0.035;
  double bear_excess_hi = 0.05;
  double start_price = 100.0;
};

struct PlantedSeries {
  std::vector<OhlcBar> bars;
  std::vector<int> regimes;  // one per bar
};

PlantedSeries planted_regime_bars(std::size_t n, std::uint64_t seed, const PlantedParams& p = {});

/// Bars whose close-to-close log returns are exactly `returns`, with open at
/// the previous close and a symmetric intraday excess range of `excess[t]`.
std::vector<OhlcBar> bars_from_returns(const std::vector<double>& returns,
                                       const std::vector<double>& excess, double start_price = 100.0);

/// First synthetic calendar day.
Date synthetic_epoch();

}  // namespace msrnn::data
