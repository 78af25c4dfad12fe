#include "msrnn/backtest/backtest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "msrnn/error.hpp"

namespace msrnn::bt {

std::vector<int> positions_from_regimes(std::span<const int> regimes) {
  std::vector<int> out;
  out.reserve(regimes.size());
  for (std::size_t i = 0; i < regimes.size(); ++i) {
    if (regimes[i] == 0) out.push_back(-1);
    else if (regimes[i] == 1) out.push_back(1);
    else throw ValidationError("regime " + std::to_string(regimes[i]) + " at index " + std::to_string(i) +
                               " has no position (expected 0 = bear or 1 = bull)");
  }
  return out;
}

std::vector<double> strategy_returns(std::span<const int> positions, std::span<const double> asset) {
  if (positions.size() != asset.size()) {
    throw ValidationError("positions (" + std::to_string(positions.size()) + ") and returns (" +
                          std::to_string(asset.size()) + ") differ in length");
  }
  std::vector<double> out(asset.size(), 0.0);
  for (std::size_t t = 1; t < asset.size(); ++t) out[t] = positions[t - 1] * asset[t];
  return out;
}

double annualize_mean(double daily_mean) { return daily_mean * kDaysPerYear; }
double annual_turnover(double daily_turnover) { return daily_turnover * kDaysPerYear; }
double sharpe_ratio(double mu, double sigma) { return mu / sigma; }
double return_on_volume(double mu, double annual) { return mu / annual; }
double alpha_from(double mu, double beta, double asset_mu) { return mu - beta * asset_mu; }

double max_drawdown(std::span<const double> returns) {
  double cum = 0.0, peak = -std::numeric_limits<double>::infinity(), worst = 0.0;
  for (double r : returns) {
    cum += r;
    peak = std::max(peak, cum);
    worst = std::min(worst, cum - peak);
  }
  return worst;
}

namespace {

double mean(std::span<const double> x) { return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size()); }

// Sample covariance.
double cov(std::span<const double> a, std::span<const double> b) {
  const double ma = mean(a), mb = mean(b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - ma) * (b[i] - mb);
  return s / static_cast<double>(a.size() - 1);
}

using MetricField = Metric MetricTable::*;

const std::vector<std::pair<std::string, MetricField>>& metric_fields() {
  static const std::vector<std::pair<std::string, MetricField>> fields{
      {"mean_return", &MetricTable::mean_return},         {"std_return", &MetricTable::std_return},
      {"sharpe", &MetricTable::sharpe},                   {"max_drawdown", &MetricTable::max_drawdown},
      {"sortino", &MetricTable::sortino},                 {"daily_turnover", &MetricTable::daily_turnover},
      {"annual_turnover", &MetricTable::annual_turnover}, {"return_on_volume", &MetricTable::return_on_volume},
      {"beta", &MetricTable::beta},                       {"alpha", &MetricTable::alpha}};
  return fields;
}

}  // namespace

std::vector<std::pair<std::string, const Metric*>> metric_rows(const MetricTable& t) {
  std::vector<std::pair<std::string, const Metric*>> out;
  for (const auto& [name, field] : metric_fields()) out.emplace_back(name, &(t.*field));
  return out;
}

MetricTable compute_metrics(std::span<const double> strategy, std::span<const double> asset,
                            std::span<const int> positions) {
  const std::size_t n = strategy.size();
  if (asset.size() != n || positions.size() != n) {
    throw ValidationError("strategy, asset and position series must have equal length");
  }
  if (n == 0) throw InsufficientDataError("no observations to compute metrics on");
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(strategy[i]) || !std::isfinite(asset[i])) {
      throw NumericalError("non-finite return at index " + std::to_string(i));
    }
  }
  MetricTable t;
  t.observations = n;
  if (n < 30) t.warnings.push_back("only " + std::to_string(n) + " observations; metrics are unstable below 30");

  const double mu = annualize_mean(mean(strategy));
  const double asset_mu = annualize_mean(mean(asset));
  t.mean_return = Metric::of(mu);
  t.max_drawdown = Metric::of(max_drawdown(strategy));

  if (n < 2) {
    const std::string why = "needs at least 2 observations";
    t.std_return = t.sharpe = t.sortino = t.beta = t.alpha = Metric::absent(why);
  } else {
    const double sigma = std::sqrt(cov(strategy, strategy)) * std::sqrt(kDaysPerYear);
    t.std_return = Metric::of(sigma);
    t.sharpe = sigma > 0.0 ? Metric::of(sharpe_ratio(mu, sigma)) : Metric::absent("zero return volatility");
    const double var_asset = cov(asset, asset);
    if (var_asset > 0.0) {
      const double beta = cov(strategy, asset) / var_asset;
      t.beta = Metric::of(beta);
      t.alpha = Metric::of(alpha_from(mu, beta, asset_mu));
    } else {
      t.beta = t.alpha = Metric::absent("zero asset return variance");
    }
  }
  double down = 0.0;
  std::size_t neg = 0;
  for (double r : strategy) {
    if (r < 0.0) {
      down += r * r;
      ++neg;
    }
  }
  if (neg == 0) {
    t.sortino = Metric::absent("no negative days");
  } else {
    t.sortino = Metric::of(mu / (std::sqrt(down / static_cast<double>(neg)) * std::sqrt(kDaysPerYear)));
  }

  if (n < 2) {
    t.daily_turnover = t.annual_turnover = t.return_on_volume = Metric::absent("needs at least 2 positions");
  } else {
    double moved = 0.0;
    for (std::size_t i = 1; i < n; ++i) moved += std::abs(positions[i] - positions[i - 1]);
    const double daily = moved / static_cast<double>(n - 1) / 2.0;
    const double annual = annual_turnover(daily);
    t.daily_turnover = Metric::of(daily);
    t.annual_turnover = Metric::of(annual);
    t.return_on_volume = annual > 0.0 ? Metric::of(return_on_volume(mu, annual)) : Metric::absent("zero turnover");
  }
  return t;
}

ConfusionMatrix confusion_and_scores(std::span<const int> predicted, std::span<const int> truth, std::size_t classes) {
  if (predicted.size() != truth.size()) throw ValidationError("predicted and true labels differ in length");
  if (classes == 0) throw ValidationError("confusion matrix needs at least one class");
  ConfusionMatrix c;
  c.classes = classes;
  c.counts.assign(classes, std::vector<std::size_t>(classes, 0));
  c.total = predicted.size();
  auto check = [&](int label, const char* what, std::size_t i) {
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw ValidationError(std::string(what) + " label " + std::to_string(label) + " at index " + std::to_string(i) +
                            " outside 0.." + std::to_string(classes - 1));
    }
  };
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    check(predicted[i], "predicted", i);
    check(truth[i], "true", i);
    ++c.counts[static_cast<std::size_t>(predicted[i])][static_cast<std::size_t>(truth[i])];
  }
  std::size_t hits = 0;
  for (std::size_t k = 0; k < classes; ++k) {
    std::size_t pred_k = 0, true_k = 0;
    for (std::size_t j = 0; j < classes; ++j) {
      pred_k += c.counts[k][j];
      true_k += c.counts[j][k];
    }
    const std::size_t tp = c.counts[k][k];
    hits += tp;
    ClassScores s;
    s.support = true_k;
    s.precision = pred_k ? static_cast<double>(tp) / static_cast<double>(pred_k) : 0.0;
    s.recall = true_k ? static_cast<double>(tp) / static_cast<double>(true_k) : 0.0;
    s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    c.scores.push_back(s);
  }
  c.accuracy = c.total ? static_cast<double>(hits) / static_cast<double>(c.total) : 0.0;
  return c;
}

BacktestResult run_backtest(std::span<const data::Date> dates, std::span<const int> predicted,
                            std::span<const int> truth, std::span<const double> asset) {
  const std::size_t n = predicted.size();
  if (dates.size() != n || truth.size() != n || asset.size() != n) {
    throw ValidationError("backtest inputs must be aligned: dates " + std::to_string(dates.size()) + ", predicted " +
                          std::to_string(n) + ", true " + std::to_string(truth.size()) + ", returns " +
                          std::to_string(asset.size()));
  }
  if (n < 2) throw InsufficientDataError("backtest needs at least 2 days");
  BacktestResult r;
  r.dates.assign(dates.begin(), dates.end());
  r.predicted.assign(predicted.begin(), predicted.end());
  r.truth.assign(truth.begin(), truth.end());
  r.asset.assign(asset.begin(), asset.end());
  r.positions = positions_from_regimes(predicted);
  r.strategy = strategy_returns(r.positions, asset);
  // Day 0 holds no position, so it is left out of the metrics.
  r.metrics = compute_metrics(std::span(r.strategy).subspan(1), std::span(r.asset).subspan(1),
                              std::span<const int>(r.positions).first(n - 1));
  r.confusion = confusion_and_scores(predicted, truth, 2);
  return r;
}

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  std::string s(buf);
  if (s == "-0.000000") s = "0.000000";
  return s;
}

namespace {

double round6(double v) { return std::strtod(fixed6(v).c_str(), nullptr); }

Metric metric_from_json(const nlohmann::json& metrics, const nlohmann::json& absent, const std::string& name) {
  if (!metrics.contains(name)) throw ArtifactError("metrics JSON lacks '" + name + "'");
  const auto& v = metrics.at(name);
  if (v.is_null()) return Metric::absent(absent.contains(name) ? absent.at(name).get<std::string>() : "");
  return Metric::of(v.get<double>());
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
  if (!os) throw IoError("write failed for " + path.string());
}

std::string value_or_blank(const Metric& m) { return m.present() ? fixed6(*m.value) : ""; }

}  // namespace

nlohmann::json metrics_to_json(const MetricTable& t) {
  nlohmann::json metrics = nlohmann::json::object(), absent = nlohmann::json::object();
  for (const auto& [name, m] : metric_rows(t)) {
    if (m->present()) {
      metrics[name] = round6(*m->value);
    } else {
      metrics[name] = nullptr;
      absent[name] = m->reason;
    }
  }
  return {{"observations", t.observations}, {"metrics", metrics}, {"absent", absent}, {"warnings", t.warnings}};
}

MetricTable metrics_from_json(const nlohmann::json& j) {
  MetricTable t;
  try {
    t.observations = j.at("observations").get<std::size_t>();
    const auto& metrics = j.at("metrics");
    const nlohmann::json absent = j.value("absent", nlohmann::json::object());
    for (auto& [name, field] : metric_fields()) t.*field = metric_from_json(metrics, absent, name);
    if (j.contains("warnings")) t.warnings = j.at("warnings").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ArtifactError(std::string("malformed metrics JSON: ") + e.what());
  }
  return t;
}

std::string metrics_csv(const MetricTable& t) {
  std::ostringstream os;
  os << "metric,value,note\n";
  for (const auto& [name, m] : metric_rows(t)) os << name << ',' << value_or_blank(*m) << ',' << m->reason << '\n';
  return os.str();
}

std::string equity_csv(const BacktestResult& r) {
  std::ostringstream os;
  os << "date,position,strategy_return,asset_return,cum_strategy,cum_asset\n";
  double cs = 0.0, ca = 0.0;
  for (std::size_t i = 0; i < r.strategy.size(); ++i) {
    cs += r.strategy[i];
    ca += r.asset[i];
    os << data::format_date(r.dates[i]) << ',' << r.positions[i] << ',' << fixed6(r.strategy[i]) << ','
       << fixed6(r.asset[i]) << ',' << fixed6(cs) << ',' << fixed6(ca) << '\n';
  }
  return os.str();
}

std::string confusion_csv(const ConfusionMatrix& c) {
  std::ostringstream os;
  os << "predicted\\true";
  for (std::size_t j = 0; j < c.classes; ++j) os << ',' << j;
  os << '\n';
  for (std::size_t i = 0; i < c.classes; ++i) {
    os << i;
    for (std::size_t j = 0; j < c.classes; ++j) os << ',' << c.counts[i][j];
    os << '\n';
  }
  return os.str();
}

std::string classification_csv(const ConfusionMatrix& c) {
  std::ostringstream os;
  os << "class,precision,recall,f1,support\n";
  for (std::size_t k = 0; k < c.classes; ++k) {
    const auto& s = c.scores[k];
    os << k << ',' << fixed6(s.precision) << ',' << fixed6(s.recall) << ',' << fixed6(s.f1) << ',' << s.support
       << '\n';
  }
  os << "accuracy,,," << fixed6(c.accuracy) << ',' << c.total << '\n';
  return os.str();
}

std::string report_markdown(const BacktestResult& r, const std::string& title) {
  std::ostringstream os;
  os << "# " << title << "\n\n";
  if (!r.dates.empty()) {
    os << "Period: " << data::format_date(r.dates.front()) << " to " << data::format_date(r.dates.back()) << " ("
       << r.dates.size() << " days)\n\n";
  }
  os << "## Performance\n\n| metric | value |\n|---|---|\n";
  for (const auto& [name, m] : metric_rows(r.metrics)) {
    os << "| " << name << " | " << (m->present() ? fixed6(*m->value) : "n/a (" + m->reason + ")") << " |\n";
  }
  for (const auto& w : r.metrics.warnings) os << "\nWarning: " << w << '\n';
  const auto& c = r.confusion;
  os << "\n## Classification\n\n| class | precision | recall | f1 | support |\n|---|---|---|---|---|\n";
  for (std::size_t k = 0; k < c.classes; ++k) {
    const auto& s = c.scores[k];
    os << "| " << k << " | " << fixed6(s.precision) << " | " << fixed6(s.recall) << " | " << fixed6(s.f1) << " | "
       << s.support << " |\n";
  }
  os << "\nAccuracy: " << fixed6(c.accuracy) << " over " << c.total << " samples\n";
  os << "\n## Confusion matrix (rows predicted, columns true)\n\n|  |";
  for (std::size_t j = 0; j < c.classes; ++j) os << ' ' << j << " |";
  os << "\n|---|";
  for (std::size_t j = 0; j < c.classes; ++j) os << "---|";
  os << '\n';
  for (std::size_t i = 0; i < c.classes; ++i) {
    os << "| " << i << " |";
    for (std::size_t j = 0; j < c.classes; ++j) os << ' ' << c.counts[i][j] << " |";
    os << '\n';
  }
  return os.str();
}

void emit_report(const BacktestResult& r, const std::filesystem::path& dir, const std::string& title) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  nlohmann::json j = metrics_to_json(r.metrics);
  if (!r.dates.empty()) {
    j["period"] = {{"start", data::format_date(r.dates.front())}, {"end", data::format_date(r.dates.back())}};
  }
  write_file(dir / "metrics.json", j.dump(2) + "\n");
  write_file(dir / "metrics.csv", metrics_csv(r.metrics));
  write_file(dir / "equity.csv", equity_csv(r));
  write_file(dir / "confusion.csv", confusion_csv(r.confusion));
  write_file(dir / "classification.csv", classification_csv(r.confusion));
  write_file(dir / "report.md", report_markdown(r, title));
}

}  // namespace msrnn::bt
