#include "msrnn/cli/commands.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <ostream>
#include <random>
#include <sstream>

#include "msrnn/autodiff/checkpoint.hpp"
#include "msrnn/backtest/backtest.hpp"
#include "msrnn/data/features.hpp"
#include "msrnn/data/synthetic.hpp"
#include "msrnn/error.hpp"
#include "msrnn/msm/fit.hpp"

namespace msrnn::cli {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ArtifactError*>(&e)) return kArtifactMismatch;
  if (dynamic_cast<const NumericalError*>(&e)) return kNumericalFailure;
  if (dynamic_cast<const UsageError*>(&e)) return kInternal;
  if (dynamic_cast<const Error*>(&e)) return kInputError;
  return kInternal;
}

fs::path default_output_dir() {
  const char* env = std::getenv("MSRNN_OUTPUT_DIR");
  return env && *env ? fs::path(env) : fs::path("msrnn_out");
}

namespace {

constexpr const char* kCheckpointFile = "model.ckpt";
constexpr const char* kCheckpointFormat = "msrnn-classifier";

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
  if (!os) throw IoError("write failed for " + path.string());
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
}

void echo_config(const RunConfig& cfg, const fs::path& out) { write_file(out / "config.json", to_json(cfg).dump(2) + "\n"); }

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void print_wall(std::ostream& log, std::chrono::steady_clock::time_point t0) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "wall time: %.2f s\n", seconds_since(t0));
  log << buf;
}

std::vector<data::OhlcBar> load_bars(const RunConfig& cfg) {
  if (cfg.data.empty()) throw ValidationError("no input data given (--data or \"data\" in the config)");
  return data::load_ohlc_csv(cfg.data, cfg.columns);
}

data::PreparedData prepare(const RunConfig& cfg, const std::vector<data::OhlcBar>& bars) {
  if (cfg.labels.empty()) return data::prepare_dataset(bars, cfg.pipeline);
  const std::vector<int> labels = load_bar_labels(cfg.labels, bars);
  return data::prepare_dataset(bars, cfg.pipeline, std::span<const int>(labels));
}

const data::LabeledDataset& pick_split(const data::PreparedData& prep, const std::string& split) {
  if (split == "train") return prep.splits.train;
  if (split == "val") return prep.splits.val;
  if (split == "test") return prep.splits.test;
  throw ValidationError("unknown split '" + split + "' (use train, val or test)");
}

bool stats_match(const data::NormStats& a, const data::NormStats& b) {
  if (a.names != b.names || a.size() != b.size()) return false;
  auto close = [](double x, double y) { return std::abs(x - y) <= 1e-12 * std::max({1.0, std::abs(x), std::abs(y)}); };
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!close(a.mean[i], b.mean[i]) || !close(a.std[i], b.std[i]) || !close(a.max_abs[i], b.max_abs[i])) return false;
  }
  return true;
}

// A restored classifier with the data it was trained on.
struct Loaded {
  RunConfig cfg;
  std::unique_ptr<train::Classifier> model;
  data::PreparedData prep;
};

Loaded load_checkpoint(const EvalOptions& opts) {
  if (opts.checkpoint.empty()) throw ValidationError("--checkpoint is required");
  const ad::Checkpoint ckpt = ad::Checkpoint::load(opts.checkpoint);
  json meta;
  try {
    meta = json::parse(ckpt.metadata);
  } catch (const json::exception& e) {
    throw ArtifactError(opts.checkpoint + ": metadata is not JSON: " + e.what());
  }
  if (!meta.is_object() || meta.value("format", "") != kCheckpointFormat) {
    throw ArtifactError(opts.checkpoint + ": not a classifier checkpoint");
  }
  Loaded l;
  data::NormStats stored;
  try {
    l.cfg = run_config_from_json(meta.at("config"));
    stored = data::norm_stats_from_json(meta.at("norm_stats").dump());
  } catch (const json::exception& e) {
    throw ArtifactError(opts.checkpoint + ": incomplete metadata: " + e.what());
  } catch (const Error& e) {
    throw ArtifactError(opts.checkpoint + ": invalid stored config: " + e.what());
  }
  if (!opts.data.empty()) l.cfg.data = opts.data;
  if (!opts.labels.empty()) l.cfg.labels = opts.labels;
  const auto bars = load_bars(l.cfg);
  l.prep = prepare(l.cfg, bars);
  if (!stats_match(stored, l.prep.stats)) {
    throw ArtifactError("scaling statistics of " + l.cfg.data + " differ from those stored in " + opts.checkpoint +
                        "; the checkpoint was trained on other data or pipeline settings");
  }
  l.model = train::make_classifier(l.cfg.model, l.cfg.seed);
  train::restore_checkpoint(*l.model, ckpt);
  return l;
}

std::string predictions_csv(const data::LabeledDataset& ds, const train::Evaluation& ev) {
  std::ostringstream os;
  os << "date,label,predicted";
  const std::size_t m = ev.probs.shape()[1];
  for (std::size_t k = 0; k < m; ++k) os << ",p" << k;
  os << '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    os << (ds.dates.empty() ? std::to_string(i) : data::format_date(ds.dates[i])) << ',' << ds.labels[i] << ','
       << ev.predicted[i];
    for (std::size_t k = 0; k < m; ++k) os << ',' << bt::fixed6(ev.probs.at(i, k));
    os << '\n';
  }
  return os.str();
}

double majority_share(const std::vector<int>& labels, std::size_t classes) {
  std::vector<std::size_t> counts(classes, 0);
  for (int l : labels) ++counts[static_cast<std::size_t>(l)];
  return static_cast<double>(*std::max_element(counts.begin(), counts.end())) / static_cast<double>(labels.size());
}

}  // namespace

std::vector<int> load_bar_labels(const fs::path& path, std::span<const data::OhlcBar> bars) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open labels file " + path.string());
  std::map<data::Date, int> by_date;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1) {
      if (line != "date,regime") throw ParseError(path.string() + ": expected header 'date,regime'", 1);
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ParseError(path.string() + ": expected 'date,regime'", line_no);
    int regime = 0;
    try {
      std::size_t used = 0;
      regime = std::stoi(line.substr(comma + 1), &used);
      if (used != line.size() - comma - 1) throw std::invalid_argument("trailing text");
    } catch (const std::exception&) {
      throw ParseError(path.string() + ": bad regime '" + line.substr(comma + 1) + "'", line_no);
    }
    if (!by_date.emplace(data::parse_date(line.substr(0, comma)), regime).second) {
      throw ParseError(path.string() + ": duplicate date", line_no);
    }
  }
  std::vector<int> out;
  out.reserve(bars.size());
  for (const auto& b : bars) {
    const auto it = by_date.find(b.timestamp);
    if (it == by_date.end()) {
      throw ValidationError(path.string() + " has no regime for " + data::format_date(b.timestamp));
    }
    out.push_back(it->second);
  }
  return out;
}

int cmd_ingest(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto bars = load_bars(cfg);
  const auto prep = prepare(cfg, bars);
  make_dir(out);
  data::export_dataset(prep, bars, cfg.pipeline, out);
  write_file(out / "norm_stats.json", data::norm_stats_json(prep.stats));
  echo_config(cfg, out);
  log << "bars " << bars.size() << ", usable rows " << prep.labels.size() << ", samples train "
      << prep.splits.train.size() << " / val " << prep.splits.val.size() << " / test " << prep.splits.test.size()
      << '\n';
  print_wall(log, t0);
  return kOk;
}

int cmd_fit_msm(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto bars = load_bars(cfg);
  const data::ReturnSeries rs = data::log_returns(bars);
  const data::CovariateSeries cs = data::covariates(bars);
  const std::size_t T = rs.r.size();
  Eigen::MatrixXd X(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(cfg.msm.covariates.size()));
  for (std::size_t c = 0; c < cfg.msm.covariates.size(); ++c) {
    const auto& src = cfg.msm.covariates[c] == "hml" ? cs.hml : cs.iv;
    for (std::size_t t = 0; t < T; ++t) X(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c)) = src[t];
    if (cfg.msm.standardize) {
      auto col = X.col(static_cast<Eigen::Index>(c));
      const double mean = col.mean();
      const double sd = std::sqrt((col.array() - mean).square().mean());
      if (!(sd > 0.0)) throw ValidationError("covariate " + cfg.msm.covariates[c] + " is constant");
      col = (col.array() - mean) / sd;
    }
  }
  msm::MsmSpec spec;
  spec.regimes = cfg.msm.regimes;
  spec.covariates = cfg.msm.covariates;
  msm::FitOptions fo;
  fo.starts = cfg.msm.starts;
  fo.max_iter = cfg.msm.max_iter;
  fo.seed = cfg.seed;
  const msm::FitResult fit = msm::fit_mle(rs.r, X, spec, fo);

  make_dir(out);
  std::vector<std::string> dates;
  for (const auto& d : rs.timestamps) dates.push_back(data::format_date(d));
  write_file(out / "msm_coefficients.csv", msm::coef_table_csv(fit));
  write_file(out / "msm_coefficients.json", msm::coef_table_json(fit));
  write_file(out / "msm_summary.txt", msm::coef_table_text(fit));
  write_file(out / "msm_probabilities.csv", msm::probabilities_csv(fit, dates));
  echo_config(cfg, out);
  log << msm::coef_table_text(fit);
  print_wall(log, t0);
  if (!fit.converged) {
    log << "warning: no start converged; the table above is flagged NOT CONVERGED\n";
    return kNotConverged;
  }
  return kOk;
}

int cmd_train(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto bars = load_bars(cfg);
  const auto prep = prepare(cfg, bars);
  auto model = train::make_classifier(cfg.model, cfg.seed);
  make_dir(out);
  echo_config(cfg, out);
  const train::TrainReport report =
      train::fit(*model, prep.splits.train, prep.splits.val, cfg.training, [&](const train::EpochLog& e) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "epoch %3zu  train %.6f  val %.6f  lr %.3g\n", e.epoch, e.train_loss,
                      e.val_loss, e.learning_rate);
        log << buf << std::flush;
      });

  json meta = {{"format", kCheckpointFormat},
               {"config", to_json(cfg)},
               {"norm_stats", json::parse(data::norm_stats_json(prep.stats))}};
  train::capture_checkpoint(*model, meta.dump()).save(out / kCheckpointFile);
  write_file(out / "training_log.csv", train::training_log_csv(report));

  const train::Evaluation val = train::evaluate(*model, prep.splits.val, cfg.training.batch_size);
  json summary = {{"epochs_run", report.epochs.size()},
                  {"best_epoch", report.best_epoch},
                  {"best_val_loss", report.best_val_loss},
                  {"val_accuracy", val.accuracy},
                  {"final_learning_rate", report.final_learning_rate},
                  {"lr_reductions", report.lr_reductions},
                  {"early_stopped", report.early_stopped},
                  {"samples", {{"train", prep.splits.train.size()},
                               {"val", prep.splits.val.size()},
                               {"test", prep.splits.test.size()}}},
                  {"checkpoint", kCheckpointFile}};
  write_file(out / "train_report.json", summary.dump(2) + "\n");
  char buf[160];
  std::snprintf(buf, sizeof buf, "best epoch %zu, val loss %.6f, val accuracy %.4f\n", report.best_epoch,
                report.best_val_loss, val.accuracy);
  log << buf;
  print_wall(log, t0);
  return kOk;
}

int cmd_evaluate(const EvalOptions& opts, const fs::path& out, std::ostream& log) {
  const auto t0 = std::chrono::steady_clock::now();
  Loaded l = load_checkpoint(opts);
  const auto& ds = pick_split(l.prep, opts.split);
  if (ds.size() == 0) throw InsufficientDataError("split '" + opts.split + "' is empty");
  const train::Evaluation ev = train::evaluate(*l.model, ds, l.cfg.training.batch_size);
  const bt::ConfusionMatrix cm = bt::confusion_and_scores(ev.predicted, ds.labels, l.model->classes());
  make_dir(out);
  json summary = {{"split", opts.split},
                  {"samples", ds.size()},
                  {"loss", ev.loss},
                  {"accuracy", ev.accuracy},
                  {"majority_baseline", majority_share(ds.labels, l.model->classes())}};
  write_file(out / "evaluation.json", summary.dump(2) + "\n");
  write_file(out / "predictions.csv", predictions_csv(ds, ev));
  write_file(out / "confusion.csv", bt::confusion_csv(cm));
  write_file(out / "classification.csv", bt::classification_csv(cm));
  echo_config(l.cfg, out);
  char buf[160];
  std::snprintf(buf, sizeof buf, "%s: %zu samples, loss %.6f, accuracy %.4f\n", opts.split.c_str(), ds.size(), ev.loss,
                ev.accuracy);
  log << buf;
  print_wall(log, t0);
  return kOk;
}

int cmd_backtest(const EvalOptions& opts, const fs::path& out, std::ostream& log) {
  const auto t0 = std::chrono::steady_clock::now();
  Loaded l = load_checkpoint(opts);
  if (l.model->classes() != 2) throw ValidationError("backtest needs a 2-regime (bear/bull) classifier");
  const auto& ds = pick_split(l.prep, opts.split);
  if (ds.size() < 2) throw InsufficientDataError("split '" + opts.split + "' has fewer than 2 samples");
  const train::Evaluation ev = train::evaluate(*l.model, ds, l.cfg.training.batch_size);
  const bt::BacktestResult r = bt::run_backtest(ds.dates, ev.predicted, ds.labels, ds.returns);
  bt::emit_report(r, out, "Backtest (" + opts.split + " split)");
  write_file(out / "predictions.csv", predictions_csv(ds, ev));
  echo_config(l.cfg, out);
  log << bt::report_markdown(r, "Backtest (" + opts.split + " split)");
  print_wall(log, t0);
  return kOk;
}

int cmd_simulate(const SimulateOptions& o, const fs::path& out, std::ostream& log) {
  const auto t0 = std::chrono::steady_clock::now();
  if (o.steps < 2) throw ValidationError("--steps must be at least 2");
  make_dir(out);
  if (o.kind == "planted") {
    const data::PlantedSeries ps = data::planted_regime_bars(o.steps, o.seed);
    std::ostringstream bars;
    data::write_ohlc_csv(bars, ps.bars);
    write_file(out / "ohlc.csv", bars.str());
    std::ostringstream lab;
    lab << "date,regime\n";
    for (std::size_t i = 0; i < ps.bars.size(); ++i) lab << data::format_date(ps.bars[i].timestamp) << ',' << ps.regimes[i] << '\n';
    write_file(out / "labels.csv", lab.str());
    log << "planted series: " << ps.bars.size() << " bars\n";
    print_wall(log, t0);
    return kOk;
  }
  if (o.kind != "msm") throw ValidationError("unknown simulation kind '" + o.kind + "' (use msm or planted)");

  const std::size_t m = o.alpha.size();
  if (m < 2 || o.sigma2.size() != m) throw ValidationError("--alpha and --sigma2 need the same length >= 2");
  msm::MsmSpec spec;
  spec.regimes = m;
  for (std::size_t c = 0; c < o.covariates; ++c) spec.covariates.push_back("z" + std::to_string(c + 1));
  msm::MsmParams p = msm::MsmParams::zeros(spec);
  for (std::size_t k = 0; k < m; ++k) {
    p.alpha(static_cast<Eigen::Index>(k)) = o.alpha[k];
    p.sigma2(static_cast<Eigen::Index>(k)) = o.sigma2[k];
  }
  const std::size_t K = spec.coef_dim();
  if (o.covariates == 0 && o.beta.empty()) {
    if (o.stay.size() != m) throw ValidationError("--stay needs one probability per regime");
    for (std::size_t i = 0; i < m; ++i) {
      const double stay = o.stay[i];
      if (!(stay > 0.0 && stay < 1.0)) throw ValidationError("--stay probabilities must lie in (0, 1)");
      const double off = (1.0 - stay) / static_cast<double>(m - 1);
      for (std::size_t j = 0; j + 1 < m; ++j) {
        const double pij = i == j ? stay : off;
        const double ref = i == m - 1 ? stay : off;
        p.beta(0, static_cast<Eigen::Index>(i * (m - 1) + j)) = std::log(pij / ref);
      }
    }
  } else {
    if (o.beta.size() != K * m * (m - 1)) {
      throw ValidationError("--beta needs " + std::to_string(K * m * (m - 1)) + " values (" + std::to_string(K) +
                            " per origin/destination pair)");
    }
    for (std::size_t col = 0; col < m * (m - 1); ++col) {
      for (std::size_t k = 0; k < K; ++k) p.beta(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(col)) = o.beta[col * K + k];
    }
  }
  Eigen::MatrixXd X(static_cast<Eigen::Index>(o.steps), static_cast<Eigen::Index>(o.covariates));
  std::mt19937_64 zrng(o.seed + 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index t = 0; t < X.rows(); ++t) {
    for (Eigen::Index c = 0; c < X.cols(); ++c) X(t, c) = normal(zrng);
  }
  const msm::SimulatedPath path = msm::simulate_msm(p, X, o.steps, o.seed);

  const auto bars = data::bars_from_returns(path.returns, std::vector<double>(o.steps, o.range_excess));
  std::ostringstream ohlc;
  data::write_ohlc_csv(ohlc, bars);
  write_file(out / "ohlc.csv", ohlc.str());
  std::ostringstream sim;
  sim << "date,return,state";
  for (std::size_t c = 0; c < o.covariates; ++c) sim << ",z" << c + 1;
  sim << '\n';
  for (std::size_t t = 0; t < o.steps; ++t) {
    sim << data::format_date(bars[t + 1].timestamp) << ',' << g17(path.returns[t]) << ',' << path.states[t];
    for (Eigen::Index c = 0; c < X.cols(); ++c) sim << ',' << g17(X(static_cast<Eigen::Index>(t), c));
    sim << '\n';
  }
  write_file(out / "simulated.csv", sim.str());
  json params = {{"alpha", o.alpha}, {"sigma2", o.sigma2}, {"covariates", o.covariates}, {"seed", o.seed},
                 {"steps", o.steps}};
  json beta = json::array();
  for (Eigen::Index col = 0; col < p.beta.cols(); ++col) {
    for (Eigen::Index k = 0; k < p.beta.rows(); ++k) beta.push_back(p.beta(k, col));
  }
  params["beta"] = beta;
  write_file(out / "simulation.json", params.dump(2) + "\n");
  log << "msm path: " << o.steps << " steps, " << m << " regimes\n";
  print_wall(log, t0);
  return kOk;
}

}  // namespace msrnn::cli
