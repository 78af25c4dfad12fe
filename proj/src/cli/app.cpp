#include <functional>
#include <ostream>
#include <type_traits>

#include "CLI11.hpp"

#include "msrnn/cli/commands.hpp"
#include "msrnn/error.hpp"

namespace msrnn::cli {

namespace {

// Flags shared by the commands that read a RunConfig. Each value is applied
// on top of the config file only when given on the command line.
struct RunFlags {
  RunConfig defaults;
  std::string config;
  std::string out;
  std::vector<std::function<void(RunConfig&)>> overrides;

  template <class T, class Apply>
  void add(CLI::App* cmd, const std::string& name, T init, const std::string& help, Apply apply) {
    auto value = std::make_shared<T>(init);
    CLI::Option* opt = cmd->add_option(name, *value, help)->capture_default_str();
    if constexpr (std::is_same_v<T, bool>) opt->default_str(init ? "on" : "off");
    overrides.push_back([opt, value, apply](RunConfig& c) {
      if (opt->count() > 0) apply(c, *value);
    });
  }
};

void add_common(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--config", f.config, "JSON run config; flags given here override it")->default_str("none");
  cmd->add_option("--out", f.out, "output directory")->default_str("$MSRNN_OUTPUT_DIR or msrnn_out");
  f.add(cmd, "--seed", f.defaults.seed, "random seed", [](RunConfig& c, std::uint64_t v) { c.seed = v; });
}

void add_data(CLI::App* cmd, RunFlags& f) {
  f.add(cmd, "--data", std::string("none"), "OHLC CSV file", [](RunConfig& c, const std::string& v) { c.data = v; });
  f.add(cmd, "--labels", std::string("none"), "per-bar regime CSV (date,regime) replacing the horizon labels",
        [](RunConfig& c, const std::string& v) { c.labels = v; });
}

void add_pipeline(CLI::App* cmd, RunFlags& f) {
  const auto& p = f.defaults.pipeline;
  f.add(cmd, "--horizon", p.horizon, "labelling horizon in days",
        [](RunConfig& c, std::size_t v) { c.pipeline.horizon = v; });
  f.add(cmd, "--seq-len", p.seq_len, "window length", [](RunConfig& c, std::size_t v) { c.pipeline.seq_len = v; });
  f.add(cmd, "--train-frac", p.train_frac, "share of samples used for train+val",
        [](RunConfig& c, double v) { c.pipeline.train_frac = v; });
  f.add(cmd, "--val-frac", p.val_frac, "share of train+val held out for validation",
        [](RunConfig& c, double v) { c.pipeline.val_frac = v; });
}

std::string join_covariates(const std::vector<std::string>& cs) {
  if (cs.empty()) return "none";
  std::string s;
  for (const auto& c : cs) s += (s.empty() ? "" : ",") + c;
  return s;
}

void add_msm(CLI::App* cmd, RunFlags& f) {
  const auto& m = f.defaults.msm;
  f.add(cmd, "--regimes", m.regimes, "number of regimes (2 or 3)", [](RunConfig& c, std::size_t v) { c.msm.regimes = v; });
  f.add(cmd, "--covariates", join_covariates(m.covariates), "transition covariates: none, hml, iv or hml,iv",
        [](RunConfig& c, const std::string& v) { c.msm.covariates = parse_covariate_list(v); });
  f.add(cmd, "--standardize", m.standardize, "standardize covariates before fitting (on/off)",
        [](RunConfig& c, bool v) { c.msm.standardize = v; });
  f.add(cmd, "--starts", m.starts, "optimizer starts", [](RunConfig& c, std::size_t v) { c.msm.starts = v; });
  f.add(cmd, "--max-iter", m.max_iter, "iterations per start", [](RunConfig& c, std::size_t v) { c.msm.max_iter = v; });
}

void add_model(CLI::App* cmd, RunFlags& f) {
  const auto& n = f.defaults.model.net;
  const auto& t = f.defaults.training;
  f.add(cmd, "--model", nn::to_string(n.kind), "cell kind: gru, lstm or tkan",
        [](RunConfig& c, const std::string& v) { c.model.net.kind = nn::parse_cell_kind(v); });
  f.add(cmd, "--switching", f.defaults.model.switching, "switching model (on) or plain classifier (off)",
        [](RunConfig& c, bool v) { c.model.switching = v; });
  f.add(cmd, "--regimes", n.regimes, "regimes / classes", [](RunConfig& c, std::size_t v) { c.model.net.regimes = v; });
  f.add(cmd, "--layers", n.layers, "stacked cells per network", [](RunConfig& c, std::size_t v) { c.model.net.layers = v; });
  f.add(cmd, "--units", n.units, "hidden units per cell", [](RunConfig& c, std::size_t v) { c.model.net.units = v; });
  f.add(cmd, "--epochs", t.max_epochs, "maximum epochs", [](RunConfig& c, std::size_t v) { c.training.max_epochs = v; });
  f.add(cmd, "--batch-size", t.batch_size, "mini-batch size", [](RunConfig& c, std::size_t v) { c.training.batch_size = v; });
  f.add(cmd, "--lr", t.learning_rate, "initial learning rate", [](RunConfig& c, double v) { c.training.learning_rate = v; });
  f.add(cmd, "--patience", t.patience, "early stopping patience (epochs)",
        [](RunConfig& c, std::size_t v) { c.training.patience = v; });
  f.add(cmd, "--lr-patience", t.lr_patience, "epochs without improvement before the learning rate drops",
        [](RunConfig& c, std::size_t v) { c.training.lr_patience = v; });
  f.add(cmd, "--lr-factor", t.lr_factor, "learning rate reduction factor",
        [](RunConfig& c, double v) { c.training.lr_factor = v; });
}

RunConfig resolve(const RunFlags& f) {
  RunConfig c = f.config.empty() ? RunConfig{} : load_run_config(f.config);
  for (const auto& apply : f.overrides) apply(c);
  c.validate();
  if (!c.data.empty() && !std::filesystem::exists(c.data)) throw IoError("data file not found: " + c.data);
  if (!c.labels.empty() && !std::filesystem::exists(c.labels)) throw IoError("labels file not found: " + c.labels);
  return c;
}

std::filesystem::path output_dir(const std::string& flag, const std::string& configured) {
  if (!flag.empty()) return flag;
  if (!configured.empty()) return configured;
  return default_output_dir();
}

void add_eval(CLI::App* cmd, EvalOptions& o, std::string& out) {
  cmd->add_option("--checkpoint", o.checkpoint, "checkpoint written by train")->required();
  cmd->add_option("--split", o.split, "split to run on: train, val or test")->capture_default_str();
  cmd->add_option("--data", o.data, "OHLC CSV overriding the one stored in the checkpoint")->default_str("stored");
  cmd->add_option("--labels", o.labels, "regime CSV overriding the one stored in the checkpoint")
      ->default_str("stored");
  cmd->add_option("--out", out, "output directory")->default_str("$MSRNN_OUTPUT_DIR or msrnn_out");
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Regime classification with Markov switching and switching recurrent networks", "msrnn"};
  app.require_subcommand(1);
  app.fallthrough(false);

  RunFlags ingest_f, msm_f, train_f;
  CLI::App* ingest = app.add_subcommand("ingest", "load OHLC bars and export returns, covariates, labels and windows");
  add_common(ingest, ingest_f);
  add_data(ingest, ingest_f);
  add_pipeline(ingest, ingest_f);

  CLI::App* fit_msm = app.add_subcommand("fit-msm", "fit a Markov switching model and export coefficient tables");
  add_common(fit_msm, msm_f);
  add_data(fit_msm, msm_f);
  add_msm(fit_msm, msm_f);

  CLI::App* train = app.add_subcommand("train", "train a switching or plain recurrent regime classifier");
  add_common(train, train_f);
  add_data(train, train_f);
  add_pipeline(train, train_f);
  add_model(train, train_f);

  EvalOptions eval_o, bt_o;
  std::string eval_out, bt_out;
  CLI::App* evaluate = app.add_subcommand("evaluate", "score a checkpoint on one split");
  add_eval(evaluate, eval_o, eval_out);
  CLI::App* backtest = app.add_subcommand("backtest", "long/short backtest and report bundle for a checkpoint");
  add_eval(backtest, bt_o, bt_out);

  SimulateOptions sim_o;
  std::string sim_out;
  CLI::App* simulate = app.add_subcommand("simulate", "generate synthetic data (msm path or planted regimes)");
  simulate->add_option("--kind", sim_o.kind, "msm or planted")->capture_default_str();
  simulate->add_option("--steps", sim_o.steps, "observations to draw")->capture_default_str();
  simulate->add_option("--seed", sim_o.seed, "random seed")->capture_default_str();
  simulate->add_option("--alpha", sim_o.alpha, "regime means")->delimiter(',')->capture_default_str();
  simulate->add_option("--sigma2", sim_o.sigma2, "regime variances")->delimiter(',')->capture_default_str();
  simulate->add_option("--stay", sim_o.stay, "probability of staying in each regime")
      ->delimiter(',')
      ->capture_default_str();
  simulate->add_option("--covariates", sim_o.covariates, "N(0,1) covariates driving the transitions")
      ->capture_default_str();
  simulate->add_option("--beta", sim_o.beta, "transition logit coefficients, (1+covariates) per origin/destination")
      ->delimiter(',')
      ->default_str("none");
  simulate->add_option("--range-excess", sim_o.range_excess, "intraday range added to |return| in the OHLC file")
      ->capture_default_str();
  simulate->add_option("--out", sim_out, "output directory")->default_str("$MSRNN_OUTPUT_DIR or msrnn_out");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInputError;
  }

  try {
    if (ingest->parsed()) {
      const RunConfig c = resolve(ingest_f);
      return cmd_ingest(c, output_dir(ingest_f.out, c.output_dir), out);
    }
    if (fit_msm->parsed()) {
      const RunConfig c = resolve(msm_f);
      return cmd_fit_msm(c, output_dir(msm_f.out, c.output_dir), out);
    }
    if (train->parsed()) {
      const RunConfig c = resolve(train_f);
      return cmd_train(c, output_dir(train_f.out, c.output_dir), out);
    }
    if (evaluate->parsed()) return cmd_evaluate(eval_o, output_dir(eval_out, ""), out);
    if (backtest->parsed()) return cmd_backtest(bt_o, output_dir(bt_out, ""), out);
    if (simulate->parsed()) return cmd_simulate(sim_o, output_dir(sim_out, ""), out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return kInternal;
}

}  // namespace msrnn::cli
