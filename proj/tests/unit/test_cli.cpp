#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"

#include "msrnn/autodiff/checkpoint.hpp"
#include "msrnn/cli/commands.hpp"
#include "msrnn/data/features.hpp"
#include "msrnn/error.hpp"

using namespace msrnn;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "msrnn");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = msrnn::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("msrnn_test_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void same_files(const fs::path& a, const fs::path& b) {
  std::size_t n = 0;
  for (const auto& entry : fs::directory_iterator(a)) {
    const fs::path other = b / entry.path().filename();
    INFO(entry.path().filename().string());
    REQUIRE(fs::exists(other));
    CHECK(slurp(entry.path()) == slurp(other));
    ++n;
  }
  CHECK(n > 0);
}

std::size_t lines(const fs::path& p) {
  const std::string s = slurp(p);
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

// Planted series plus a short training run on it.
struct Trained {
  fs::path root;
  fs::path data;
  fs::path labels;
  fs::path run;
};

Trained trained(const std::string& name, const std::vector<std::string>& extra = {}) {
  Trained t;
  t.root = scratch(name);
  REQUIRE(invoke({"simulate", "--kind", "planted", "--steps", "400", "--seed", "3", "--out", (t.root / "sim").string()})
              .code == 0);
  t.data = t.root / "sim" / "ohlc.csv";
  t.labels = t.root / "sim" / "labels.csv";
  t.run = t.root / "train";
  std::vector<std::string> args{"train",   "--data", t.data.string(), "--labels", t.labels.string(), "--units", "4",
                                "--layers", "1",     "--epochs",      "3",        "--lr",            "0.01", "--out",
                                t.run.string()};
  args.insert(args.end(), extra.begin(), extra.end());
  const Result r = invoke(args);
  INFO(r.err);
  REQUIRE(r.code == 0);
  return t;
}

}  // namespace

TEST_CASE("help lists every option with its default") {
  for (const char* cmd : {"ingest", "fit-msm", "train", "evaluate", "backtest", "simulate"}) {
    const Result r = invoke({cmd, "--help"});
    CHECK(r.code == 0);
    std::istringstream in(r.out);
    std::string line;
    std::size_t options = 0;
    while (std::getline(in, line)) {
      if (line.rfind("  --", 0) != 0) continue;
      ++options;
      INFO(cmd << ": " << line);
      CHECK((line.find('[') != std::string::npos || line.find("REQUIRED") != std::string::npos));
    }
    CHECK(options >= 4);
  }
}

TEST_CASE("exit codes for input errors") {
  CHECK(invoke({}).code == 2);
  CHECK(invoke({"train", "--data", "/no/such/file.csv"}).code == 2);
  const Result r = invoke({"ingest", "--data", "/no/such/file.csv"});
  CHECK(r.code == 2);
  CHECK(r.err.find("/no/such/file.csv") != std::string::npos);
  CHECK(invoke({"train", "--bogus", "1"}).code == 2);
  CHECK(invoke({"train", "--model", "rnn", "--data", "x"}).code == 2);

  const fs::path dir = scratch("config");
  std::ofstream(dir / "bad.json") << R"({"seed": 1, "unexpected": true})";
  CHECK(invoke({"train", "--config", (dir / "bad.json").string()}).code == 2);
  std::ofstream(dir / "nested.json") << R"({"training": {"epochs": 3}})";
  CHECK(invoke({"train", "--config", (dir / "nested.json").string()}).code == 2);
  std::ofstream(dir / "broken.json") << "{";
  CHECK(invoke({"train", "--config", (dir / "broken.json").string()}).code == 2);
}

TEST_CASE("exception classes map onto exit codes") {
  CHECK(cli::exit_code_for(ParseError("x")) == 2);
  CHECK(cli::exit_code_for(ValidationError("x")) == 2);
  CHECK(cli::exit_code_for(IoError("x")) == 2);
  CHECK(cli::exit_code_for(InsufficientDataError("x")) == 2);
  CHECK(cli::exit_code_for(NumericalError("x")) == 4);
  CHECK(cli::exit_code_for(ArtifactError("x")) == 5);
  CHECK(cli::exit_code_for(std::runtime_error("x")) == 1);
}

TEST_CASE("output directory defaults to the environment variable") {
  const fs::path dir = scratch("env");
  const fs::path cwd = fs::current_path();
  fs::current_path(dir);
  setenv("MSRNN_OUTPUT_DIR", (dir / "from_env").string().c_str(), 1);
  CHECK(invoke({"simulate", "--steps", "50"}).code == 0);
  CHECK(fs::exists(dir / "from_env" / "simulated.csv"));
  unsetenv("MSRNN_OUTPUT_DIR");
  CHECK(invoke({"simulate", "--steps", "50"}).code == 0);
  CHECK(fs::exists(dir / "msrnn_out" / "simulated.csv"));
  fs::current_path(cwd);
}

TEST_CASE("ingest artifacts agree with the labelling") {
  const fs::path dir = scratch("ingest");
  REQUIRE(invoke({"simulate", "--steps", "300", "--seed", "2", "--out", (dir / "sim").string()}).code == 0);
  const fs::path data = dir / "sim" / "ohlc.csv";
  const Result r = invoke({"ingest", "--data", data.string(), "--horizon", "10", "--seq-len", "5", "--out",
                        (dir / "out").string()});
  INFO(r.err);
  REQUIRE(r.code == 0);
  const auto bars = data::load_ohlc_csv(data);
  std::vector<double> closes;
  for (const auto& b : bars) closes.push_back(b.close);
  const auto lab = data::label_regimes(closes, 10);
  CHECK(lines(dir / "out" / "labels.csv") == lab.labels.size() + 1);
  CHECK(lines(dir / "out" / "returns.csv") == bars.size());
  for (const char* f : {"covariates.csv", "windows.csv", "samples.csv", "norm_stats.json", "config.json"}) {
    CHECK(fs::exists(dir / "out" / f));
  }
}

TEST_CASE("fit-msm tables, covariate rows and non-convergence") {
  const fs::path dir = scratch("msm");
  REQUIRE(invoke({"simulate", "--steps", "1500", "--seed", "4", "--out", (dir / "sim").string()}).code == 0);
  const std::string data = (dir / "sim" / "ohlc.csv").string();
  const Result ok = invoke({"fit-msm", "--data", data, "--out", (dir / "basic").string()});
  INFO(ok.err);
  CHECK(ok.code == 0);
  for (const char* f : {"msm_coefficients.csv", "msm_coefficients.json", "msm_summary.txt", "msm_probabilities.csv",
                        "config.json"}) {
    CHECK(fs::exists(dir / "basic" / f));
  }
  CHECK(lines(dir / "basic" / "msm_probabilities.csv") == 1501);

  const Result tv = invoke({"fit-msm", "--data", data, "--covariates", "hml,iv", "--standardize", "on", "--starts", "2",
                         "--out", (dir / "tvtp").string()});
  CHECK((tv.code == 0 || tv.code == 3));
  const std::string table = slurp(dir / "tvtp" / "msm_coefficients.csv");
  CHECK(table.find("p[1->1].hml") != std::string::npos);
  CHECK(table.find("p[2->1].iv") != std::string::npos);

  const Result stuck = invoke({"fit-msm", "--data", data, "--starts", "1", "--max-iter", "1", "--out",
                            (dir / "stuck").string()});
  CHECK(stuck.code == 3);
  CHECK(fs::exists(dir / "stuck" / "msm_coefficients.csv"));
  CHECK(slurp(dir / "stuck" / "msm_summary.txt").find("NOT CONVERGED") != std::string::npos);

  CHECK(invoke({"fit-msm", "--data", data, "--regimes", "3", "--starts", "1", "--max-iter", "50", "--out",
             (dir / "three").string()})
            .code != 2);
}

TEST_CASE("train, evaluate and backtest bundle") {
  const Trained t = trained("bundle");
  for (const char* f : {"model.ckpt", "training_log.csv", "train_report.json", "config.json"}) {
    CHECK(fs::exists(t.run / f));
  }
  CHECK(lines(t.run / "training_log.csv") == 4);

  const fs::path ev = t.root / "eval";
  REQUIRE(invoke({"evaluate", "--checkpoint", (t.run / "model.ckpt").string(), "--out", ev.string()}).code == 0);
  const auto summary = nlohmann::json::parse(slurp(ev / "evaluation.json"));
  const std::size_t n = summary.at("samples").get<std::size_t>();
  CHECK(lines(ev / "predictions.csv") == n + 1);

  const fs::path bt = t.root / "bt";
  REQUIRE(invoke({"backtest", "--checkpoint", (t.run / "model.ckpt").string(), "--out", bt.string()}).code == 0);
  for (const char* f : {"metrics.json", "metrics.csv", "equity.csv", "confusion.csv", "classification.csv", "report.md"}) {
    CHECK(fs::exists(bt / f));
  }
  CHECK(lines(bt / "equity.csv") == n + 1);
  // confusion counts sum to the test size
  std::istringstream cm(slurp(bt / "confusion.csv"));
  std::string line;
  std::getline(cm, line);
  std::size_t total = 0;
  while (std::getline(cm, line)) {
    std::istringstream row(line);
    std::string cell;
    std::getline(row, cell, ',');
    while (std::getline(row, cell, ',')) total += std::stoul(cell);
  }
  CHECK(total == n);
  const auto m = nlohmann::json::parse(slurp(bt / "metrics.json")).at("metrics");
  if (!m.at("annual_turnover").is_null()) {
    CHECK(std::abs(m.at("annual_turnover").get<double>() - m.at("daily_turnover").get<double>() * 365.0) <= 2e-4);
  }
}

TEST_CASE("switching off trains the plain classifier") {
  const Trained t = trained("plain", {"--switching", "off"});
  const auto ckpt = ad::Checkpoint::load(t.run / "model.ckpt");
  bool has_output = false, has_transition = false;
  for (const auto& e : ckpt.tensors) {
    has_output |= e.name == "output.weight";
    has_transition |= e.name.rfind("transition.", 0) == 0;
  }
  CHECK(has_output);
  CHECK_FALSE(has_transition);
}

TEST_CASE("checkpoint and data mismatches exit with 5") {
  const Trained t = trained("mismatch");
  REQUIRE(invoke({"simulate", "--kind", "planted", "--steps", "400", "--seed", "99", "--out", (t.root / "other").string()})
              .code == 0);
  const Result r = invoke({"backtest", "--checkpoint", (t.run / "model.ckpt").string(), "--data",
                        (t.root / "other" / "ohlc.csv").string(), "--labels", (t.root / "other" / "labels.csv").string(),
                        "--out", (t.root / "x").string()});
  CHECK(r.code == 5);

  std::ofstream(t.root / "junk.ckpt") << "not a checkpoint";
  CHECK(invoke({"evaluate", "--checkpoint", (t.root / "junk.ckpt").string(), "--out", (t.root / "y").string()}).code == 5);

  // Parameters from a different architecture.
  auto ckpt = ad::Checkpoint::load(t.run / "model.ckpt");
  auto meta = nlohmann::json::parse(ckpt.metadata);
  meta["config"]["model"]["units"] = 5;
  ckpt.metadata = meta.dump();
  ckpt.save(t.root / "edited.ckpt");
  CHECK(invoke({"evaluate", "--checkpoint", (t.root / "edited.ckpt").string(), "--out", (t.root / "z").string()}).code ==
        5);
}

TEST_CASE("commands are byte deterministic") {
  const fs::path dir = scratch("determinism");
  for (const char* run : {"a", "b"}) {
    const fs::path d = dir / run;
    REQUIRE(invoke({"simulate", "--kind", "planted", "--steps", "300", "--seed", "8", "--out", (d / "sim").string()})
                .code == 0);
    REQUIRE(invoke({"simulate", "--steps", "400", "--seed", "8", "--out", (d / "msmsim").string()}).code == 0);
    const std::string data = (dir / "a" / "sim" / "ohlc.csv").string();
    const std::string labels = (dir / "a" / "sim" / "labels.csv").string();
    REQUIRE(invoke({"ingest", "--data", data, "--labels", labels, "--out", (d / "ingest").string()}).code == 0);
    REQUIRE(invoke({"fit-msm", "--data", (dir / "a" / "msmsim" / "ohlc.csv").string(), "--starts", "2", "--out",
                 (d / "msm").string()})
                .code != 2);
    REQUIRE(invoke({"train", "--data", data, "--labels", labels, "--units", "4", "--layers", "1", "--epochs", "2",
                 "--seed", "5", "--out", (d / "train").string()})
                .code == 0);
    const std::string ckpt = (d / "train" / "model.ckpt").string();
    REQUIRE(invoke({"evaluate", "--checkpoint", ckpt, "--out", (d / "eval").string()}).code == 0);
    REQUIRE(invoke({"backtest", "--checkpoint", ckpt, "--out", (d / "bt").string()}).code == 0);
  }
  for (const char* sub : {"sim", "msmsim", "ingest", "msm", "train", "eval", "bt"}) {
    INFO(sub);
    same_files(dir / "a" / sub, dir / "b" / sub);
  }
}

TEST_CASE("echoed config reproduces the run") {
  const Trained t = trained("echo");
  const fs::path again = t.root / "again";
  const Result r = invoke({"train", "--config", (t.run / "config.json").string(), "--out", again.string()});
  INFO(r.err);
  REQUIRE(r.code == 0);
  same_files(t.run, again);
}

TEST_CASE("labels file must cover every bar") {
  const fs::path dir = scratch("labels");
  REQUIRE(invoke({"simulate", "--kind", "planted", "--steps", "100", "--out", (dir / "sim").string()}).code == 0);
  std::ifstream in(dir / "sim" / "labels.csv");
  std::ofstream out(dir / "short.csv");
  std::string line;
  for (int i = 0; i < 50 && std::getline(in, line); ++i) out << line << '\n';
  out.close();
  const Result r = invoke({"train", "--data", (dir / "sim" / "ohlc.csv").string(), "--labels", (dir / "short.csv").string(),
                        "--out", (dir / "t").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("no regime for") != std::string::npos);
}
