#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "msrnn/cli/config.hpp"

namespace msrnn::cli {

/// Process exit codes. Stable contract.
enum ExitCode : int {
  kOk = 0,
  kInternal = 1,
  kInputError = 2,
  kNotConverged = 3,
  kNumericalFailure = 4,
  kArtifactMismatch = 5,
};

int exit_code_for(const std::exception& e);

/// Default output directory: $MSRNN_OUTPUT_DIR, else "msrnn_out".
std::filesystem::path default_output_dir();

/// Reads "date,regime" rows and returns one label per bar, matched by date.
std::vector<int> load_bar_labels(const std::filesystem::path& path, std::span<const data::OhlcBar> bars);

int cmd_ingest(const RunConfig& cfg, const std::filesystem::path& out, std::ostream& log);
int cmd_fit_msm(const RunConfig& cfg, const std::filesystem::path& out, std::ostream& log);
int cmd_train(const RunConfig& cfg, const std::filesystem::path& out, std::ostream& log);

struct EvalOptions {
  std::string checkpoint;
  std::string split = "test";
  std::string data;    // overrides the path stored in the checkpoint
  std::string labels;  // likewise
};

int cmd_evaluate(const EvalOptions& opts, const std::filesystem::path& out, std::ostream& log);
int cmd_backtest(const EvalOptions& opts, const std::filesystem::path& out, std::ostream& log);

struct SimulateOptions {
  std::string kind = "msm";  // msm | planted
  std::size_t steps = 5000;
  std::uint64_t seed = 0;
  std::vector<double> alpha{0.001, 0.002};
  std::vector<double> sigma2{0.0002, 0.0024};
  std::vector<double> stay{0.86, 0.85};
  /// Number of N(0, 1) covariates driving the transition logits; needs `beta`.
  std::size_t covariates = 0;
  /// Logit coefficients, one block of (1 + covariates) per origin → destination
  /// pair in origin-major order over the m − 1 non-reference destinations.
  std::vector<double> beta;
  double range_excess = 0.01;
};

int cmd_simulate(const SimulateOptions& opts, const std::filesystem::path& out, std::ostream& log);

/// Parses arguments and runs one subcommand. Returns the exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace msrnn::cli
