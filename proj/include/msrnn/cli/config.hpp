#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "msrnn/data/dataset.hpp"
#include "msrnn/data/ohlc.hpp"
#include "msrnn/train/classifier.hpp"
#include "msrnn/train/train.hpp"

namespace msrnn::cli {

struct MsmSection {
  std::size_t regimes = 2;
  std::vector<std::string> covariates;  // subset of {"hml", "iv"}
  bool standardize = false;
  std::size_t starts = 5;
  std::size_t max_iter = 500;
};

/// Everything a command needs. JSON sections mirror the fields; unknown keys
/// are rejected at every level.
struct RunConfig {
  std::string data;    // OHLC CSV
  std::string labels;  // optional per-bar regime CSV replacing the horizon rule
  std::string output_dir;
  std::uint64_t seed = 0;
  data::ColumnMapping columns;
  data::PipelineParams pipeline;
  train::ModelConfig model;
  MsmSection msm;
  train::TrainConfig training;

  void validate() const;
};

/// Without `output_dir`, which names where the echo itself is written.
nlohmann::json to_json(const RunConfig& c);
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

/// Parses "none", "hml", "iv", "hml,iv".
std::vector<std::string> parse_covariate_list(const std::string& text);

nlohmann::json to_json(const data::PipelineParams& p);
data::PipelineParams pipeline_from_json(const nlohmann::json& j);
nlohmann::json to_json(const data::ColumnMapping& c);
data::ColumnMapping columns_from_json(const nlohmann::json& j);

}  // namespace msrnn::cli
