#include "msrnn/cli/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "msrnn/error.hpp"

namespace msrnn::cli {

using nlohmann::json;

namespace {

[[noreturn]] void unknown(const std::string& section, const std::string& key) {
  throw ValidationError("unknown key '" + key + "' in " + section);
}

}  // namespace

json to_json(const data::PipelineParams& p) {
  return {{"horizon", p.horizon}, {"seq_len", p.seq_len}, {"train_frac", p.train_frac}, {"val_frac", p.val_frac}};
}

data::PipelineParams pipeline_from_json(const json& j) {
  data::PipelineParams p;
  for (const auto& [key, v] : j.items()) {
    if (key == "horizon") p.horizon = v.get<std::size_t>();
    else if (key == "seq_len") p.seq_len = v.get<std::size_t>();
    else if (key == "train_frac") p.train_frac = v.get<double>();
    else if (key == "val_frac") p.val_frac = v.get<double>();
    else unknown("pipeline", key);
  }
  return p;
}

json to_json(const data::ColumnMapping& c) {
  return {{"timestamp", c.timestamp}, {"open", c.open}, {"high", c.high}, {"low", c.low}, {"close", c.close}};
}

data::ColumnMapping columns_from_json(const json& j) {
  data::ColumnMapping c;
  for (const auto& [key, v] : j.items()) {
    if (key == "timestamp") c.timestamp = v.get<std::string>();
    else if (key == "open") c.open = v.get<std::string>();
    else if (key == "high") c.high = v.get<std::string>();
    else if (key == "low") c.low = v.get<std::string>();
    else if (key == "close") c.close = v.get<std::string>();
    else unknown("columns", key);
  }
  return c;
}

std::vector<std::string> parse_covariate_list(const std::string& text) {
  if (text.empty() || text == "none") return {};
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item != "hml" && item != "iv") throw ValidationError("unknown covariate '" + item + "' (use hml, iv)");
    if (std::find(out.begin(), out.end(), item) != out.end()) throw ValidationError("covariate '" + item + "' repeated");
    out.push_back(item);
  }
  return out;
}

void RunConfig::validate() const {
  if (pipeline.horizon == 0 || pipeline.seq_len == 0) throw ValidationError("horizon and seq_len must be positive");
  if (!(pipeline.train_frac > 0.0 && pipeline.train_frac <= 1.0)) throw ValidationError("train_frac must lie in (0, 1]");
  if (!(pipeline.val_frac > 0.0 && pipeline.val_frac < 1.0)) throw ValidationError("val_frac must lie in (0, 1)");
  if (msm.regimes < 2) throw ValidationError("msm.regimes must be at least 2");
  if (msm.starts == 0 || msm.max_iter == 0) throw ValidationError("msm.starts and msm.max_iter must be positive");
  for (const auto& c : msm.covariates) {
    if (c != "hml" && c != "iv") throw ValidationError("unknown msm covariate '" + c + "'");
  }
  if (model.net.features != 3) throw ValidationError("model.features must be 3 (return, hml, iv)");
  model.net.validate();
  training.validate();
}

json to_json(const RunConfig& c) {
  json msm = {{"regimes", c.msm.regimes},
              {"covariates", c.msm.covariates},
              {"standardize", c.msm.standardize},
              {"starts", c.msm.starts},
              {"max_iter", c.msm.max_iter}};
  return {{"data", c.data},
          {"labels", c.labels},
          {"seed", c.seed},
          {"columns", to_json(c.columns)},
          {"pipeline", to_json(c.pipeline)},
          {"model", train::to_json(c.model)},
          {"msm", msm},
          {"training", train::to_json(c.training)}};
}

RunConfig run_config_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  RunConfig c;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "data") c.data = v.get<std::string>();
      else if (key == "labels") c.labels = v.get<std::string>();
      else if (key == "output_dir") c.output_dir = v.get<std::string>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "columns") c.columns = columns_from_json(v);
      else if (key == "pipeline") c.pipeline = pipeline_from_json(v);
      else if (key == "model") c.model = train::model_config_from_json(v);
      else if (key == "training") c.training = train::train_config_from_json(v);
      else if (key == "msm") {
        for (const auto& [mk, mv] : v.items()) {
          if (mk == "regimes") c.msm.regimes = mv.get<std::size_t>();
          else if (mk == "covariates") c.msm.covariates = mv.get<std::vector<std::string>>();
          else if (mk == "standardize") c.msm.standardize = mv.get<bool>();
          else if (mk == "starts") c.msm.starts = mv.get<std::size_t>();
          else if (mk == "max_iter") c.msm.max_iter = mv.get<std::size_t>();
          else unknown("msm", mk);
        }
      } else {
        unknown("config", key);
      }
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace msrnn::cli
