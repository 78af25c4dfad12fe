#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "msrnn/autodiff/checkpoint.hpp"
#include "msrnn/data/dataset.hpp"
#include "msrnn/train/classifier.hpp"

namespace msrnn::train {

ad::Tensor one_hot(std::span<const int> labels, std::size_t classes);

constexpr double kProbFloor = 1e-12;

/// Mean over rows of −Σ_c y log max(p, 1e-12).
double categorical_cross_entropy(const ad::Tensor& probs, const ad::Tensor& targets);
ad::Var cross_entropy(ad::Tape& tape, ad::Var probs, const ad::Tensor& targets);

struct TrainConfig {
  std::size_t max_epochs = 200;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  std::size_t patience = 10;
  std::size_t lr_patience = 5;
  double lr_factor = 0.25;
  double min_delta = 1e-6;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double learning_rate = 0.0;
};

struct TrainReport {
  std::vector<EpochLog> epochs;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  double final_learning_rate = 0.0;
  std::size_t lr_reductions = 0;
  bool early_stopped = false;
  double wall_seconds = 0.0;
  std::string checkpoint_path;
};

/// Columns: epoch, train_loss, val_loss, lr.
std::string training_log_csv(const TrainReport& report);

class Adam {
 public:
  Adam(double beta1, double beta2, double epsilon) : beta1_(beta1), beta2_(beta2), eps_(epsilon) {}
  void step(std::span<ad::Parameter* const> params, double lr);

 private:
  double beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

/// Called after each epoch with its log row.
using EpochCallback = std::function<void(const EpochLog&)>;

/// Chronological mini-batch training with Adam, plateau LR reduction and
/// early stopping. On return the classifier holds the best-epoch parameters
/// and streaming state.
TrainReport fit(Classifier& model, const data::LabeledDataset& train, const data::LabeledDataset& val,
                const TrainConfig& config, const EpochCallback& on_epoch = {});

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
  std::vector<int> predicted;
  ad::Tensor probs;  // [samples, classes]
};

/// Chronological pass in batches. Parameters and streaming state are left
/// unchanged.
Evaluation evaluate(Classifier& model, const data::LabeledDataset& ds, std::size_t batch_size = 32);

/// Parameters plus streaming state ("stream.<i>") and a metadata string.
ad::Checkpoint capture_checkpoint(Classifier& model, const std::string& metadata);
void restore_checkpoint(Classifier& model, const ad::Checkpoint& ckpt);

}  // namespace msrnn::train
