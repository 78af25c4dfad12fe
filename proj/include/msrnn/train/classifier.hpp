#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "msrnn/autodiff/tape.hpp"
#include "msrnn/nn/cells.hpp"
#include "msrnn/switching/model.hpp"

namespace msrnn::train {

/// Window classifier producing class probabilities [batch, classes].
class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual ad::Var forward(ad::Tape& tape, const ad::Tensor& windows) = 0;
  virtual std::vector<ad::Parameter*> parameters() = 0;
  virtual std::size_t classes() const = 0;

  /// Streaming state carried across batches of one chronological pass.
  virtual void begin_pass() {}
  virtual void end_batch() {}
  virtual std::vector<ad::Tensor> stream_state() const { return {}; }
  virtual void set_stream_state(const std::vector<ad::Tensor>&) {}
};

/// Which architecture to build. Plain recurrent classifiers use the
/// kind/layers/units/features of `net` and `net.regimes` as class count.
struct ModelConfig {
  bool switching = true;
  sw::SwitchingConfig net;
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Stacked cells, affine map of the final hidden state, softmax.
class BaselineClassifier : public Classifier {
 public:
  BaselineClassifier(const sw::SwitchingConfig& shape, std::uint64_t seed);
  ad::Var forward(ad::Tape& tape, const ad::Tensor& windows) override;
  std::vector<ad::Parameter*> parameters() override;
  std::size_t classes() const override { return classes_; }

 private:
  std::size_t classes_;
  std::size_t features_;
  std::unique_ptr<nn::Stack> stack_;
  std::unique_ptr<ad::Parameter> weight_, bias_;
};

class SwitchingClassifier : public Classifier {
 public:
  SwitchingClassifier(const sw::SwitchingConfig& config, std::uint64_t seed) : model_(config, seed) {}
  ad::Var forward(ad::Tape& tape, const ad::Tensor& windows) override { return model_.forward(tape, windows); }
  std::vector<ad::Parameter*> parameters() override { return model_.parameters(); }
  std::size_t classes() const override { return model_.config().regimes; }

  void begin_pass() override { model_.reset_stats(); }
  void end_batch() override { model_.commit(); }
  /// One [regimes, 3] tensor of (count, mean, m2).
  std::vector<ad::Tensor> stream_state() const override;
  void set_stream_state(const std::vector<ad::Tensor>& s) override;

  sw::SwitchingModel& model() { return model_; }

 private:
  sw::SwitchingModel model_;
};

/// Softmax regression on the last window row.
class LinearClassifier : public Classifier {
 public:
  LinearClassifier(std::size_t features, std::size_t classes, std::uint64_t seed);
  ad::Var forward(ad::Tape& tape, const ad::Tensor& windows) override;
  std::vector<ad::Parameter*> parameters() override { return {&weight_, &bias_}; }
  std::size_t classes() const override { return classes_; }

  ad::Parameter& weight() { return weight_; }
  ad::Parameter& bias() { return bias_; }

 private:
  std::size_t features_, classes_;
  ad::Parameter weight_, bias_;
};

std::unique_ptr<Classifier> make_classifier(const ModelConfig& config, std::uint64_t seed);

}  // namespace msrnn::train
