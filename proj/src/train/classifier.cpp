#include "msrnn/train/classifier.hpp"

#include "msrnn/error.hpp"

namespace msrnn::train {

using ad::Parameter;
using ad::Shape;
using ad::Tape;
using ad::Tensor;
using ad::Var;

nlohmann::json to_json(const ModelConfig& c) {
  nlohmann::json j = sw::to_json(c.net);
  j["switching"] = c.switching;
  return j;
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  nlohmann::json rest = j;
  if (rest.contains("switching")) {
    c.switching = rest.at("switching").get<bool>();
    rest.erase("switching");
  }
  c.net = sw::switching_config_from_json(rest);
  return c;
}

namespace {

// Copies time step t of every window: [batch, features].
Tensor step_rows(const Tensor& windows, std::size_t t) {
  const std::size_t batch = windows.shape()[0], len = windows.shape()[1], f = windows.shape()[2];
  Tensor x(Shape{batch, f});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t j = 0; j < f; ++j) x.at(b, j) = windows[(b * len + t) * f + j];
  }
  return x;
}

void check_windows(const Tensor& windows, std::size_t features) {
  const Shape& s = windows.shape();
  if (s.rank() != 3 || s[2] != features || s[1] == 0) {
    throw ShapeError("windows must be [batch, seq_len, " + std::to_string(features) + "], got " + s.str());
  }
}

}  // namespace

BaselineClassifier::BaselineClassifier(const sw::SwitchingConfig& shape, std::uint64_t seed)
    : classes_(shape.regimes), features_(shape.features) {
  if (classes_ < 2) throw ValidationError("a classifier needs at least 2 classes");
  nn::Rng rng(seed);
  stack_ = std::make_unique<nn::Stack>(shape.kind, shape.features, shape.units, shape.layers, shape.cell_shape(),
                                       "rnn", rng);
  weight_ = std::make_unique<Parameter>("output.weight", nn::glorot_uniform(shape.units, classes_, rng));
  bias_ = std::make_unique<Parameter>("output.bias", Tensor(Shape{classes_}));
}

Var BaselineClassifier::forward(Tape& tape, const Tensor& windows) {
  check_windows(windows, features_);
  std::vector<nn::CellState> state = stack_->zero_state(tape, windows.shape()[0]);
  Var h;
  for (std::size_t t = 0; t < windows.shape()[1]; ++t) h = stack_->step(tape, state, tape.constant(step_rows(windows, t)));
  return ad::softmax(ad::matmul(h, tape.param(*weight_)) + tape.param(*bias_));
}

std::vector<Parameter*> BaselineClassifier::parameters() {
  std::vector<Parameter*> out = stack_->parameters();
  out.push_back(weight_.get());
  out.push_back(bias_.get());
  return out;
}

std::vector<Tensor> SwitchingClassifier::stream_state() const {
  const auto& st = model_.stats();
  Tensor t(Shape{st.size(), 3});
  for (std::size_t k = 0; k < st.size(); ++k) {
    t.at(k, 0) = st[k].count;
    t.at(k, 1) = st[k].mean;
    t.at(k, 2) = st[k].m2;
  }
  return {t};
}

void SwitchingClassifier::set_stream_state(const std::vector<Tensor>& s) {
  const std::size_t m = model_.config().regimes;
  if (s.size() != 1 || !(s[0].shape() == Shape{m, 3})) throw ArtifactError("running statistics have the wrong shape");
  std::vector<sw::RunningStats> st(m);
  for (std::size_t k = 0; k < m; ++k) {
    st[k].count = s[0].at(k, 0);
    st[k].mean = s[0].at(k, 1);
    st[k].m2 = s[0].at(k, 2);
  }
  model_.set_stats(std::move(st));
}

LinearClassifier::LinearClassifier(std::size_t features, std::size_t classes, std::uint64_t seed)
    : features_(features), classes_(classes) {
  nn::Rng rng(seed);
  weight_ = Parameter("linear.weight", nn::glorot_uniform(features, classes, rng));
  bias_ = Parameter("linear.bias", Tensor(Shape{classes}));
}

Var LinearClassifier::forward(Tape& tape, const Tensor& windows) {
  check_windows(windows, features_);
  const Tensor x = step_rows(windows, windows.shape()[1] - 1);
  return ad::softmax(ad::matmul(tape.constant(x), tape.param(weight_)) + tape.param(bias_));
}

std::unique_ptr<Classifier> make_classifier(const ModelConfig& config, std::uint64_t seed) {
  if (config.switching) return std::make_unique<SwitchingClassifier>(config.net, seed);
  return std::make_unique<BaselineClassifier>(config.net, seed);
}

}  // namespace msrnn::train
