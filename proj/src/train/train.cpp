#include "msrnn/train/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "msrnn/error.hpp"

namespace msrnn::train {

using ad::Parameter;
using ad::Shape;
using ad::Tape;
using ad::Tensor;
using ad::Var;

Tensor one_hot(std::span<const int> labels, std::size_t classes) {
  Tensor out(Shape{labels.size(), classes});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
      throw ValidationError("label " + std::to_string(labels[i]) + " outside 0.." + std::to_string(classes - 1));
    }
    out.at(i, static_cast<std::size_t>(labels[i])) = 1.0;
  }
  return out;
}

double categorical_cross_entropy(const Tensor& probs, const Tensor& targets) {
  if (!(probs.shape() == targets.shape()) || probs.shape().rank() != 2) {
    throw ShapeError("cross entropy needs matching [n, classes] tensors, got " + probs.shape().str() + " and " +
                     targets.shape().str());
  }
  const std::size_t n = probs.shape()[0];
  if (n == 0) throw ValidationError("cross entropy of an empty batch");
  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (targets[i] != 0.0) total -= targets[i] * std::log(std::max(probs[i], kProbFloor));
  }
  return total / static_cast<double>(n);
}

Var cross_entropy(Tape& tape, Var probs, const Tensor& targets) {
  if (!(probs.shape() == targets.shape()) || probs.shape().rank() != 2) {
    throw ShapeError("cross entropy needs matching [n, classes] tensors, got " + probs.shape().str() + " and " +
                     targets.shape().str());
  }
  const double n = static_cast<double>(probs.shape()[0]);
  return ad::scale(ad::sum(tape.constant(targets) * ad::log(probs, kProbFloor)), -1.0 / n);
}

void TrainConfig::validate() const {
  if (max_epochs == 0 || batch_size == 0) throw ValidationError("max_epochs and batch_size must be positive");
  if (patience == 0 || lr_patience == 0) throw ValidationError("patience values must be positive");
  if (!(lr_factor > 0.0 && lr_factor < 1.0)) throw ValidationError("lr_factor must lie in (0, 1)");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ValidationError("learning_rate must be >= 0");
  if (!(min_delta >= 0.0)) throw ValidationError("min_delta must be >= 0");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"max_epochs", c.max_epochs}, {"batch_size", c.batch_size}, {"learning_rate", c.learning_rate},
          {"patience", c.patience},     {"lr_patience", c.lr_patience}, {"lr_factor", c.lr_factor},
          {"min_delta", c.min_delta},   {"beta1", c.beta1},             {"beta2", c.beta2},
          {"epsilon", c.epsilon},       {"seed", c.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "max_epochs") c.max_epochs = v.get<std::size_t>();
    else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
    else if (key == "learning_rate") c.learning_rate = v.get<double>();
    else if (key == "patience") c.patience = v.get<std::size_t>();
    else if (key == "lr_patience") c.lr_patience = v.get<std::size_t>();
    else if (key == "lr_factor") c.lr_factor = v.get<double>();
    else if (key == "min_delta") c.min_delta = v.get<double>();
    else if (key == "beta1") c.beta1 = v.get<double>();
    else if (key == "beta2") c.beta2 = v.get<double>();
    else if (key == "epsilon") c.epsilon = v.get<double>();
    else if (key == "seed") c.seed = v.get<std::uint64_t>();
    else throw ValidationError("unknown training config key '" + key + "'");
  }
  c.validate();
  return c;
}

std::string training_log_csv(const TrainReport& report) {
  std::ostringstream os;
  os << "epoch,train_loss,val_loss,lr\n";
  char buf[128];
  for (const auto& e : report.epochs) {
    std::snprintf(buf, sizeof buf, "%zu,%.10g,%.10g,%.10g\n", e.epoch, e.train_loss, e.val_loss, e.learning_rate);
    os << buf;
  }
  return os.str();
}

void Adam::step(std::span<Parameter* const> params, double lr) {
  if (m_.empty()) {
    for (const Parameter* p : params) {
      m_.emplace_back(p->value.size(), 0.0);
      v_.emplace_back(p->value.size(), 0.0);
    }
  }
  if (m_.size() != params.size()) throw UsageError("Adam: parameter list changed between steps");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    std::vector<double>& m = m_[k];
    std::vector<double>& v = v_[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
      p.value[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

namespace {

struct Snapshot {
  std::vector<Tensor> values;
  std::vector<Tensor> stream;
};

Snapshot take(Classifier& model) {
  Snapshot s;
  for (const Parameter* p : model.parameters()) s.values.push_back(p->value);
  s.stream = model.stream_state();
  return s;
}

void put_back(Classifier& model, const Snapshot& s) {
  auto ps = model.parameters();
  for (std::size_t i = 0; i < ps.size(); ++i) ps[i]->value = s.values[i];
  model.set_stream_state(s.stream);
}

}  // namespace

TrainReport fit(Classifier& model, const data::LabeledDataset& train, const data::LabeledDataset& val,
                const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (train.size() == 0) throw ValidationError("training split is empty");
  if (val.size() == 0) throw ValidationError("validation split is empty");
  const auto start = std::chrono::steady_clock::now();
  std::vector<Parameter*> params = model.parameters();
  Adam adam(config.beta1, config.beta2, config.epsilon);

  TrainReport report;
  double lr = config.learning_rate;
  double best = std::numeric_limits<double>::infinity();
  std::size_t wait = 0;
  std::size_t wait_lr = 0;
  Snapshot best_state = take(model);

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    model.begin_pass();
    double total = 0.0;
    for (std::size_t b = 0; b < train.size(); b += config.batch_size) {
      const std::size_t e = std::min(train.size(), b + config.batch_size);
      const data::LabeledDataset batch = train.slice(b, e);
      for (Parameter* p : params) p->zero_grad();
      Tape tape;
      const Var probs = model.forward(tape, batch.windows);
      const Var loss = cross_entropy(tape, probs, one_hot(batch.labels, model.classes()));
      if (!std::isfinite(loss.item())) {
        throw NumericalError("non-finite training loss at epoch " + std::to_string(epoch) + ", samples " +
                             std::to_string(b) + ".." + std::to_string(e - 1));
      }
      tape.backward(loss);
      adam.step(params, lr);
      model.end_batch();
      total += loss.item() * static_cast<double>(e - b);
    }
    EpochLog log;
    log.epoch = epoch;
    log.train_loss = total / static_cast<double>(train.size());
    log.val_loss = evaluate(model, val, config.batch_size).loss;
    log.learning_rate = lr;
    if (!std::isfinite(log.val_loss)) {
      throw NumericalError("non-finite validation loss at epoch " + std::to_string(epoch));
    }
    report.epochs.push_back(log);
    if (on_epoch) on_epoch(log);

    if (log.val_loss < best - config.min_delta) {
      best = log.val_loss;
      report.best_epoch = epoch;
      best_state = take(model);
      wait = 0;
      wait_lr = 0;
      continue;
    }
    ++wait;
    ++wait_lr;
    if (wait >= config.patience) {
      report.early_stopped = true;
      break;
    }
    if (wait_lr >= config.lr_patience) {
      lr *= config.lr_factor;
      ++report.lr_reductions;
      wait_lr = 0;
    }
  }
  put_back(model, best_state);
  report.best_val_loss = best;
  report.final_learning_rate = lr;
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

Evaluation evaluate(Classifier& model, const data::LabeledDataset& ds, std::size_t batch_size) {
  if (ds.size() == 0) throw ValidationError("cannot evaluate an empty dataset");
  if (batch_size == 0) throw ValidationError("batch_size must be positive");
  const std::vector<Tensor> saved = model.stream_state();
  const std::size_t m = model.classes();
  Evaluation out;
  out.probs = Tensor(Shape{ds.size(), m});
  for (std::size_t b = 0; b < ds.size(); b += batch_size) {
    const std::size_t e = std::min(ds.size(), b + batch_size);
    const data::LabeledDataset batch = ds.slice(b, e);
    Tape tape;
    const Var probs = model.forward(tape, batch.windows);
    if (!(probs.shape() == Shape{e - b, m})) throw ShapeError("classifier output has shape " + probs.shape().str());
    std::copy(probs.value().data().begin(), probs.value().data().end(),
              out.probs.data().begin() + static_cast<std::ptrdiff_t>(b * m));
    model.end_batch();
  }
  model.set_stream_state(saved);
  out.loss = categorical_cross_entropy(out.probs, one_hot(ds.labels, m));
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < m; ++k) {
      if (out.probs.at(i, k) > out.probs.at(i, best)) best = k;
    }
    out.predicted.push_back(static_cast<int>(best));
    hits += static_cast<int>(best) == ds.labels[i];
  }
  out.accuracy = static_cast<double>(hits) / static_cast<double>(ds.size());
  return out;
}

namespace {

std::vector<std::unique_ptr<Parameter>> stream_params(const std::vector<Tensor>& stream) {
  std::vector<std::unique_ptr<Parameter>> out;
  for (std::size_t i = 0; i < stream.size(); ++i) {
    out.push_back(std::make_unique<Parameter>("stream." + std::to_string(i), stream[i]));
  }
  return out;
}

}  // namespace

ad::Checkpoint capture_checkpoint(Classifier& model, const std::string& metadata) {
  std::vector<Parameter*> ps = model.parameters();
  auto extra = stream_params(model.stream_state());
  for (auto& p : extra) ps.push_back(p.get());
  return ad::Checkpoint::capture(ps, metadata);
}

void restore_checkpoint(Classifier& model, const ad::Checkpoint& ckpt) {
  std::vector<Parameter*> ps = model.parameters();
  auto extra = stream_params(model.stream_state());
  for (auto& p : extra) ps.push_back(p.get());
  ckpt.restore(ps);
  std::vector<Tensor> stream;
  for (auto& p : extra) stream.push_back(p->value);
  model.set_stream_state(stream);
}

}  // namespace msrnn::train
