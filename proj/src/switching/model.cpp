#include "msrnn/switching/model.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "msrnn/error.hpp"

namespace msrnn::sw {

using ad::Parameter;
using ad::Shape;
using ad::Tape;
using ad::Tensor;
using ad::Var;

constexpr double kLogitClamp = 30.0;

nn::CellConfig SwitchingConfig::cell_shape() const {
  nn::CellConfig c;
  c.kind = kind;
  c.hidden = units;
  c.sublayers = sublayers;
  c.sub_dim = sub_dim;
  c.grid = grid;
  c.degree = degree;
  return c;
}

void SwitchingConfig::validate() const {
  if (regimes < 2) throw ValidationError("switching models need at least 2 regimes");
  if (layers == 0 || units == 0) throw ValidationError("layers and units must be positive");
  if (features < 2) throw ValidationError("switching models need a return column and at least one covariate");
  if (kind == nn::CellKind::tkan && (sublayers == 0 || sub_dim == 0 || grid == 0)) {
    throw ValidationError("tkan sublayers, sub_dim and grid must be positive");
  }
}

nlohmann::json to_json(const SwitchingConfig& c) {
  return {{"regimes", c.regimes},     {"cell", nn::to_string(c.kind)}, {"layers", c.layers},
          {"units", c.units},         {"features", c.features},        {"sublayers", c.sublayers},
          {"sub_dim", c.sub_dim},     {"grid", c.grid},                {"degree", c.degree},
          {"full_rho", c.full_rho},   {"returns_only", c.returns_only},
          {"disable_switching", c.disable_switching}};
}

SwitchingConfig switching_config_from_json(const nlohmann::json& j) {
  SwitchingConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "regimes") c.regimes = v.get<std::size_t>();
    else if (key == "cell") c.kind = nn::parse_cell_kind(v.get<std::string>());
    else if (key == "layers") c.layers = v.get<std::size_t>();
    else if (key == "units") c.units = v.get<std::size_t>();
    else if (key == "features") c.features = v.get<std::size_t>();
    else if (key == "sublayers") c.sublayers = v.get<std::size_t>();
    else if (key == "sub_dim") c.sub_dim = v.get<std::size_t>();
    else if (key == "grid") c.grid = v.get<std::size_t>();
    else if (key == "degree") c.degree = v.get<std::size_t>();
    else if (key == "full_rho") c.full_rho = v.get<bool>();
    else if (key == "returns_only") c.returns_only = v.get<bool>();
    else if (key == "disable_switching") c.disable_switching = v.get<bool>();
    else throw ValidationError("unknown switching config key '" + key + "'");
  }
  c.validate();
  return c;
}

void RunningStats::push(double x) {
  count += 1.0;
  const double d = x - mean;
  mean += d / count;
  m2 += d * (x - mean);
}

double RunningStats::sigma() const {
  if (count < 2.0) return 1.0;
  return std::max(std::sqrt(m2 / count), kFloor);
}

Var update_transition(Tape& tape, Var p_prev, Var z, std::size_t m, bool full_rho) {
  const Shape& ps = p_prev.shape();
  if (ps.rank() != 3 || ps[1] != m || ps[2] != m) throw ShapeError("transition must be [batch, m, m], got " + ps.str());
  const std::size_t batch = ps[0];
  const std::size_t width = full_rho ? m * m : m * (m - 1);
  if (!(z.shape() == Shape{batch, width})) {
    throw ShapeError("Z must be [" + std::to_string(batch) + "," + std::to_string(width) + "], got " + z.shape().str());
  }
  const Var e = ad::exp(ad::clamp(z, -kLogitClamp, kLogitClamp));
  Var rho;
  if (full_rho) {
    rho = ad::reshape(e, Shape{batch, m, m});
  } else {
    const Var one = tape.constant(Tensor(Shape{batch, 1}, 1.0));
    std::vector<Var> parts;
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t base = i * (m - 1);
      if (i > 0) parts.push_back(ad::slice(e, 1, base, base + i));
      parts.push_back(one);
      if (i + 1 < m) parts.push_back(ad::slice(e, 1, base + i, base + m - 1));
    }
    rho = ad::reshape(ad::concat(parts), Shape{batch, m, m});
  }
  return ad::softmax(p_prev * rho);
}

Var predict_pi(Var p, Var pi_filtered) { return ad::vecmat(pi_filtered, p); }

Var filter_update(Tape& tape, Var pi_pred, Var yhat, std::span<const double> observed, std::span<const double> sigma) {
  const Shape& s = pi_pred.shape();
  if (s.rank() != 2 || !(yhat.shape() == s) || observed.size() != s[0] || sigma.size() != s[1]) {
    throw ShapeError("filter_update: pi " + s.str() + ", yhat " + yhat.shape().str());
  }
  const std::size_t batch = s[0], m = s[1];
  Tensor y(s);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t k = 0; k < m; ++k) y.at(b, k) = observed[b];
  }
  Tensor inv(Shape{m});
  for (std::size_t k = 0; k < m; ++k) {
    if (!(sigma[k] >= RunningStats::kFloor)) throw DomainError("filter_update: sigma below floor");
    inv[k] = 1.0 / sigma[k];
  }
  const Var dev = (tape.constant(std::move(y)) - yhat) * tape.constant(std::move(inv));
  const Var post = ad::softmax(ad::scale(dev * dev, -0.5) + ad::log(pi_pred, 1e-300));
  if (!post.value().all_finite()) return pi_pred;
  return post;
}

std::size_t predict_regime(std::span<const double> pi) {
  if (pi.empty()) throw ValidationError("predict_regime on an empty distribution");
  std::size_t best = 0;
  for (std::size_t k = 1; k < pi.size(); ++k) {
    if (pi[k] > pi[best]) best = k;
  }
  return best;
}

SwitchingModel::SwitchingModel(const SwitchingConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  nn::Rng rng(seed);
  const std::size_t m = config_.regimes;
  const std::size_t regime_input = config_.returns_only ? 1 : config_.features;
  for (std::size_t k = 0; k < m; ++k) {
    regimes_.push_back(std::make_unique<nn::Stack>(config_.kind, regime_input, config_.units, config_.layers,
                                                   config_.cell_shape(), "regime" + std::to_string(k + 1), rng));
  }
  encoder_ = std::make_unique<nn::Stack>(config_.kind, config_.covariates(), config_.units, config_.layers,
                                         config_.cell_shape(), "encoder", rng);
  auto own = [&](const std::string& name, Tensor value) {
    owned_.push_back(std::make_unique<Parameter>(name, std::move(value)));
    return owned_.back().get();
  };
  for (std::size_t k = 0; k < m; ++k) {
    nn::Affine h;
    h.weight = own("head" + std::to_string(k + 1) + ".weight", nn::glorot_uniform(config_.units, 1, rng));
    h.bias = own("head" + std::to_string(k + 1) + ".bias", Tensor(Shape{1}));
    heads_.push_back(h);
  }
  transition_.weight = own("transition.weight", nn::glorot_uniform(config_.units, config_.z_dim(), rng));
  transition_.bias = own("transition.bias", Tensor(Shape{config_.z_dim()}));
  stats_.assign(m, RunningStats{});
}

std::vector<Parameter*> SwitchingModel::parameters() {
  std::vector<Parameter*> out;
  for (auto& s : regimes_) {
    for (Parameter* p : s->parameters()) out.push_back(p);
  }
  for (Parameter* p : encoder_->parameters()) out.push_back(p);
  for (auto& p : owned_) out.push_back(p.get());
  return out;
}

void SwitchingModel::reset_stats() {
  stats_.assign(config_.regimes, RunningStats{});
  pending_.clear();
}

void SwitchingModel::set_stats(std::vector<RunningStats> stats) {
  if (stats.size() != config_.regimes) throw ShapeError("running stats count differs from the regime count");
  stats_ = std::move(stats);
}

std::vector<double> SwitchingModel::sigma() const {
  std::vector<double> s;
  for (const auto& st : stats_) s.push_back(st.sigma());
  return s;
}

void SwitchingModel::commit() {
  const std::size_t m = config_.regimes;
  for (std::size_t i = 0; i + m <= pending_.size(); i += m) {
    for (std::size_t k = 0; k < m; ++k) stats_[k].push(pending_[i + k]);
  }
  pending_.clear();
}

Var SwitchingModel::step_input(Tape& tape, const Tensor& windows, std::size_t t, bool covariates_only) const {
  const std::size_t batch = windows.shape()[0], len = windows.shape()[1], f = windows.shape()[2];
  const std::size_t first = covariates_only ? 1 : 0;
  const std::size_t last = (!covariates_only && config_.returns_only) ? 1 : f;
  Tensor x(Shape{batch, last - first});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t j = first; j < last; ++j) x.at(b, j - first) = windows[(b * len + t) * f + j];
  }
  return tape.constant(std::move(x));
}

Var SwitchingModel::regime_heads(Tape& tape, const std::vector<Var>& hidden) {
  if (hidden.size() != config_.regimes) throw ShapeError("one hidden state per regime is required");
  std::vector<Var> cols;
  for (std::size_t k = 0; k < hidden.size(); ++k) cols.push_back(heads_[k].apply(tape, hidden[k]));
  return ad::concat(cols);
}

Var SwitchingModel::encode_covariates(Tape& tape, const std::vector<Var>& covariate_steps) {
  const std::vector<Var> hs = encoder_->run(tape, covariate_steps);
  return transition_.apply(tape, ad::relu(hs.back()));
}

Var SwitchingModel::forward(Tape& tape, const Tensor& windows, std::vector<StepTrace>* trace) {
  const Shape& ws = windows.shape();
  if (ws.rank() != 3 || ws[2] != config_.features || ws[1] == 0) {
    throw ShapeError("windows must be [batch, seq_len, " + std::to_string(config_.features) + "], got " + ws.str());
  }
  const std::size_t batch = ws[0], len = ws[1], m = config_.regimes;
  const std::vector<double> sig = sigma();

  std::vector<std::vector<nn::CellState>> states;
  for (auto& s : regimes_) states.push_back(s->zero_state(tape, batch));
  std::vector<nn::CellState> enc_state = encoder_->zero_state(tape, batch);

  const double u = 1.0 / static_cast<double>(m);
  Var p = tape.constant(Tensor(Shape{batch, m, m}, u));
  Var pi = tape.constant(Tensor(Shape{batch, m}, u));
  std::vector<double> observed(batch);
  Var yhat;

  auto transition_logits = [&] { return transition_.apply(tape, ad::relu(enc_state.back().h)); };

  for (std::size_t t = 0; t < len; ++t) {
    std::vector<Var> hidden;
    for (auto& s : states) hidden.push_back(s.back().h);
    yhat = regime_heads(tape, hidden);
    Var pi_pred = pi;
    if (!config_.disable_switching) {
      p = update_transition(tape, p, transition_logits(), m, config_.full_rho);
      pi_pred = predict_pi(p, pi);
      for (std::size_t b = 0; b < batch; ++b) observed[b] = windows[(b * len + t) * config_.features];
      pi = filter_update(tape, pi_pred, yhat, observed, sig);
    }
    if (trace) {
      StepTrace st;
      st.transition.assign(p.value().data().begin(), p.value().data().begin() + static_cast<std::ptrdiff_t>(m * m));
      st.pi_pred.assign(pi_pred.value().data().begin(), pi_pred.value().data().begin() + static_cast<std::ptrdiff_t>(m));
      st.pi_filtered.assign(pi.value().data().begin(), pi.value().data().begin() + static_cast<std::ptrdiff_t>(m));
      st.yhat.assign(yhat.value().data().begin(), yhat.value().data().begin() + static_cast<std::ptrdiff_t>(m));
      st.sigma = sig;
      trace->push_back(std::move(st));
    }
    const Var x = step_input(tape, windows, t, false);
    for (std::size_t k = 0; k < m; ++k) regimes_[k]->step(tape, states[k], x);
    encoder_->step(tape, enc_state, step_input(tape, windows, t, true));
  }

  pending_.assign(yhat.value().data().begin(), yhat.value().data().end());
  if (config_.disable_switching) return pi;
  p = update_transition(tape, p, transition_logits(), m, config_.full_rho);
  return predict_pi(p, pi);
}

std::string trace_csv(const std::vector<StepTrace>& trace, std::size_t m) {
  std::ostringstream os;
  os << "step";
  for (std::size_t i = 1; i <= m; ++i) {
    for (std::size_t j = 1; j <= m; ++j) os << ",p_" << i << "_" << j;
  }
  for (const char* g : {"pi_pred", "pi_filtered", "yhat", "sigma"}) {
    for (std::size_t k = 1; k <= m; ++k) os << "," << g << "_" << k;
  }
  os << "\n";
  char buf[64];
  for (std::size_t t = 0; t < trace.size(); ++t) {
    os << t;
    const StepTrace& s = trace[t];
    for (const auto* v : {&s.transition, &s.pi_pred, &s.pi_filtered, &s.yhat, &s.sigma}) {
      for (double x : *v) {
        std::snprintf(buf, sizeof buf, ",%.10g", x);
        os << buf;
      }
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace msrnn::sw
