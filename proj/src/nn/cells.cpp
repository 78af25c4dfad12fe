#include "msrnn/nn/cells.hpp"

#include <cmath>

#include "msrnn/error.hpp"

namespace msrnn::nn {

using ad::Parameter;
using ad::Shape;
using ad::Tape;
using ad::Tensor;
using ad::Var;

std::string to_string(CellKind kind) {
  switch (kind) {
    case CellKind::gru: return "gru";
    case CellKind::lstm: return "lstm";
    case CellKind::tkan: return "tkan";
  }
  return "?";
}

CellKind parse_cell_kind(const std::string& s) {
  if (s == "gru") return CellKind::gru;
  if (s == "lstm") return CellKind::lstm;
  if (s == "tkan") return CellKind::tkan;
  throw ValidationError("unknown cell kind '" + s + "' (expected gru, lstm or tkan)");
}

void CellConfig::validate() const {
  if (input == 0 || hidden == 0) throw ValidationError("cell sizes must be positive");
  if (kind == CellKind::tkan) {
    if (sublayers == 0 || sub_dim == 0 || grid == 0) {
      throw ValidationError("tkan sublayers, sub_dim and grid must be positive");
    }
  }
}

nlohmann::json to_json(const CellConfig& c) {
  nlohmann::json j = {{"kind", to_string(c.kind)}, {"input", c.input}, {"hidden", c.hidden}};
  if (c.kind == CellKind::tkan) {
    j["sublayers"] = c.sublayers;
    j["sub_dim"] = c.sub_dim;
    j["grid"] = c.grid;
    j["degree"] = c.degree;
  }
  return j;
}

CellConfig cell_config_from_json(const nlohmann::json& j) {
  CellConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "kind") c.kind = parse_cell_kind(value.get<std::string>());
    else if (key == "input") c.input = value.get<std::size_t>();
    else if (key == "hidden") c.hidden = value.get<std::size_t>();
    else if (key == "sublayers") c.sublayers = value.get<std::size_t>();
    else if (key == "sub_dim") c.sub_dim = value.get<std::size_t>();
    else if (key == "grid") c.grid = value.get<std::size_t>();
    else if (key == "degree") c.degree = value.get<std::size_t>();
    else throw ValidationError("unknown cell config key '" + key + "'");
  }
  c.validate();
  return c;
}

Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> u(-limit, limit);
  Tensor t(Shape{fan_in, fan_out});
  for (auto& v : t.storage()) v = u(rng);
  return t;
}

CellState Cell::zero_state(Tape& tape, std::size_t batch) const {
  CellState s;
  s.h = tape.constant(Tensor(Shape{batch, config_.hidden}));
  s.c = tape.constant(Tensor(Shape{batch, config_.hidden}));
  if (config_.kind == CellKind::tkan) {
    for (std::size_t l = 0; l < config_.sublayers; ++l) {
      s.memory.push_back(tape.constant(Tensor(Shape{batch, config_.sub_dim})));
    }
  }
  return s;
}

std::vector<Parameter*> Cell::parameters() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

Parameter& Cell::add(const std::string& name, Tensor value) {
  params_.push_back(std::make_unique<Parameter>(name, std::move(value)));
  return *params_.back();
}

Var Affine::apply(Tape& tape, Var x) const {
  Var y = ad::matmul(x, tape.param(*weight));
  return bias ? ad::add(y, tape.param(*bias)) : y;
}

Affine Cell::affine(const std::string& name, std::size_t in, std::size_t out, double bias, Rng& rng) {
  Affine a;
  a.weight = &add(name + ".weight", glorot_uniform(in, out, rng));
  a.bias = &add(name + ".bias", Tensor(Shape{out}, bias));
  return a;
}

GruCell::GruCell(const CellConfig& config, const std::string& prefix, Rng& rng) : Cell(config) {
  config_.validate();
  const std::size_t in = config.hidden + config.input;
  update_ = affine(prefix + ".update", in, config.hidden, 0.0, rng);
  reset_ = affine(prefix + ".reset", in, config.hidden, 0.0, rng);
  candidate_ = affine(prefix + ".candidate", in, config.hidden, 0.0, rng);
}

CellState GruCell::step(Tape& tape, const CellState& state, Var x) {
  const Var hx = ad::concat({state.h, x});
  const Var z = ad::sigmoid(update_.apply(tape, hx));
  const Var r = ad::sigmoid(reset_.apply(tape, hx));
  const Var cand = ad::tanh(candidate_.apply(tape, ad::concat({r * state.h, x})));
  CellState out;
  out.h = state.h + z * (cand - state.h);
  out.c = state.c;
  return out;
}

LstmCell::LstmCell(const CellConfig& config, const std::string& prefix, Rng& rng) : Cell(config) {
  config_.validate();
  const std::size_t in = config.hidden + config.input;
  forget_ = affine(prefix + ".forget", in, config.hidden, 1.0, rng);
  input_ = affine(prefix + ".input", in, config.hidden, 0.0, rng);
  candidate_ = affine(prefix + ".candidate", in, config.hidden, 0.0, rng);
  output_ = affine(prefix + ".output", in, config.hidden, 0.0, rng);
}

CellState LstmCell::step(Tape& tape, const CellState& state, Var x) {
  const Var hx = ad::concat({state.h, x});
  const Var f = ad::sigmoid(forget_.apply(tape, hx));
  const Var i = ad::sigmoid(input_.apply(tape, hx));
  const Var cand = ad::tanh(candidate_.apply(tape, hx));
  const Var o = ad::sigmoid(output_.apply(tape, hx));
  CellState out;
  out.c = f * state.c + i * cand;
  out.h = o * ad::tanh(out.c);
  return out;
}

KanLayer::KanLayer(std::size_t in, std::size_t out, const ad::BsplineGrid& grid, Parameter* base, Parameter* spline)
    : in_(in), out_(out), grid_(grid), base_(base), spline_(spline) {
  if (!(base_->value.shape() == Shape{in, out}) ||
      !(spline_->value.shape() == Shape{in * grid.basis_count(), out})) {
    throw ShapeError("kan layer weights do not match [" + std::to_string(in) + " -> " + std::to_string(out) + "]");
  }
}

Var KanLayer::forward(Tape& tape, Var x) const {
  if (x.shape().back() != in_) {
    throw ShapeError("kan layer expects " + std::to_string(in_) + " inputs, got " + x.shape().str());
  }
  const Var base = ad::matmul(ad::silu(x), tape.param(*base_));
  Var basis = ad::bspline_basis(x, grid_);
  const std::size_t width = in_ * grid_.basis_count();
  basis = ad::reshape(basis, x.shape().rank() == 1 ? Shape{width} : Shape{x.shape().rows(), width});
  return base + ad::matmul(basis, tape.param(*spline_));
}

namespace {

ad::BsplineGrid make_grid(std::size_t intervals, std::size_t degree) {
  ad::BsplineGrid g;
  g.intervals = intervals;
  g.degree = degree;
  return g;
}

}  // namespace

KanModule::KanModule(std::size_t in, std::size_t out, const ad::BsplineGrid& grid, const std::string& prefix, Rng& rng)
    : base_(std::make_unique<Parameter>(prefix + ".base", glorot_uniform(in, out, rng))),
      spline_(std::make_unique<Parameter>(prefix + ".spline", glorot_uniform(in * grid.basis_count(), out, rng))),
      layer_(in, out, grid, base_.get(), spline_.get()) {}

TkanCell::TkanCell(const CellConfig& config, const std::string& prefix, Rng& rng) : Cell(config) {
  config_.validate();
  const std::size_t in = config.hidden + config.input;
  const std::size_t d = config.sub_dim;
  forget_ = affine(prefix + ".forget", in, config.hidden, 1.0, rng);
  input_ = affine(prefix + ".input", in, config.hidden, 0.0, rng);
  candidate_ = affine(prefix + ".candidate", in, config.hidden, 0.0, rng);
  output_ = affine(prefix + ".output", config.sublayers * d, config.hidden, 0.0, rng);
  const ad::BsplineGrid grid = make_grid(config.grid, config.degree);
  for (std::size_t l = 0; l < config.sublayers; ++l) {
    const std::string p = prefix + ".sub" + std::to_string(l);
    Sublayer s;
    s.from_input = &add(p + ".from_input", glorot_uniform(config.input, d, rng));
    s.from_memory = &add(p + ".from_memory", glorot_uniform(d, d, rng));
    Parameter* base = &add(p + ".kan.base", glorot_uniform(d, d, rng));
    Parameter* spline = &add(p + ".kan.spline", glorot_uniform(d * grid.basis_count(), d, rng));
    s.kan = std::make_unique<KanLayer>(d, d, grid, base, spline);
    s.memory_recur = &add(p + ".memory_recur", glorot_uniform(d, d, rng));
    s.memory_from_out = &add(p + ".memory_from_out", glorot_uniform(d, d, rng));
    sub_.push_back(std::move(s));
  }
}

CellState TkanCell::step(Tape& tape, const CellState& state, Var x) {
  if (state.memory.size() != sub_.size()) {
    throw ShapeError("tkan state has " + std::to_string(state.memory.size()) + " memories, expected " +
                     std::to_string(sub_.size()));
  }
  CellState out;
  std::vector<Var> outputs;
  outputs.reserve(sub_.size());
  for (std::size_t l = 0; l < sub_.size(); ++l) {
    const Sublayer& s = sub_[l];
    const Var pre = ad::matmul(x, tape.param(*s.from_input)) + ad::matmul(state.memory[l], tape.param(*s.from_memory));
    const Var phi = s.kan->forward(tape, pre);
    outputs.push_back(phi);
    out.memory.push_back(ad::matmul(state.memory[l], tape.param(*s.memory_recur)) +
                         ad::matmul(phi, tape.param(*s.memory_from_out)));
  }
  const Var hx = ad::concat({state.h, x});
  const Var f = ad::sigmoid(forget_.apply(tape, hx));
  const Var i = ad::sigmoid(input_.apply(tape, hx));
  const Var cand = ad::sigmoid(candidate_.apply(tape, hx));
  const Var o = ad::sigmoid(output_.apply(tape, ad::concat(outputs)));
  out.c = f * state.c + i * cand;
  out.h = o * ad::tanh(out.c);
  return out;
}

std::unique_ptr<Cell> make_cell(const CellConfig& config, const std::string& prefix, Rng& rng) {
  switch (config.kind) {
    case CellKind::gru: return std::make_unique<GruCell>(config, prefix, rng);
    case CellKind::lstm: return std::make_unique<LstmCell>(config, prefix, rng);
    case CellKind::tkan: return std::make_unique<TkanCell>(config, prefix, rng);
  }
  throw ValidationError("unknown cell kind");
}

Stack::Stack(CellKind kind, std::size_t input, std::size_t hidden, std::size_t layers, const CellConfig& tkan_shape,
             const std::string& prefix, Rng& rng) {
  if (layers == 0) throw ValidationError("a stack needs at least one layer");
  for (std::size_t l = 0; l < layers; ++l) {
    CellConfig c = tkan_shape;
    c.kind = kind;
    c.input = l == 0 ? input : hidden;
    c.hidden = hidden;
    cells_.push_back(make_cell(c, prefix + ".layer" + std::to_string(l), rng));
  }
}

std::vector<CellState> Stack::zero_state(Tape& tape, std::size_t batch) const {
  std::vector<CellState> s;
  for (const auto& c : cells_) s.push_back(c->zero_state(tape, batch));
  return s;
}

Var Stack::step(Tape& tape, std::vector<CellState>& state, Var x) {
  if (state.size() != cells_.size()) throw ShapeError("stack state does not match layer count");
  Var in = x;
  for (std::size_t l = 0; l < cells_.size(); ++l) {
    state[l] = cells_[l]->step(tape, state[l], in);
    in = state[l].h;
  }
  return in;
}

std::vector<Var> Stack::run(Tape& tape, const std::vector<Var>& xs) {
  if (xs.empty()) throw ValidationError("stack run needs at least one step");
  std::vector<CellState> state = zero_state(tape, xs.front().shape().rows());
  std::vector<Var> out;
  out.reserve(xs.size());
  for (const Var& x : xs) out.push_back(step(tape, state, x));
  return out;
}

std::vector<Parameter*> Stack::parameters() {
  std::vector<Parameter*> out;
  for (auto& c : cells_) {
    for (Parameter* p : c->parameters()) out.push_back(p);
  }
  return out;
}

}  // namespace msrnn::nn
