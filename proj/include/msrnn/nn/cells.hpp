#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "msrnn/autodiff/tape.hpp"

namespace msrnn::nn {

enum class CellKind { gru, lstm, tkan };

std::string to_string(CellKind kind);
CellKind parse_cell_kind(const std::string& s);

struct CellConfig {
  CellKind kind = CellKind::lstm;
  std::size_t input = 1;
  std::size_t hidden = 100;
  // TKAN only.
  std::size_t sublayers = 3;
  std::size_t sub_dim = 10;
  std::size_t grid = 5;
  std::size_t degree = 3;

  void validate() const;
};

nlohmann::json to_json(const CellConfig& c);
CellConfig cell_config_from_json(const nlohmann::json& j);

/// Per-sample recurrent state. Tensors are [batch, dim]; `c` is unused by the
/// GRU and `memory` holds one entry per TKAN sub-layer.
struct CellState {
  ad::Var h;
  ad::Var c;
  std::vector<ad::Var> memory;
};

using Rng = std::mt19937_64;

/// Uniform on ±sqrt(6 / (fan_in + fan_out)).
ad::Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

/// Affine map with shared weights: y = x W + b.
struct Affine {
  ad::Parameter* weight = nullptr;
  ad::Parameter* bias = nullptr;
  ad::Var apply(ad::Tape& tape, ad::Var x) const;
};

class Cell {
 public:
  virtual ~Cell() = default;
  Cell() = default;
  Cell(const Cell&) = delete;
  Cell& operator=(const Cell&) = delete;

  const CellConfig& config() const { return config_; }
  CellState zero_state(ad::Tape& tape, std::size_t batch) const;
  /// One step on input `x` of shape [batch, input].
  virtual CellState step(ad::Tape& tape, const CellState& state, ad::Var x) = 0;

  std::vector<ad::Parameter*> parameters();

 protected:
  explicit Cell(CellConfig config) : config_(config) {}
  ad::Parameter& add(const std::string& name, ad::Tensor value);
  Affine affine(const std::string& name, std::size_t in, std::size_t out, double bias, Rng& rng);

  CellConfig config_;
  std::vector<std::unique_ptr<ad::Parameter>> params_;
};

class GruCell : public Cell {
 public:
  GruCell(const CellConfig& config, const std::string& prefix, Rng& rng);
  CellState step(ad::Tape& tape, const CellState& state, ad::Var x) override;

 private:
  Affine update_, reset_, candidate_;
};

class LstmCell : public Cell {
 public:
  LstmCell(const CellConfig& config, const std::string& prefix, Rng& rng);
  CellState step(ad::Tape& tape, const CellState& state, ad::Var x) override;

 private:
  Affine forget_, input_, candidate_, output_;
};

/// y = silu(x) base + spline_basis(x) spline, with a fixed uniform knot grid.
/// Spline weights are stored [in * basis_count, out], grouped by input.
class KanLayer {
 public:
  KanLayer(std::size_t in, std::size_t out, const ad::BsplineGrid& grid, ad::Parameter* base,
           ad::Parameter* spline);
  ad::Var forward(ad::Tape& tape, ad::Var x) const;

  std::size_t in() const { return in_; }
  std::size_t out() const { return out_; }
  const ad::BsplineGrid& grid() const { return grid_; }

 private:
  std::size_t in_, out_;
  ad::BsplineGrid grid_;
  ad::Parameter* base_;
  ad::Parameter* spline_;
};

/// Stand-alone KAN layer owning its weights.
class KanModule {
 public:
  KanModule(std::size_t in, std::size_t out, const ad::BsplineGrid& grid, const std::string& prefix, Rng& rng);
  ad::Var forward(ad::Tape& tape, ad::Var x) const { return layer_.forward(tape, x); }
  ad::Parameter& base() { return *base_; }
  ad::Parameter& spline() { return *spline_; }
  std::vector<ad::Parameter*> parameters() { return {base_.get(), spline_.get()}; }

 private:
  std::unique_ptr<ad::Parameter> base_, spline_;
  KanLayer layer_;
};

class TkanCell : public Cell {
 public:
  TkanCell(const CellConfig& config, const std::string& prefix, Rng& rng);
  CellState step(ad::Tape& tape, const CellState& state, ad::Var x) override;

 private:
  struct Sublayer {
    ad::Parameter* from_input = nullptr;   // [input, sub_dim]
    ad::Parameter* from_memory = nullptr;  // [sub_dim, sub_dim]
    ad::Parameter* memory_recur = nullptr; // [sub_dim, sub_dim]
    ad::Parameter* memory_from_out = nullptr;
    std::unique_ptr<KanLayer> kan;
  };
  Affine forget_, input_, candidate_, output_;
  std::vector<Sublayer> sub_;
};

std::unique_ptr<Cell> make_cell(const CellConfig& config, const std::string& prefix, Rng& rng);

/// Layered cells where layer l+1 consumes layer l's hidden state.
class Stack {
 public:
  Stack(CellKind kind, std::size_t input, std::size_t hidden, std::size_t layers, const CellConfig& tkan_shape,
        const std::string& prefix, Rng& rng);

  std::size_t layers() const { return cells_.size(); }
  std::size_t hidden() const { return cells_.back()->config().hidden; }
  Cell& cell(std::size_t i) { return *cells_[i]; }

  std::vector<CellState> zero_state(ad::Tape& tape, std::size_t batch) const;
  /// Advances every layer once; returns the top hidden state.
  ad::Var step(ad::Tape& tape, std::vector<CellState>& state, ad::Var x);
  /// Runs a sequence of [batch, input] steps and returns every top hidden state.
  std::vector<ad::Var> run(ad::Tape& tape, const std::vector<ad::Var>& xs);

  std::vector<ad::Parameter*> parameters();

 private:
  std::vector<std::unique_ptr<Cell>> cells_;
};

}  // namespace msrnn::nn
