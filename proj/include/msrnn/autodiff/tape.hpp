#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "msrnn/autodiff/tensor.hpp"

namespace msrnn::ad {

/// A trainable tensor with its accumulated gradient.
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Tensor value);

  std::string name;
  Tensor value;
  Tensor grad;

  void zero_grad() { grad.fill(0.0); }
};

/// Uniform knot grid for degree-`degree` B-splines on [lo, hi] with
/// `intervals` interior intervals, extended by `degree` knots on each side.
struct BsplineGrid {
  std::size_t intervals = 5;
  std::size_t degree = 3;
  double lo = -1.0;
  double hi = 1.0;

  std::size_t basis_count() const { return intervals + degree; }
  double spacing() const { return (hi - lo) / static_cast<double>(intervals); }
  std::vector<double> knots() const;
};

/// Values of every basis function at `x`, after clamping x into [lo, hi].
std::vector<double> bspline_basis_values(const BsplineGrid& grid, double x);
/// Derivatives of every basis function at an unclamped point `x`.
std::vector<double> bspline_basis_derivatives(const BsplineGrid& grid, double x);

class Tape;

/// Handle to a node recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::int32_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  double item() const { return value().item(); }
  Tape* tape() const { return tape_; }
  std::int32_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::int32_t id_ = -1;
};

enum class Op : std::uint8_t {
  constant,
  parameter,
  matmul,
  vecmat,
  add,
  sub,
  mul,
  scale,
  concat,
  slice,
  reshape,
  sigmoid,
  tanh,
  relu,
  silu,
  exp,
  log,
  softmax,
  logsumexp,
  sum,
  mean,
  clamp,
  bspline,
};

struct OpsImpl;

/// Define-by-run record of one forward pass. Single-threaded; distinct tapes
/// share nothing except read-only parameter values.
class Tape {
 public:
  Tape() { nodes_.reserve(256); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var constant(double value) { return constant(Tensor::scalar(value)); }
  /// Binds a parameter; repeated calls within one pass return the same node.
  Var param(Parameter& p);

  /// Reverse sweep from a scalar loss, accumulating into bound Parameters.
  void backward(Var loss);
  /// Gradient of the last backward with respect to an arbitrary node.
  Tensor grad_of(Var v) const;
  void reset();

  std::size_t size() const { return nodes_.size(); }
  const Tensor& value(std::int32_t id) const;

  struct Node {
    Tensor value;
    const Tensor* external = nullptr;
    std::vector<double> grad;
    Op op = Op::constant;
    std::int32_t a = -1;
    std::int32_t b = -1;
    std::vector<std::int32_t> inputs;
    double d0 = 0.0;
    double d1 = 0.0;
    std::size_t i0 = 0;
    std::size_t i1 = 0;
    std::size_t i2 = 0;
    Parameter* param = nullptr;

    const Tensor& val() const { return external ? *external : value; }
  };

 private:
  friend struct OpsImpl;

  Var push(Node node);
  void check_open() const;
  void backward_node(Node& n);
  std::vector<double>& grad_buffer(std::int32_t id);

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::int32_t> bound_;
  bool consumed_ = false;
};

// Primitives. Binary elementwise ops broadcast the operand whose shape is a
// suffix of the other's over the leading axes.
Var matmul(Var a, Var b);
/// Per-row vector-matrix product: [n, k] x [n, k, p] -> [n, p].
Var vecmat(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var concat(std::span<const Var> parts);
Var concat(std::initializer_list<Var> parts);
/// Sub-range [begin, end) along `axis`; the axis is dropped when keep_axis is
/// false and the range has length one.
Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end, bool keep_axis = true);
Var reshape(Var a, Shape shape);
Var sigmoid(Var a);
Var tanh(Var a);
Var relu(Var a);
Var silu(Var a);
Var exp(Var a);
/// log(max(a, floor)); the gradient vanishes below the floor.
Var log(Var a, double floor = 0.0);
Var softmax(Var a);
Var logsumexp(Var a);
Var sum(Var a);
Var mean(Var a);
Var clamp(Var a, double lo, double hi);
Var bspline_basis(Var a, const BsplineGrid& grid);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double s, Var a) { return scale(a, s); }

/// Row `i` of a rank-2 tensor as a vector.
inline Var row(Var a, std::size_t i) { return slice(a, 0, i, i + 1, false); }

}  // namespace msrnn::ad
