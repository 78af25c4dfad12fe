#include "msrnn/autodiff/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "msrnn/error.hpp"

namespace msrnn::ad {

Parameter::Parameter(std::string n, Tensor v)
    : name(std::move(n)), value(std::move(v)), grad(value.shape(), 0.0) {}

// ---------------------------------------------------------------------------
// B-spline basis

std::vector<double> BsplineGrid::knots() const {
  const std::size_t n = intervals + 2 * degree + 1;
  std::vector<double> t(n);
  const double h = spacing();
  for (std::size_t j = 0; j < n; ++j) {
    t[j] = lo + (static_cast<double>(j) - static_cast<double>(degree)) * h;
  }
  return t;
}

namespace {

// Cox-de Boor table of all degree-`target` basis values at x, where x has
// already been clamped into [lo, hi]. The active interval is restricted to
// the interior span so that x == hi evaluates the left-hand polynomial piece.
std::vector<double> basis_table(const BsplineGrid& grid, double x, std::size_t target) {
  const std::vector<double> t = grid.knots();
  const std::size_t nk = t.size();
  const double h = grid.spacing();
  auto mu = static_cast<std::ptrdiff_t>(std::floor((x - grid.lo) / h)) +
            static_cast<std::ptrdiff_t>(grid.degree);
  mu = std::clamp<std::ptrdiff_t>(mu, static_cast<std::ptrdiff_t>(grid.degree),
                                  static_cast<std::ptrdiff_t>(grid.degree + grid.intervals - 1));

  std::vector<double> b(nk - 1, 0.0);
  b[static_cast<std::size_t>(mu)] = 1.0;
  for (std::size_t d = 1; d <= target; ++d) {
    std::vector<double> next(nk - d - 1, 0.0);
    for (std::size_t j = 0; j + d + 1 < nk; ++j) {
      double v = 0.0;
      const double left = t[j + d] - t[j];
      const double right = t[j + d + 1] - t[j + 1];
      if (b[j] != 0.0 && left > 0.0) v += (x - t[j]) / left * b[j];
      if (b[j + 1] != 0.0 && right > 0.0) v += (t[j + d + 1] - x) / right * b[j + 1];
      next[j] = v;
    }
    b = std::move(next);
  }
  return b;
}

}  // namespace

std::vector<double> bspline_basis_values(const BsplineGrid& grid, double x) {
  const double xc = std::clamp(x, grid.lo, grid.hi);
  return basis_table(grid, xc, grid.degree);
}

std::vector<double> bspline_basis_derivatives(const BsplineGrid& grid, double x) {
  std::vector<double> out(grid.basis_count(), 0.0);
  if (grid.degree == 0 || x < grid.lo || x > grid.hi) return out;
  const std::vector<double> lower = basis_table(grid, x, grid.degree - 1);
  const double k = static_cast<double>(grid.degree);
  const double h = grid.spacing();
  for (std::size_t j = 0; j < out.size(); ++j) {
    out[j] = k / (k * h) * (lower[j] - lower[j + 1]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tape

const Tensor& Var::value() const {
  if (!tape_) throw UsageError("value() on an unbound Var");
  return tape_->value(id_);
}

const Tensor& Tape::value(std::int32_t id) const {
  return nodes_.at(static_cast<std::size_t>(id)).val();
}

void Tape::check_open() const {
  if (consumed_) throw UsageError("tape already consumed by backward(); call reset() first");
}

Var Tape::push(Node node) {
  check_open();
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::int32_t>(nodes_.size() - 1));
}

Var Tape::constant(Tensor value) {
  Node n;
  n.op = Op::constant;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::param(Parameter& p) {
  if (auto it = bound_.find(&p); it != bound_.end()) return Var(this, it->second);
  Node n;
  n.op = Op::parameter;
  n.external = &p.value;
  n.param = &p;
  Var v = push(std::move(n));
  bound_.emplace(&p, v.id());
  return v;
}

void Tape::reset() {
  nodes_.clear();
  bound_.clear();
  consumed_ = false;
}

std::vector<double>& Tape::grad_buffer(std::int32_t id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.empty()) n.grad.assign(n.val().size(), 0.0);
  return n.grad;
}

Tensor Tape::grad_of(Var v) const {
  const Node& n = nodes_.at(static_cast<std::size_t>(v.id()));
  if (n.grad.empty()) return Tensor(n.val().shape(), 0.0);
  return Tensor(n.val().shape(), n.grad);
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw UsageError("backward(): loss was not recorded on this tape");
  if (consumed_) throw UsageError("backward() called twice on one forward pass");
  if (loss.value().size() != 1) {
    throw UsageError("backward() requires a scalar loss, got shape " + loss.shape().str());
  }
  for (auto& n : nodes_) n.grad.clear();
  grad_buffer(loss.id())[0] = 1.0;
  for (std::int32_t id = loss.id(); id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.empty()) continue;
    backward_node(n);
  }
  consumed_ = true;
}

// ---------------------------------------------------------------------------
// Primitives

struct OpsImpl {
  static Tape& tape_of(Var a) {
    if (!a.tape()) throw UsageError("operation on an unbound Var");
    return *a.tape();
  }
  static Tape& tape_of(Var a, Var b) {
    if (a.tape() != b.tape() || !a.tape()) {
      throw UsageError("operands recorded on different tapes");
    }
    return *a.tape();
  }
  static Var push(Tape& t, Tape::Node n) { return t.push(std::move(n)); }
  static Tape::Node& node(Tape& t, std::int32_t id) { return t.nodes_[static_cast<std::size_t>(id)]; }
  static std::vector<double>& grad(Tape& t, std::int32_t id) { return t.grad_buffer(id); }
};

namespace {

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + a.str() + " and " + b.str());
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// 0: same shape, 1: b broadcast over a's leading axes, 2: a broadcast over b.
int broadcast_mode(const char* op, const Shape& a, const Shape& b) {
  if (a == b) return 0;
  if (a.has_suffix(b)) return 1;
  if (b.has_suffix(a)) return 2;
  shape_fail(op, a, b);
}

template <class F>
Var elementwise_binary(Op op, const char* name, Var a, Var b, F f) {
  Tape& t = OpsImpl::tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const int mode = broadcast_mode(name, av.shape(), bv.shape());
  const Tensor& big = mode == 2 ? bv : av;
  const Tensor& small = mode == 2 ? av : bv;
  Tensor out(big.shape());
  const std::size_t inner = small.size();
  const std::size_t outer = big.size() / inner;
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t k = o * inner + i;
      out[k] = mode == 2 ? f(small[i], big[k]) : f(big[k], mode == 1 ? small[i] : small[k]);
    }
  }
  Tape::Node n;
  n.op = op;
  n.value = std::move(out);
  n.a = a.id();
  n.b = b.id();
  n.i0 = static_cast<std::size_t>(mode);
  return OpsImpl::push(t, std::move(n));
}

template <class F>
Var elementwise_unary(Op op, Var a, F f, double d0 = 0.0, double d1 = 0.0) {
  Tape& t = OpsImpl::tape_of(a);
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  Tape::Node n;
  n.op = op;
  n.value = std::move(out);
  n.a = a.id();
  n.d0 = d0;
  n.d1 = d1;
  return OpsImpl::push(t, std::move(n));
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = OpsImpl::tape_of(a, b);
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (bs.rank() != 2 || (as.rank() != 1 && as.rank() != 2) || as.back() != bs[0]) {
    shape_fail("matmul", as, bs);
  }
  const std::size_t n = as.rank() == 1 ? 1 : as[0];
  const std::size_t k = bs[0];
  const std::size_t p = bs[1];
  Tensor out(as.rank() == 1 ? Shape{p} : Shape{n, p});
  const double* A = a.value().data().data();
  const double* B = b.value().data().data();
  double* C = out.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t l = 0; l < k; ++l) {
      const double av = A[i * k + l];
      if (av == 0.0) continue;
      const double* brow = B + l * p;
      double* crow = C + i * p;
      for (std::size_t j = 0; j < p; ++j) crow[j] += av * brow[j];
    }
  }
  Tape::Node node;
  node.op = Op::matmul;
  node.value = std::move(out);
  node.a = a.id();
  node.b = b.id();
  node.i0 = n;
  node.i1 = k;
  node.i2 = p;
  return OpsImpl::push(t, std::move(node));
}

Var vecmat(Var a, Var b) {
  Tape& t = OpsImpl::tape_of(a, b);
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.rank() != 2 || bs.rank() != 3 || as[0] != bs[0] || as[1] != bs[1]) shape_fail("vecmat", as, bs);
  const std::size_t n = as[0], k = as[1], p = bs[2];
  Tensor out(Shape{n, p});
  const double* A = a.value().data().data();
  const double* B = b.value().data().data();
  double* C = out.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t l = 0; l < k; ++l) {
      const double av = A[i * k + l];
      const double* brow = B + (i * k + l) * p;
      for (std::size_t j = 0; j < p; ++j) C[i * p + j] += av * brow[j];
    }
  }
  Tape::Node node;
  node.op = Op::vecmat;
  node.value = std::move(out);
  node.a = a.id();
  node.b = b.id();
  node.i0 = n;
  node.i1 = k;
  node.i2 = p;
  return OpsImpl::push(t, std::move(node));
}

Var add(Var a, Var b) {
  return elementwise_binary(Op::add, "add", a, b, [](double x, double y) { return x + y; });
}

Var sub(Var a, Var b) {
  return elementwise_binary(Op::sub, "sub", a, b, [](double x, double y) { return x - y; });
}

Var mul(Var a, Var b) {
  return elementwise_binary(Op::mul, "mul", a, b, [](double x, double y) { return x * y; });
}

Var scale(Var a, double s) {
  return elementwise_unary(Op::scale, a, [s](double x) { return s * x; }, s);
}

Var concat(std::initializer_list<Var> parts) {
  return concat(std::span<const Var>(parts.begin(), parts.size()));
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Tape& t = OpsImpl::tape_of(parts[0]);
  auto lead = [](const Shape& s) { return s.rank() <= 1 ? Shape{} : s.dropped_last(); };
  const Shape lead0 = lead(parts[0].shape());
  std::size_t width = 0;
  for (const Var& p : parts) {
    if (p.tape() != &t) throw UsageError("concat: inputs recorded on different tapes");
    if (!(lead(p.shape()) == lead0)) shape_fail("concat", parts[0].shape(), p.shape());
    width += p.shape().back();
  }
  const Shape out_shape = lead0.rank() == 0 ? Shape{width} : lead0.appended(width);
  Tensor out(out_shape);
  const std::size_t rows = out_shape.rows();
  std::size_t off = 0;
  Tape::Node n;
  n.op = Op::concat;
  for (const Var& p : parts) {
    const Tensor& pv = p.value();
    const std::size_t w = pv.shape().back();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(pv.data().data() + r * w, w, out.data().data() + r * width + off);
    }
    off += w;
    n.inputs.push_back(p.id());
  }
  n.value = std::move(out);
  return OpsImpl::push(t, std::move(n));
}

Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end, bool keep_axis) {
  Tape& t = OpsImpl::tape_of(a);
  const Shape& s = a.shape();
  if (axis >= s.rank() || begin >= end || end > s[axis]) {
    throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") on axis " + std::to_string(axis) + " invalid for shape " + s.str());
  }
  std::size_t outer = 1;
  std::size_t inner = 1;
  std::vector<std::size_t> dims;
  for (std::size_t i = 0; i < s.rank(); ++i) {
    if (i < axis) outer *= s[i];
    if (i > axis) inner *= s[i];
    if (i == axis) {
      if (keep_axis || end - begin != 1) dims.push_back(end - begin);
    } else {
      dims.push_back(s[i]);
    }
  }
  Tensor out{Shape(std::span<const std::size_t>(dims))};
  const std::size_t mid = s[axis];
  const std::size_t len = end - begin;
  const double* src = a.value().data().data();
  double* dst = out.data().data();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(src + (o * mid + begin) * inner, len * inner, dst + o * len * inner);
  }
  Tape::Node n;
  n.op = Op::slice;
  n.value = std::move(out);
  n.a = a.id();
  n.i0 = axis;
  n.i1 = begin;
  n.i2 = end;
  return OpsImpl::push(t, std::move(n));
}

Var reshape(Var a, Shape shape) {
  Tape& t = OpsImpl::tape_of(a);
  if (shape.numel() != a.value().size()) shape_fail("reshape", a.shape(), shape);
  Tape::Node n;
  n.op = Op::reshape;
  n.value = Tensor(shape, a.value().storage());
  n.a = a.id();
  return OpsImpl::push(t, std::move(n));
}

Var sigmoid(Var a) { return elementwise_unary(Op::sigmoid, a, stable_sigmoid); }

Var tanh(Var a) {
  return elementwise_unary(Op::tanh, a, [](double x) { return std::tanh(x); });
}

Var relu(Var a) {
  return elementwise_unary(Op::relu, a, [](double x) { return x > 0.0 ? x : 0.0; });
}

Var silu(Var a) {
  return elementwise_unary(Op::silu, a, [](double x) { return x * stable_sigmoid(x); });
}

Var exp(Var a) {
  return elementwise_unary(Op::exp, a, [](double x) { return std::exp(x); });
}

Var log(Var a, double floor) {
  return elementwise_unary(
      Op::log, a, [floor](double x) { return std::log(floor > 0.0 ? std::max(x, floor) : x); },
      floor);
}

Var clamp(Var a, double lo, double hi) {
  if (!(lo <= hi)) throw DomainError("clamp: lo must not exceed hi");
  return elementwise_unary(Op::clamp, a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
                           lo, hi);
}

Var softmax(Var a) {
  Tape& t = OpsImpl::tape_of(a);
  const Tensor& av = a.value();
  Tensor out(av.shape());
  const std::size_t w = av.shape().back();
  const std::size_t rows = av.size() / w;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = av.data().data() + r * w;
    double* y = out.data().data() + r * w;
    const double mx = *std::max_element(x, x + w);
    double z = 0.0;
    for (std::size_t j = 0; j < w; ++j) {
      y[j] = std::exp(x[j] - mx);
      z += y[j];
    }
    for (std::size_t j = 0; j < w; ++j) y[j] /= z;
  }
  Tape::Node n;
  n.op = Op::softmax;
  n.value = std::move(out);
  n.a = a.id();
  return OpsImpl::push(t, std::move(n));
}

Var logsumexp(Var a) {
  Tape& t = OpsImpl::tape_of(a);
  const Tensor& av = a.value();
  const std::size_t w = av.shape().back();
  const std::size_t rows = av.size() / w;
  Tensor out(av.shape().rank() <= 1 ? Shape{} : av.shape().dropped_last());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = av.data().data() + r * w;
    const double mx = *std::max_element(x, x + w);
    if (!std::isfinite(mx)) {
      out[r] = mx;
      continue;
    }
    double z = 0.0;
    for (std::size_t j = 0; j < w; ++j) z += std::exp(x[j] - mx);
    out[r] = mx + std::log(z);
  }
  Tape::Node n;
  n.op = Op::logsumexp;
  n.value = std::move(out);
  n.a = a.id();
  return OpsImpl::push(t, std::move(n));
}

Var sum(Var a) {
  Tape& t = OpsImpl::tape_of(a);
  double s = 0.0;
  for (double x : a.value().data()) s += x;
  Tape::Node n;
  n.op = Op::sum;
  n.value = Tensor::scalar(s);
  n.a = a.id();
  return OpsImpl::push(t, std::move(n));
}

Var mean(Var a) {
  Tape& t = OpsImpl::tape_of(a);
  double s = 0.0;
  for (double x : a.value().data()) s += x;
  Tape::Node n;
  n.op = Op::mean;
  n.value = Tensor::scalar(s / static_cast<double>(a.value().size()));
  n.a = a.id();
  return OpsImpl::push(t, std::move(n));
}

Var bspline_basis(Var a, const BsplineGrid& grid) {
  Tape& t = OpsImpl::tape_of(a);
  const Tensor& av = a.value();
  const std::size_t nb = grid.basis_count();
  Tensor out(av.shape().rank() == 0 ? Shape{nb} : av.shape().appended(nb));
  for (std::size_t i = 0; i < av.size(); ++i) {
    const std::vector<double> b = bspline_basis_values(grid, av[i]);
    std::copy(b.begin(), b.end(), out.data().begin() + static_cast<std::ptrdiff_t>(i * nb));
  }
  Tape::Node n;
  n.op = Op::bspline;
  n.value = std::move(out);
  n.a = a.id();
  n.i0 = grid.intervals;
  n.i1 = grid.degree;
  n.d0 = grid.lo;
  n.d1 = grid.hi;
  return OpsImpl::push(t, std::move(n));
}

// ---------------------------------------------------------------------------
// Reverse sweep

void Tape::backward_node(Node& n) {
  const std::vector<double>& g = n.grad;
  const Tensor& y = n.val();
  switch (n.op) {
    case Op::constant:
      return;
    case Op::parameter: {
      auto pg = n.param->grad.data();
      for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
      return;
    }
    case Op::matmul: {
      const std::size_t rows = n.i0, k = n.i1, p = n.i2;
      const double* A = value(n.a).data().data();
      const double* B = value(n.b).data().data();
      std::vector<double>& ga = grad_buffer(n.a);
      std::vector<double>& gb = grad_buffer(n.b);
      for (std::size_t i = 0; i < rows; ++i) {
        const double* gr = g.data() + i * p;
        for (std::size_t l = 0; l < k; ++l) {
          const double* brow = B + l * p;
          double acc = 0.0;
          for (std::size_t j = 0; j < p; ++j) acc += gr[j] * brow[j];
          ga[i * k + l] += acc;
          const double av = A[i * k + l];
          if (av == 0.0) continue;
          double* gbrow = gb.data() + l * p;
          for (std::size_t j = 0; j < p; ++j) gbrow[j] += av * gr[j];
        }
      }
      return;
    }
    case Op::vecmat: {
      const std::size_t rows = n.i0, k = n.i1, p = n.i2;
      const double* A = value(n.a).data().data();
      const double* B = value(n.b).data().data();
      std::vector<double>& ga = grad_buffer(n.a);
      std::vector<double>& gb = grad_buffer(n.b);
      for (std::size_t i = 0; i < rows; ++i) {
        const double* gr = g.data() + i * p;
        for (std::size_t l = 0; l < k; ++l) {
          const double* brow = B + (i * k + l) * p;
          double* gbrow = gb.data() + (i * k + l) * p;
          const double av = A[i * k + l];
          double acc = 0.0;
          for (std::size_t j = 0; j < p; ++j) {
            acc += gr[j] * brow[j];
            gbrow[j] += av * gr[j];
          }
          ga[i * k + l] += acc;
        }
      }
      return;
    }
    case Op::add:
    case Op::sub:
    case Op::mul: {
      const int mode = static_cast<int>(n.i0);
      const Tensor& av = value(n.a);
      const Tensor& bv = value(n.b);
      const std::size_t inner = mode == 2 ? av.size() : bv.size();
      const std::size_t outer = y.size() / inner;
      std::vector<double>& ga = grad_buffer(n.a);
      std::vector<double>& gb = grad_buffer(n.b);
      const double sign_b = n.op == Op::sub ? -1.0 : 1.0;
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < inner; ++i) {
          const std::size_t k = o * inner + i;
          const std::size_t ia = mode == 2 ? i : k;
          const std::size_t ib = mode == 1 ? i : k;
          if (n.op == Op::mul) {
            ga[ia] += g[k] * bv[ib];
            gb[ib] += g[k] * av[ia];
          } else {
            ga[ia] += g[k];
            gb[ib] += sign_b * g[k];
          }
        }
      }
      return;
    }
    case Op::scale: {
      std::vector<double>& ga = grad_buffer(n.a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += n.d0 * g[i];
      return;
    }
    case Op::concat: {
      const std::size_t width = y.shape().back();
      const std::size_t rows = y.size() / width;
      std::size_t off = 0;
      for (std::int32_t id : n.inputs) {
        const std::size_t w = value(id).shape().back();
        std::vector<double>& gi = grad_buffer(id);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < w; ++j) gi[r * w + j] += g[r * width + off + j];
        }
        off += w;
      }
      return;
    }
    case Op::slice: {
      const Shape& s = value(n.a).shape();
      std::size_t outer = 1, inner = 1;
      for (std::size_t i = 0; i < s.rank(); ++i) {
        if (i < n.i0) outer *= s[i];
        if (i > n.i0) inner *= s[i];
      }
      const std::size_t mid = s[n.i0];
      const std::size_t len = n.i2 - n.i1;
      std::vector<double>& ga = grad_buffer(n.a);
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t j = 0; j < len * inner; ++j) {
          ga[(o * mid + n.i1) * inner + j] += g[o * len * inner + j];
        }
      }
      return;
    }
    case Op::reshape: {
      std::vector<double>& ga = grad_buffer(n.a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      return;
    }
    case Op::sigmoid: {
      std::vector<double>& ga = grad_buffer(n.a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
      return;
    }
    case Op::tanh: {
      std::vector<double>& ga = grad_buffer(n.a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
      return;
    }
    case Op::relu: {
      const Tensor& x = value(n.a);
      std::vector<double>& ga = grad_buffer(n.a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += x[i] > 0.0 ? g[i] : 0.0;
      return;
    }
    case Op::silu: {
      const Tensor& x = value(n.a);
      std::vector<double>& ga = grad_buffer(n.a);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double s = stable_sigmoid(x[i]);
        ga[i] += g[i] * (s + x[i] * s * (1.0 - s));
      }
      return;
    }
    case Op::exp: {
      std::vector<double>& ga = grad_buffer(n.a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
      return;
    }
    case Op::log: {
      const Tensor& x = value(n.a);
      std::vector<double>& ga = grad_buffer(n.a);
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (n.d0 > 0.0 && x[i] < n.d0) continue;
        ga[i] += g[i] / x[i];
      }
      return;
    }
    case Op::clamp: {
      const Tensor& x = value(n.a);
      std::vector<double>& ga = grad_buffer(n.a);
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (x[i] >= n.d0 && x[i] <= n.d1) ga[i] += g[i];
      }
      return;
    }
    case Op::softmax: {
      const std::size_t w = y.shape().back();
      const std::size_t rows = y.size() / w;
      std::vector<double>& ga = grad_buffer(n.a);
      for (std::size_t r = 0; r < rows; ++r) {
        double dot = 0.0;
        for (std::size_t j = 0; j < w; ++j) dot += g[r * w + j] * y[r * w + j];
        for (std::size_t j = 0; j < w; ++j) {
          ga[r * w + j] += y[r * w + j] * (g[r * w + j] - dot);
        }
      }
      return;
    }
    case Op::logsumexp: {
      const Tensor& x = value(n.a);
      const std::size_t w = x.shape().back();
      const std::size_t rows = x.size() / w;
      std::vector<double>& ga = grad_buffer(n.a);
      for (std::size_t r = 0; r < rows; ++r) {
        if (!std::isfinite(y[r])) continue;
        for (std::size_t j = 0; j < w; ++j) {
          ga[r * w + j] += g[r] * std::exp(x[r * w + j] - y[r]);
        }
      }
      return;
    }
    case Op::sum:
    case Op::mean: {
      std::vector<double>& ga = grad_buffer(n.a);
      const double d = n.op == Op::mean ? g[0] / static_cast<double>(ga.size()) : g[0];
      for (double& v : ga) v += d;
      return;
    }
    case Op::bspline: {
      BsplineGrid grid;
      grid.intervals = n.i0;
      grid.degree = n.i1;
      grid.lo = n.d0;
      grid.hi = n.d1;
      const std::size_t nb = grid.basis_count();
      const Tensor& x = value(n.a);
      std::vector<double>& ga = grad_buffer(n.a);
      for (std::size_t i = 0; i < x.size(); ++i) {
        const std::vector<double> d = bspline_basis_derivatives(grid, x[i]);
        double acc = 0.0;
        for (std::size_t b = 0; b < nb; ++b) acc += g[i * nb + b] * d[b];
        ga[i] += acc;
      }
      return;
    }
  }
}

}  // namespace msrnn::ad
