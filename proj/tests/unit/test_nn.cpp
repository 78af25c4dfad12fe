#include <cmath>
#include <random>

#include "doctest.h"
#include "msrnn/autodiff/grad_check.hpp"
#include "msrnn/error.hpp"
#include "msrnn/nn/cells.hpp"
#include "test_util.hpp"

using namespace msrnn;
using namespace msrnn::nn;
using ad::Parameter;
using ad::Shape;
using ad::Tape;
using ad::Tensor;
using ad::Var;
using msrnn::testing::random_tensor;

namespace {

void zero_all(std::vector<Parameter*> ps) {
  for (Parameter* p : ps) p->value.fill(0.0);
}

Parameter* find(std::vector<Parameter*> ps, const std::string& suffix) {
  for (Parameter* p : ps) {
    if (p->name.size() >= suffix.size() && p->name.compare(p->name.size() - suffix.size(), suffix.size(), suffix) == 0) {
      return p;
    }
  }
  FAIL("no parameter named *" << suffix);
  return nullptr;
}

CellConfig small(CellKind kind, std::size_t input, std::size_t hidden) {
  CellConfig c;
  c.kind = kind;
  c.input = input;
  c.hidden = hidden;
  c.sublayers = 2;
  c.sub_dim = 3;
  return c;
}

// Cox-de Boor recursion on an explicit knot vector, independent of the tape.
double de_boor(const std::vector<double>& t, std::size_t i, std::size_t k, double x) {
  if (k == 0) return (t[i] <= x && x < t[i + 1]) ? 1.0 : 0.0;
  double left = 0.0;
  double right = 0.0;
  if (t[i + k] != t[i]) left = (x - t[i]) / (t[i + k] - t[i]) * de_boor(t, i, k - 1, x);
  if (t[i + k + 1] != t[i + 1]) right = (t[i + k + 1] - x) / (t[i + k + 1] - t[i + 1]) * de_boor(t, i + 1, k - 1, x);
  return left + right;
}

// Rolls `cell` three steps from a trainable initial state and checks every
// parameter and initial-state gradient.
double rollout_grad_error(CellKind kind, std::uint64_t seed) {
  Rng rng(seed);
  const CellConfig cfg = small(kind, 3, 4);
  auto cell = make_cell(cfg, "cell", rng);
  std::mt19937_64 data_rng(seed + 100);
  std::vector<Tensor> xs;
  for (int t = 0; t < 3; ++t) xs.push_back(random_tensor(data_rng, Shape{2, 3}));
  const Tensor readout = random_tensor(data_rng, Shape{2, 4});
  Parameter h0("h0", random_tensor(data_rng, Shape{2, 4}, -0.5, 0.5));
  Parameter c0("c0", random_tensor(data_rng, Shape{2, 4}, -0.5, 0.5));
  std::vector<Parameter> mem0;
  for (std::size_t l = 0; l < cfg.sublayers; ++l) {
    mem0.emplace_back("m" + std::to_string(l), random_tensor(data_rng, Shape{2, cfg.sub_dim}, -0.5, 0.5));
  }
  std::vector<Parameter*> ps = cell->parameters();
  ps.push_back(&h0);
  if (kind != CellKind::gru) ps.push_back(&c0);
  if (kind == CellKind::tkan) {
    for (auto& m : mem0) ps.push_back(&m);
  }
  return ad::grad_check(
      [&](Tape& tape) {
        CellState s;
        s.h = tape.param(h0);
        s.c = tape.param(c0);
        if (kind == CellKind::tkan) {
          for (auto& m : mem0) s.memory.push_back(tape.param(m));
        }
        Var loss = tape.constant(0.0);
        for (const Tensor& x : xs) {
          s = cell->step(tape, s, tape.constant(x));
          loss = loss + ad::sum(s.h * tape.constant(readout));
          if (kind != CellKind::gru) loss = loss + ad::scale(ad::sum(s.c * s.c), 0.1);
          for (const Var& m : s.memory) loss = loss + ad::scale(ad::sum(m), 0.05);
        }
        return loss;
      },
      ps);
}

}  // namespace

TEST_CASE("gru with zero weights halves the previous state") {
  Rng rng(1);
  GruCell cell(small(CellKind::gru, 2, 3), "gru", rng);
  zero_all(cell.parameters());
  Tape tape;
  CellState s;
  s.h = tape.constant(Tensor::matrix(1, 3, {0.4, -0.8, 1.0}));
  s.c = tape.constant(Tensor(Shape{1, 3}));
  const CellState out = cell.step(tape, s, tape.constant(Tensor::matrix(1, 2, {0.3, -0.7})));
  CHECK(out.h.value()[0] == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(out.h.value()[1] == doctest::Approx(-0.4).epsilon(1e-15));
  CHECK(out.h.value()[2] == doctest::Approx(0.5).epsilon(1e-15));

  Tape t2;
  const CellState z = cell.step(t2, cell.zero_state(t2, 1), t2.constant(Tensor::matrix(1, 2, {0.3, -0.7})));
  for (double v : z.h.value().data()) CHECK(v == 0.0);
}

TEST_CASE("gru stays in the unit box when started inside it") {
  Rng rng(2);
  GruCell cell(small(CellKind::gru, 3, 5), "gru", rng);
  std::mt19937_64 data(3);
  for (auto* p : cell.parameters()) p->value = random_tensor(data, p->value.shape(), -3.0, 3.0);
  for (int trial = 0; trial < 50; ++trial) {
    Tape tape;
    CellState s;
    s.h = tape.constant(random_tensor(data, Shape{4, 5}));
    for (int t = 0; t < 5; ++t) {
      s = cell.step(tape, s, tape.constant(random_tensor(data, Shape{4, 3}, -5.0, 5.0)));
      for (double v : s.h.value().data()) REQUIRE(std::abs(v) <= 1.0);
    }
  }
}

TEST_CASE("lstm zero weights give a zero state") {
  Rng rng(4);
  LstmCell cell(small(CellKind::lstm, 2, 3), "lstm", rng);
  zero_all(cell.parameters());
  Tape tape;
  const CellState out = cell.step(tape, cell.zero_state(tape, 2), tape.constant(Tensor::matrix(2, 2, {1, 2, 3, 4})));
  for (double v : out.h.value().data()) CHECK(v == 0.0);
  for (double v : out.c.value().data()) CHECK(v == 0.0);
}

TEST_CASE("lstm forget bias starts at one") {
  Rng rng(5);
  LstmCell cell(small(CellKind::lstm, 2, 3), "lstm", rng);
  for (double v : find(cell.parameters(), "forget.bias")->value.data()) CHECK(v == 1.0);
  for (double v : find(cell.parameters(), "input.bias")->value.data()) CHECK(v == 0.0);
}

TEST_CASE("saturated lstm gates carry the memory unchanged") {
  Rng rng(6);
  LstmCell cell(small(CellKind::lstm, 2, 3), "lstm", rng);
  find(cell.parameters(), "forget.bias")->value.fill(100.0);
  find(cell.parameters(), "input.bias")->value.fill(-100.0);
  Tape tape;
  CellState s;
  s.h = tape.constant(Tensor::matrix(1, 3, {0.1, 0.2, 0.3}));
  s.c = tape.constant(Tensor::matrix(1, 3, {0.5, -1.5, 2.0}));
  const CellState out = cell.step(tape, s, tape.constant(Tensor::matrix(1, 2, {0.3, -0.2})));
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(out.c.value()[i] - s.c.value()[i]) < 1e-8);
}

TEST_CASE("lstm and tkan hidden states lie strictly inside (-1, 1)") {
  for (CellKind kind : {CellKind::lstm, CellKind::tkan}) {
    Rng rng(7);
    auto cell = make_cell(small(kind, 3, 4), "c", rng);
    std::mt19937_64 data(8);
    for (auto* p : cell->parameters()) p->value = random_tensor(data, p->value.shape(), -2.0, 2.0);
    Tape tape;
    CellState s = cell->zero_state(tape, 3);
    for (int t = 0; t < 10; ++t) {
      s = cell->step(tape, s, tape.constant(random_tensor(data, Shape{3, 3}, -4.0, 4.0)));
      for (double v : s.h.value().data()) REQUIRE(std::abs(v) < 1.0);
    }
  }
}

TEST_CASE("cell gradients match central differences over three steps") {
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    CHECK(rollout_grad_error(CellKind::gru, seed) < 1e-4);
    CHECK(rollout_grad_error(CellKind::lstm, seed) < 1e-4);
    CHECK(rollout_grad_error(CellKind::tkan, seed) < 1e-4);
  }
}

TEST_CASE("b-spline basis is a partition of unity with local support") {
  ad::BsplineGrid grid;
  CHECK(grid.basis_count() == 8);
  const std::vector<double> knots = grid.knots();
  for (std::size_t i = 0; i + 1 < knots.size(); ++i) CHECK(knots[i] <= knots[i + 1]);
  for (int k = 0; k <= 200; ++k) {
    const double x = -1.0 + 2.0 * k / 200.0;
    const std::vector<double> b = ad::bspline_basis_values(grid, x);
    double total = 0.0;
    int nonzero = 0;
    for (double v : b) {
      total += v;
      nonzero += v != 0.0;
      CHECK(v >= 0.0);
    }
    CHECK(std::abs(total - 1.0) < 1e-12);
    CHECK(nonzero <= 4);
  }
  // Each function is nonzero on at most four knot intervals.
  for (std::size_t j = 0; j < grid.basis_count(); ++j) {
    int intervals = 0;
    for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
      const double mid = 0.5 * (knots[i] + knots[i + 1]);
      if (mid < grid.lo || mid > grid.hi) continue;
      intervals += ad::bspline_basis_values(grid, mid)[j] != 0.0;
    }
    CHECK(intervals <= 4);
  }
}

TEST_CASE("b-spline basis matches a de Boor recursion at grid midpoints") {
  ad::BsplineGrid grid;
  const std::vector<double> knots = grid.knots();
  for (std::size_t g = 0; g < grid.intervals; ++g) {
    const double x = grid.lo + (static_cast<double>(g) + 0.5) * grid.spacing();
    const std::vector<double> b = ad::bspline_basis_values(grid, x);
    for (std::size_t j = 0; j < grid.basis_count(); ++j) {
      CHECK(b[j] == doctest::Approx(de_boor(knots, j, grid.degree, x)).epsilon(1e-12));
    }
  }
}

TEST_CASE("kan layer with zero coefficients is zero") {
  Rng rng(20);
  KanModule kan(3, 2, ad::BsplineGrid{}, "kan", rng);
  kan.base().value.fill(0.0);
  kan.spline().value.fill(0.0);
  Tape tape;
  Var y = kan.forward(tape, tape.constant(Tensor::matrix(2, 3, {0.1, -0.5, 0.9, -1.0, 0.0, 1.0})));
  REQUIRE(y.shape() == Shape{2, 2});
  for (double v : y.value().data()) CHECK(v == 0.0);
}

TEST_CASE("kan layer matches its elementwise definition") {
  Rng rng(21);
  ad::BsplineGrid grid;
  KanModule kan(3, 2, grid, "kan", rng);
  const std::vector<double> x = {0.3, -0.45, 1.7};  // the last input clamps in the basis
  Tape tape;
  Var y = kan.forward(tape, tape.constant(Tensor::vector(x)));
  const std::size_t nb = grid.basis_count();
  for (std::size_t o = 0; o < 2; ++o) {
    double expect = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
      expect += kan.base().value.at(i, o) * x[i] / (1.0 + std::exp(-x[i]));
      const std::vector<double> b = ad::bspline_basis_values(grid, x[i]);
      for (std::size_t k = 0; k < nb; ++k) expect += kan.spline().value.at(i * nb + k, o) * b[k];
    }
    CHECK(y.value()[o] == doctest::Approx(expect).epsilon(1e-13));
  }
}

TEST_CASE("kan layer gradient matches central differences") {
  Rng rng(22);
  KanModule kan(3, 2, ad::BsplineGrid{}, "kan", rng);
  std::mt19937_64 data(23);
  Parameter x("x", random_tensor(data, Shape{4, 3}, -0.95, 0.95));
  std::vector<Parameter*> ps = kan.parameters();
  ps.push_back(&x);
  const double err = ad::grad_check([&](Tape& t) { return ad::sum(ad::tanh(kan.forward(t, t.param(x)))); }, ps);
  CHECK(err < 1e-4);
}

TEST_CASE("tkan with zero parameters has zero memories") {
  Rng rng(30);
  TkanCell cell(small(CellKind::tkan, 2, 3), "tkan", rng);
  zero_all(cell.parameters());
  Tape tape;
  const CellState out = cell.step(tape, cell.zero_state(tape, 2), tape.constant(Tensor::matrix(2, 2, {1, -2, 3, 4})));
  // The candidate is a sigmoid, so i = c~ = 0.5 and c = 0.25 rather than 0.
  for (double v : out.memory[0].value().data()) CHECK(v == 0.0);
  for (double v : out.memory[1].value().data()) CHECK(v == 0.0);
  for (double v : out.c.value().data()) CHECK(v == doctest::Approx(0.25));
}

TEST_CASE("single-sublayer tkan matches a hand evaluation") {
  CellConfig cfg;
  cfg.kind = CellKind::tkan;
  cfg.input = 1;
  cfg.hidden = 1;
  cfg.sublayers = 1;
  cfg.sub_dim = 1;
  Rng rng(31);
  TkanCell cell(cfg, "tkan", rng);
  auto ps = cell.parameters();
  zero_all(ps);
  find(ps, "sub0.from_input")->value.fill(1.0);
  find(ps, "sub0.kan.base")->value.fill(1.0);
  find(ps, "output.weight")->value.fill(1.0);
  find(ps, "sub0.memory_from_out")->value.fill(1.0);

  Tape tape;
  const CellState out = cell.step(tape, cell.zero_state(tape, 1), tape.constant(Tensor::matrix(1, 1, {0.5})));
  const double silu = 0.5 / (1.0 + std::exp(-0.5));
  const double o = 1.0 / (1.0 + std::exp(-silu));
  const double c = 0.5 * 0.5;  // f * 0 + i * sigmoid(0)
  CHECK(out.c.value()[0] == doctest::Approx(c).epsilon(1e-15));
  CHECK(out.h.value()[0] == doctest::Approx(o * std::tanh(c)).epsilon(1e-15));
  CHECK(out.memory[0].value()[0] == doctest::Approx(silu).epsilon(1e-15));
}

TEST_CASE("tkan output gate reads the concatenated sublayer outputs") {
  Rng rng(32);
  CellConfig cfg = small(CellKind::tkan, 2, 3);
  cfg.sublayers = 3;
  cfg.sub_dim = 10;
  TkanCell cell(cfg, "tkan", rng);
  CHECK(find(cell.parameters(), "output.weight")->value.shape() == Shape{30, 3});
  CHECK(find(cell.parameters(), "sub2.kan.spline")->value.shape() == Shape{80, 10});
}

TEST_CASE("stack of one step equals composing two cell steps") {
  for (CellKind kind : {CellKind::gru, CellKind::lstm, CellKind::tkan}) {
    Rng rng(40);
    Stack stack(kind, 3, 4, 2, small(kind, 3, 4), "s", rng);
    std::mt19937_64 data(41);
    const Tensor x = random_tensor(data, Shape{2, 3});
    Tape tape;
    const std::vector<Var> hs = stack.run(tape, {tape.constant(x)});
    Tape t2;
    const CellState a = stack.cell(0).step(t2, stack.cell(0).zero_state(t2, 2), t2.constant(x));
    const CellState b = stack.cell(1).step(t2, stack.cell(1).zero_state(t2, 2), a.h);
    CHECK(msrnn::testing::max_abs_diff(hs[0].value().data(), b.h.value().data()) == 0.0);
  }
}

TEST_CASE("stack run equals a carried-state loop") {
  Rng rng(42);
  Stack stack(CellKind::lstm, 3, 5, 2, small(CellKind::lstm, 3, 5), "s", rng);
  std::mt19937_64 data(43);
  std::vector<Tensor> xs;
  for (int t = 0; t < 6; ++t) xs.push_back(random_tensor(data, Shape{3, 3}));
  Tape tape;
  std::vector<Var> inputs;
  for (const auto& x : xs) inputs.push_back(tape.constant(x));
  const std::vector<Var> hs = stack.run(tape, inputs);

  Tape t2;
  CellState s0 = stack.cell(0).zero_state(t2, 3);
  CellState s1 = stack.cell(1).zero_state(t2, 3);
  for (std::size_t t = 0; t < xs.size(); ++t) {
    s0 = stack.cell(0).step(t2, s0, t2.constant(xs[t]));
    s1 = stack.cell(1).step(t2, s1, s0.h);
    CHECK(msrnn::testing::max_abs_diff(hs[t].value().data(), s1.h.value().data()) == 0.0);
  }
}

TEST_CASE("zero-parameter lstm stack outputs zeros") {
  Rng rng(44);
  Stack stack(CellKind::lstm, 2, 3, 2, small(CellKind::lstm, 2, 3), "s", rng);
  zero_all(stack.parameters());
  Tape tape;
  std::mt19937_64 data(45);
  const std::vector<Var> hs = stack.run(tape, {tape.constant(random_tensor(data, Shape{1, 2})),
                                               tape.constant(random_tensor(data, Shape{1, 2}))});
  for (double v : hs.back().value().data()) CHECK(v == 0.0);
}

TEST_CASE("initialization and forward values are deterministic per seed") {
  for (CellKind kind : {CellKind::gru, CellKind::lstm, CellKind::tkan}) {
    Rng r1(99), r2(99);
    Stack a(kind, 3, 4, 2, small(kind, 3, 4), "s", r1);
    Stack b(kind, 3, 4, 2, small(kind, 3, 4), "s", r2);
    auto pa = a.parameters();
    auto pb = b.parameters();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
      CHECK(pa[i]->name == pb[i]->name);
      CHECK(pa[i]->value.storage() == pb[i]->value.storage());
    }
    std::mt19937_64 data(5);
    const Tensor x = random_tensor(data, Shape{2, 3});
    Tape ta, tb;
    CHECK(a.run(ta, {ta.constant(x)})[0].value().storage() == b.run(tb, {tb.constant(x)})[0].value().storage());
  }
}

TEST_CASE("glorot weights respect their bound") {
  Rng rng(50);
  const Tensor w = glorot_uniform(10, 20, rng);
  const double limit = std::sqrt(6.0 / 30.0);
  for (double v : w.data()) CHECK(std::abs(v) <= limit);
}

TEST_CASE("cell config json round trip and key checks") {
  CellConfig c = small(CellKind::tkan, 3, 7);
  const CellConfig back = cell_config_from_json(to_json(c));
  CHECK(back.kind == CellKind::tkan);
  CHECK(back.hidden == 7);
  CHECK(back.sub_dim == 3);
  CHECK_THROWS_AS(cell_config_from_json(nlohmann::json{{"kind", "gru"}, {"hiden", 3}}), ValidationError);
  CHECK_THROWS_AS(cell_config_from_json(nlohmann::json{{"kind", "rnn"}}), ValidationError);
  CHECK_THROWS_AS(cell_config_from_json(nlohmann::json{{"kind", "gru"}, {"hidden", 0}}), ValidationError);
}

TEST_CASE("shape mismatches are reported") {
  Rng rng(60);
  LstmCell cell(small(CellKind::lstm, 2, 3), "lstm", rng);
  Tape tape;
  CHECK_THROWS_AS(cell.step(tape, cell.zero_state(tape, 1), tape.constant(Tensor::matrix(1, 3, {1, 2, 3}))),
                  ShapeError);
  KanModule kan(3, 2, ad::BsplineGrid{}, "kan", rng);
  Tape t2;
  CHECK_THROWS_AS(kan.forward(t2, t2.constant(Tensor::vector({1, 2}))), ShapeError);
}
