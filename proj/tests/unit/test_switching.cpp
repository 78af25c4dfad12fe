#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "msrnn/autodiff/grad_check.hpp"
#include "msrnn/error.hpp"
#include "msrnn/switching/model.hpp"
#include "test_util.hpp"

using namespace msrnn;
using namespace msrnn::sw;
using ad::Parameter;
using ad::Shape;
using ad::Tape;
using ad::Tensor;
using ad::Var;
using msrnn::testing::random_tensor;

namespace {

SwitchingConfig tiny(nn::CellKind kind, std::size_t m = 2, std::size_t units = 4) {
  SwitchingConfig c;
  c.regimes = m;
  c.kind = kind;
  c.units = units;
  c.layers = 2;
  c.features = 3;
  c.sublayers = 2;
  c.sub_dim = 3;
  return c;
}

Parameter* named(SwitchingModel& model, const std::string& name) {
  for (Parameter* p : model.parameters()) {
    if (p->name == name) return p;
  }
  FAIL("missing parameter " << name);
  return nullptr;
}

void check_distribution_rows(std::span<const double> v, std::size_t width, double tol) {
  for (std::size_t r = 0; r < v.size() / width; ++r) {
    double s = 0.0;
    for (std::size_t k = 0; k < width; ++k) {
      const double x = v[r * width + k];
      REQUIRE(x >= 0.0);
      REQUIRE(x <= 1.0);
      s += x;
    }
    REQUIRE(std::abs(s - 1.0) <= tol);
  }
}

Tensor random_transition(std::mt19937_64& rng, std::size_t batch, std::size_t m) {
  Tensor p = random_tensor(rng, Shape{batch, m, m}, 0.01, 1.0);
  for (std::size_t r = 0; r < batch * m; ++r) {
    double s = 0.0;
    for (std::size_t k = 0; k < m; ++k) s += p[r * m + k];
    for (std::size_t k = 0; k < m; ++k) p[r * m + k] /= s;
  }
  return p;
}

}  // namespace

TEST_CASE("zero Z leaves a uniform transition matrix uniform") {
  for (std::size_t m : {2u, 3u, 4u}) {
    Tape tape;
    const Var p = update_transition(tape, tape.constant(Tensor(Shape{1, m, m}, 1.0 / static_cast<double>(m))),
                                    tape.constant(Tensor(Shape{1, m * (m - 1)})), m, false);
    for (double v : p.value().data()) CHECK(v == doctest::Approx(1.0 / static_cast<double>(m)).epsilon(1e-15));
  }
}

TEST_CASE("update_transition hand case") {
  Tape tape;
  const Var p = update_transition(
      tape, tape.constant(Tensor(Shape{1, 2, 2}, std::vector<double>{0.9, 0.1, 0.2, 0.8})),
      tape.constant(Tensor(Shape{1, 2})), 2, false);
  const std::vector<double> expect = {0.68997, 0.31003, 0.35434, 0.64566};
  for (std::size_t i = 0; i < 4; ++i) CHECK(p.value()[i] == doctest::Approx(expect[i]).epsilon(1e-5));
}

TEST_CASE("update_transition places multipliers off the diagonal row-major") {
  // m = 3, P_prev = 1 everywhere on row 0 so the row is softmax(rho row 0).
  Tape tape;
  Tensor prev(Shape{1, 3, 3}, 1.0);
  const std::vector<double> z = {0.5, -0.25, 0.1, 0.2, 0.3, 0.4};
  const Var p = update_transition(tape, tape.constant(prev), tape.constant(Tensor(Shape{1, 6}, z)), 3, false);
  const double r0[3] = {1.0, std::exp(0.5), std::exp(-0.25)};
  const double r2[3] = {std::exp(0.3), std::exp(0.4), 1.0};
  const double s0 = std::exp(r0[0]) + std::exp(r0[1]) + std::exp(r0[2]);
  const double s2 = std::exp(r2[0]) + std::exp(r2[1]) + std::exp(r2[2]);
  for (int j = 0; j < 3; ++j) {
    CHECK(p.value()[j] == doctest::Approx(std::exp(r0[j]) / s0).epsilon(1e-14));
    CHECK(p.value()[6 + j] == doctest::Approx(std::exp(r2[j]) / s2).epsilon(1e-14));
  }
}

TEST_CASE("update_transition clamps extreme logits and keeps rows stochastic") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    for (bool full : {false, true}) {
      const std::size_t m = 2 + trial % 3;
      Tape tape;
      const std::size_t d = full ? m * m : m * (m - 1);
      const Var p = update_transition(tape, tape.constant(random_transition(rng, 4, m)),
                                      tape.constant(random_tensor(rng, Shape{4, d}, -80.0, 80.0)), m, full);
      REQUIRE(p.value().all_finite());
      check_distribution_rows(p.value().data(), m, 1e-12);
    }
  }
  Tape tape;
  CHECK_THROWS_AS(update_transition(tape, tape.constant(Tensor(Shape{1, 2, 2})), tape.constant(Tensor(Shape{1, 3})),
                                    2, false),
                  ShapeError);
}

TEST_CASE("predict_pi examples") {
  Tape tape;
  const Var ident = tape.constant(Tensor(Shape{1, 2, 2}, std::vector<double>{1, 0, 0, 1}));
  const Var prev = tape.constant(Tensor::matrix(1, 2, {0.3, 0.7}));
  CHECK(predict_pi(ident, prev).value().storage() == prev.value().storage());

  const Var p = tape.constant(Tensor(Shape{1, 2, 2}, std::vector<double>{0.7, 0.3, 0.4, 0.6}));
  const Var out = predict_pi(p, tape.constant(Tensor::matrix(1, 2, {1.0, 0.0})));
  CHECK(out.value()[0] == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(out.value()[1] == doctest::Approx(0.3).epsilon(1e-15));

  std::mt19937_64 rng(5);
  const Tensor pr = random_transition(rng, 3, 4);
  Tensor pi = random_tensor(rng, Shape{3, 4}, 0.0, 1.0);
  const Var got = predict_pi(tape.constant(pr), tape.constant(pi));
  for (std::size_t b = 0; b < 3; ++b) {
    for (std::size_t k = 0; k < 4; ++k) {
      double s = 0.0;
      for (std::size_t l = 0; l < 4; ++l) s += pr[(b * 4 + l) * 4 + k] * pi.at(b, l);
      CHECK(got.value().at(b, k) == doctest::Approx(s).epsilon(1e-14));
    }
  }
}

TEST_CASE("filter_update examples") {
  Tape tape;
  const Var pred = tape.constant(Tensor::matrix(1, 2, {0.3, 0.7}));
  const std::vector<double> obs = {0.4};
  const Var same = filter_update(tape, pred, tape.constant(Tensor::matrix(1, 2, {1.0, 1.0})), obs,
                                 std::vector<double>{0.5, 0.5});
  CHECK(same.value()[0] == doctest::Approx(0.3).epsilon(1e-14));

  const Var half = tape.constant(Tensor::matrix(1, 2, {0.5, 0.5}));
  const Var shifted = filter_update(tape, half, tape.constant(Tensor::matrix(1, 2, {0.4, 3.0})), obs,
                                    std::vector<double>{1.0, 1.0});
  CHECK(shifted.value()[0] > 0.5);

  const Var hand = filter_update(tape, half, tape.constant(Tensor::matrix(1, 2, {0.0, 1.0})), std::vector<double>{0.0},
                                 std::vector<double>{1.0, 1.0});
  const double a = 1.0, b = std::exp(-0.5);
  CHECK(hand.value()[0] == doctest::Approx(a / (a + b)).epsilon(1e-14));
  CHECK(hand.value()[0] == doctest::Approx(0.62246).epsilon(1e-5));
  CHECK(hand.value()[1] == doctest::Approx(0.37754).epsilon(1e-5));
}

TEST_CASE("filter_update survives far-off predictions and tiny deviations") {
  Tape tape;
  const Var half = tape.constant(Tensor::matrix(1, 2, {0.5, 0.5}));
  const Var out = filter_update(tape, half, tape.constant(Tensor::matrix(1, 2, {1e4, -1e4})), std::vector<double>{0.0},
                                std::vector<double>{1e-6, 1e-6});
  REQUIRE(out.value().all_finite());
  check_distribution_rows(out.value().data(), 2, 1e-12);
  CHECK_THROWS_AS(filter_update(tape, half, half, std::vector<double>{0.0}, std::vector<double>{0.0, 1.0}),
                  DomainError);
}

TEST_CASE("predict_regime picks the first maximum") {
  CHECK(predict_regime(std::vector<double>{0.3, 0.7}) == 1);
  CHECK(predict_regime(std::vector<double>{0.5, 0.5}) == 0);
  std::mt19937_64 rng(9);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> v(4);
    for (double& x : v) x = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    std::vector<double> w = v;
    for (double& x : w) x = std::exp(3.0 * x) + 2.0;
    CHECK(predict_regime(v) == predict_regime(w));
  }
}

TEST_CASE("running stats match a two-pass computation") {
  RunningStats s;
  CHECK(s.sigma() == 1.0);
  s.push(2.0);
  CHECK(s.sigma() == 1.0);
  std::vector<double> xs = {2.0, -1.0, 0.5, 3.25, 0.0, 1.5};
  for (std::size_t i = 1; i < xs.size(); ++i) s.push(xs[i]);
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / 6.0;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  CHECK(s.sigma() == doctest::Approx(std::sqrt(ss / 6.0)).epsilon(1e-14));
  RunningStats flat;
  for (int i = 0; i < 5; ++i) flat.push(0.25);
  CHECK(flat.sigma() == RunningStats::kFloor);
}

TEST_CASE("regime heads are affine and regime-local") {
  SwitchingModel model(tiny(nn::CellKind::gru), 1);
  std::mt19937_64 rng(2);
  Tape tape;
  const Tensor h1 = random_tensor(rng, Shape{2, 4});
  const Tensor h2 = random_tensor(rng, Shape{2, 4});
  const Var y = model.regime_heads(tape, {tape.constant(h1), tape.constant(h2)});
  const Parameter& w1 = *named(model, "head1.weight");
  for (std::size_t b = 0; b < 2; ++b) {
    double dot = 0.0;
    for (std::size_t i = 0; i < 4; ++i) dot += w1.value[i] * h1.at(b, i);
    CHECK(y.value().at(b, 0) == doctest::Approx(dot).epsilon(1e-14));
  }
  Tape t2;
  const Var y2 = model.regime_heads(t2, {t2.constant(h1), t2.constant(random_tensor(rng, Shape{2, 4}))});
  CHECK(y2.value().at(0, 0) == y.value().at(0, 0));
  CHECK(y2.value().at(1, 0) == y.value().at(1, 0));

  named(model, "head1.weight")->value.fill(0.0);
  named(model, "head2.weight")->value.fill(0.0);
  Tape t3;
  for (double v : model.regime_heads(t3, {t3.constant(h1), t3.constant(h2)}).value().data()) CHECK(v == 0.0);
}

TEST_CASE("zero encoder yields Z equal to the bias") {
  SwitchingModel model(tiny(nn::CellKind::lstm), 2);
  for (Parameter* p : model.encoder().parameters()) p->value.fill(0.0);
  named(model, "transition.bias")->value = Tensor::vector({0.3, -0.6});
  Tape tape;
  std::mt19937_64 rng(3);
  const Var z = model.encode_covariates(tape, {tape.constant(random_tensor(rng, Shape{1, 2})),
                                               tape.constant(random_tensor(rng, Shape{1, 2}))});
  CHECK(z.value()[0] == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(z.value()[1] == doctest::Approx(-0.6).epsilon(1e-15));
}

TEST_CASE("encoder output matches affine(relu(stack))") {
  SwitchingModel model(tiny(nn::CellKind::tkan), 4);
  std::mt19937_64 rng(4);
  std::vector<Tensor> xs;
  for (int t = 0; t < 3; ++t) xs.push_back(random_tensor(rng, Shape{2, 2}));
  Tape tape;
  std::vector<Var> in;
  for (const auto& x : xs) in.push_back(tape.constant(x));
  const Var z = model.encode_covariates(tape, in);

  Tape t2;
  std::vector<Var> in2;
  for (const auto& x : xs) in2.push_back(t2.constant(x));
  const Var top = model.encoder().run(t2, in2).back();
  const Tensor& h = top.value();
  const Tensor& w = named(model, "transition.weight")->value;
  const Tensor& b = named(model, "transition.bias")->value;
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t c = 0; c < 2; ++c) {
      double s = b[c];
      for (std::size_t i = 0; i < 4; ++i) s += std::max(h.at(r, i), 0.0) * w.at(i, c);
      CHECK(z.value().at(r, c) == doctest::Approx(s).epsilon(1e-14));
    }
  }
}

TEST_CASE("transition path ignores the return column") {
  SwitchingModel model(tiny(nn::CellKind::lstm), 5);
  std::mt19937_64 rng(5);
  Tensor w = random_tensor(rng, Shape{1, 4, 3});
  std::vector<StepTrace> a, b;
  Tape t1;
  model.forward(t1, w, &a);
  for (std::size_t t = 0; t < 4; ++t) w[t * 3] += 0.75;
  Tape t2;
  model.forward(t2, w, &b);
  REQUIRE(a.size() == b.size());
  for (std::size_t t = 0; t < a.size(); ++t) CHECK(a[t].transition == b[t].transition);
}

TEST_CASE("identical regimes keep the regime distribution uniform") {
  SwitchingConfig cfg = tiny(nn::CellKind::gru, 3);
  SwitchingModel model(cfg, 6);
  auto ps = model.parameters();
  auto copy_prefix = [&](const std::string& from, const std::string& to) {
    for (Parameter* dst : ps) {
      if (dst->name.rfind(to, 0) != 0) continue;
      const std::string src_name = from + dst->name.substr(to.size());
      dst->value = named(model, src_name)->value;
    }
  };
  copy_prefix("regime1", "regime2");
  copy_prefix("regime1", "regime3");
  copy_prefix("head1", "head2");
  copy_prefix("head1", "head3");
  Tensor& wz = named(model, "transition.weight")->value;
  for (std::size_t i = 0; i < wz.shape()[0]; ++i) {
    for (std::size_t c = 1; c < wz.shape()[1]; ++c) wz.at(i, c) = wz.at(i, 0);
  }
  named(model, "transition.bias")->value.fill(0.4);

  std::mt19937_64 rng(7);
  std::vector<StepTrace> trace;
  Tape tape;
  const Var out = model.forward(tape, random_tensor(rng, Shape{1, 5, 3}), &trace);
  for (double v : out.value().data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-13));
  for (const auto& st : trace) {
    for (double v : st.pi_filtered) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-13));
  }
}

TEST_CASE("single-step window equals the staged composition") {
  SwitchingModel model(tiny(nn::CellKind::lstm), 8);
  std::mt19937_64 rng(8);
  const Tensor w = random_tensor(rng, Shape{1, 1, 3});
  std::vector<StepTrace> trace;
  Tape tape;
  const Var out = model.forward(tape, w, &trace);

  // Step 0 runs on zero states: yhat = head biases, Z = transition bias.
  Tape t2;
  const Tensor& bz = named(model, "transition.bias")->value;
  Var p = t2.constant(Tensor(Shape{1, 2, 2}, 0.5));
  p = update_transition(t2, p, t2.constant(Tensor(Shape{1, 2}, bz.storage())), 2, false);
  const Var pred = predict_pi(p, t2.constant(Tensor(Shape{1, 2}, 0.5)));
  const Var yhat = t2.constant(Tensor::matrix(1, 2, {named(model, "head1.bias")->value[0],
                                                       named(model, "head2.bias")->value[0]}));
  const Var filt = filter_update(t2, pred, yhat, std::vector<double>{w[0]}, std::vector<double>{1.0, 1.0});
  CHECK(trace[0].pi_filtered[0] == doctest::Approx(filt.value()[0]).epsilon(1e-14));

  // Then the encoder consumes the step and a final transition predicts ahead.
  const Var z = model.encode_covariates(t2, {t2.constant(Tensor::matrix(1, 2, {w[1], w[2]}))});
  const Var p1 = update_transition(t2, p, z, 2, false);
  const Var ahead = predict_pi(p1, filt);
  CHECK(out.value()[0] == doctest::Approx(ahead.value()[0]).epsilon(1e-14));
  CHECK(out.value()[1] == doctest::Approx(ahead.value()[1]).epsilon(1e-14));
}

TEST_CASE("probability invariants over random forward passes") {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 60; ++trial) {
    const auto kind = static_cast<nn::CellKind>(trial % 3);
    SwitchingConfig cfg = tiny(kind, 2 + trial % 2, 3);
    cfg.full_rho = trial % 4 == 1;
    SwitchingModel model(cfg, static_cast<std::uint64_t>(trial));
    for (Parameter* p : model.parameters()) p->value = random_tensor(rng, p->value.shape(), -2.0, 2.0);
    std::vector<RunningStats> st(cfg.regimes);
    for (auto& s : st) {
      for (int i = 0; i < 5; ++i) s.push(std::normal_distribution<double>(0.0, 0.5)(rng));
    }
    model.set_stats(st);
    std::vector<StepTrace> trace;
    Tape tape;
    const Var out = model.forward(tape, random_tensor(rng, Shape{1, 6, 3}, -3.0, 3.0), &trace);
    check_distribution_rows(out.value().data(), cfg.regimes, 1e-10);
    for (const auto& s : trace) {
      check_distribution_rows(s.transition, cfg.regimes, 1e-10);
      check_distribution_rows(s.pi_pred, cfg.regimes, 1e-10);
      check_distribution_rows(s.pi_filtered, cfg.regimes, 1e-10);
    }
  }
}

TEST_CASE("end-to-end gradient of the predictive cross-entropy") {
  for (nn::CellKind kind : {nn::CellKind::gru, nn::CellKind::lstm, nn::CellKind::tkan}) {
    SwitchingModel model(tiny(kind, 2, 4), 11);
    std::vector<RunningStats> st(2);
    st[0].push(0.1); st[0].push(0.6);
    st[1].push(-0.3); st[1].push(0.9); st[1].push(0.2);
    model.set_stats(st);
    std::mt19937_64 rng(12);
    const Tensor w = random_tensor(rng, Shape{2, 4, 3});
    const Tensor onehot = Tensor::matrix(2, 2, {1.0, 0.0, 0.0, 1.0});
    const double err = ad::grad_check(
        [&](Tape& tape) {
          const Var p = model.forward(tape, w);
          return ad::scale(ad::sum(tape.constant(onehot) * ad::log(p, 1e-12)), -0.5);
        },
        model.parameters());
    CHECK(err < 1e-4);
  }
}

TEST_CASE("relabelling regimes permutes the output") {
  const std::vector<std::size_t> perm = {2, 0, 1};  // new regime k is old regime perm[k]
  SwitchingConfig cfg = tiny(nn::CellKind::lstm, 3, 4);
  SwitchingModel a(cfg, 13), b(cfg, 99);
  named(a, "transition.bias")->value = Tensor::vector({0.3, -0.2, 0.5, 0.1, -0.4, 0.25});
  // Everything shared except per-regime blocks, which are permuted.
  for (Parameter* p : b.parameters()) {
    if (p->name.rfind("encoder", 0) == 0 || p->name == "transition.bias" || p->name == "transition.weight") {
      p->value = named(a, p->name)->value;
    }
  }
  for (std::size_t k = 0; k < 3; ++k) {
    auto src = a.regime_stack(perm[k]).parameters();
    auto dst = b.regime_stack(k).parameters();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i]->value = src[i]->value;
    named(b, "head" + std::to_string(k + 1) + ".weight")->value = named(a, "head" + std::to_string(perm[k] + 1) + ".weight")->value;
    named(b, "head" + std::to_string(k + 1) + ".bias")->value = named(a, "head" + std::to_string(perm[k] + 1) + ".bias")->value;
  }
  auto col = [](std::size_t i, std::size_t j) { return i * 2 + (j < i ? j : j - 1); };
  const Tensor& wa = named(a, "transition.weight")->value;
  const Tensor& ba = named(a, "transition.bias")->value;
  Tensor& wb = named(b, "transition.weight")->value;
  Tensor& bb = named(b, "transition.bias")->value;
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      if (i == j) continue;
      const std::size_t cn = col(i, j), co = col(perm[i], perm[j]);
      bb[cn] = ba[co];
      for (std::size_t r = 0; r < wa.shape()[0]; ++r) wb.at(r, cn) = wa.at(r, co);
    }
  }
  std::vector<RunningStats> sa(3);
  for (std::size_t k = 0; k < 3; ++k) {
    for (int i = 0; i <= static_cast<int>(k) + 2; ++i) sa[k].push(0.3 * i * (k + 1.0));
  }
  std::vector<RunningStats> sb(3);
  for (std::size_t k = 0; k < 3; ++k) sb[k] = sa[perm[k]];
  a.set_stats(sa);
  b.set_stats(sb);

  std::mt19937_64 rng(14);
  const Tensor w = random_tensor(rng, Shape{3, 5, 3});
  Tape ta, tb;
  const Var oa = a.forward(ta, w);
  const Var ob = b.forward(tb, w);
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(ob.value().at(r, k) - oa.value().at(r, perm[k])) < 1e-9);
  }
}

TEST_CASE("disabling the switching mechanism gives a uniform output") {
  SwitchingConfig cfg = tiny(nn::CellKind::gru, 2);
  cfg.disable_switching = true;
  SwitchingModel model(cfg, 15);
  std::mt19937_64 rng(15);
  Tape tape;
  const Var out = model.forward(tape, random_tensor(rng, Shape{4, 5, 3}));
  for (double v : out.value().data()) CHECK(v == 0.5);
}

TEST_CASE("commit feeds the last in-window predictions to the deviation stats") {
  SwitchingModel model(tiny(nn::CellKind::gru, 2), 16);
  std::mt19937_64 rng(16);
  Tape tape;
  model.forward(tape, random_tensor(rng, Shape{3, 4, 3}));
  CHECK(model.stats()[0].count == 0.0);
  model.commit();
  CHECK(model.stats()[0].count == 3.0);
  CHECK(model.stats()[1].count == 3.0);
  CHECK(model.sigma()[0] != 1.0);
  model.reset_stats();
  CHECK(model.sigma()[0] == 1.0);
}

TEST_CASE("models are deterministic per seed") {
  SwitchingModel a(tiny(nn::CellKind::tkan), 17), b(tiny(nn::CellKind::tkan), 17);
  std::mt19937_64 rng(18);
  const Tensor w = random_tensor(rng, Shape{2, 3, 3});
  Tape ta, tb;
  CHECK(a.forward(ta, w).value().storage() == b.forward(tb, w).value().storage());
}

TEST_CASE("switching config json and validation") {
  SwitchingConfig c = tiny(nn::CellKind::tkan, 3, 7);
  c.full_rho = true;
  const SwitchingConfig back = switching_config_from_json(to_json(c));
  CHECK(back.regimes == 3);
  CHECK(back.kind == nn::CellKind::tkan);
  CHECK(back.full_rho);
  CHECK(back.z_dim() == 9);
  CHECK_THROWS_AS(switching_config_from_json(nlohmann::json{{"regimes", 1}}), ValidationError);
  CHECK_THROWS_AS(switching_config_from_json(nlohmann::json{{"regims", 2}}), ValidationError);
  SwitchingModel model(tiny(nn::CellKind::gru), 1);
  Tape tape;
  CHECK_THROWS_AS(model.forward(tape, Tensor(Shape{1, 4, 2})), ShapeError);
}

TEST_CASE("trace csv has one row per step") {
  SwitchingModel model(tiny(nn::CellKind::gru), 19);
  std::mt19937_64 rng(19);
  std::vector<StepTrace> trace;
  Tape tape;
  model.forward(tape, random_tensor(rng, Shape{1, 4, 3}), &trace);
  const std::string csv = trace_csv(trace, 2);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
  CHECK(csv.rfind("step,p_1_1,p_1_2,p_2_1,p_2_2,pi_pred_1", 0) == 0);
}
