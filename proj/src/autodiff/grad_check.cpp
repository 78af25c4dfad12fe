#include "msrnn/autodiff/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "msrnn/error.hpp"

namespace msrnn::ad {

namespace {

double evaluate(const LossFn& f) {
  Tape tape;
  const double v = f(tape).item();
  if (!std::isfinite(v)) throw NumericalError("grad_check: loss evaluated to a non-finite value");
  return v;
}

}  // namespace

double grad_check(const LossFn& f, std::span<Parameter* const> params, double step) {
  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    Var loss = f(tape);
    if (!std::isfinite(loss.item())) {
      throw NumericalError("grad_check: loss evaluated to a non-finite value");
    }
    tape.backward(loss);
  }

  double worst = 0.0;
  for (Parameter* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + step;
      const double up = evaluate(f);
      p->value[i] = saved - step;
      const double down = evaluate(f);
      p->value[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double analytic = p->grad[i];
      const double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
      worst = std::max(worst, std::abs(analytic - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace msrnn::ad
