#pragma once

#include <functional>
#include <span>

#include "msrnn/autodiff/tape.hpp"

namespace msrnn::ad {

/// Builds a scalar loss on the supplied (fresh) tape from bound parameters.
using LossFn = std::function<Var(Tape&)>;

/// Compares reverse-mode gradients against central differences over every
/// coordinate of `params` and returns
///   max |analytic - numeric| / max(1, |analytic|, |numeric|).
/// Parameter gradients are zeroed first and hold the analytic gradient on
/// return; parameter values are restored exactly.
double grad_check(const LossFn& f, std::span<Parameter* const> params, double step = 1e-5);

}  // namespace msrnn::ad
