#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "covidmis/rng.hpp"
#include "covidmis/tensor.hpp"

namespace covidmis::testing {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

/// |a - n| / max(|a|, |n|, floor). The floor keeps gradients that are zero
/// up to rounding from producing huge ratios.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Compares backward() against central differences for every element of
/// every parameter. `loss` must build a one-element result on the tape it is
/// given and be a pure function of the parameter values.
inline GradCheckResult grad_check(const std::vector<tensor::Parameter*>& params,
                                  const std::function<tensor::Var(tensor::Tape&)>& loss, double h = 1e-5) {
  for (auto* p : params) p->zero_grad();
  {
    tensor::Tape tape;
    tape.backward(loss(tape));
  }
  std::vector<tensor::Tensor> analytic;
  for (auto* p : params) analytic.push_back(p->grad);

  auto evaluate = [&] {
    tensor::Tape tape(false);
    return loss(tape).value().item();
  };

  GradCheckResult result;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& value = params[k]->value;
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double saved = value[i];
      value[i] = saved + h;
      const double plus = evaluate();
      value[i] = saved - h;
      const double minus = evaluate();
      value[i] = saved;
      const double numeric = (plus - minus) / (2.0 * h);
      result.max_rel_error = std::max(result.max_rel_error, relative_error(analytic[k][i], numeric));
      ++result.checked;
    }
  }
  return result;
}

/// Random tensor with entries uniform in [lo, hi).
inline tensor::Tensor random_tensor(tensor::Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  tensor::Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

/// sum(x * w) with fixed random weights, so every output element matters.
inline tensor::Var weighted_sum(tensor::Var x, const tensor::Tensor& weights) {
  return tensor::sum(tensor::mul(x, x.tape().constant(weights)));
}

}  // namespace covidmis::testing
