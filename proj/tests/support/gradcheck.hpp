#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "anesi/ndauto/params.hpp"
#include "anesi/ndauto/tape.hpp"

namespace anesi::testutil {

// Worst relative error between analytic and central finite-difference
// gradients over every entry of every parameter in `params`.
struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
};

inline double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / scale;
}

// `loss` builds a scalar on the given tape from the given parameters.
using LossBuilder = std::function<nd::Var(nd::Tape&, const nd::ParamStore&)>;

inline GradCheckResult check_param_gradients(nd::ParamStore params, const LossBuilder& loss,
                                             double h = 1e-5) {
  nd::Tape tape;
  nd::Var out = loss(tape, params);
  tape.backward(out);
  const nd::Gradients grads = tape.param_gradients();

  auto eval = [&](const nd::ParamStore& p) {
    nd::Tape t;
    return loss(t, p).value().item();
  };

  GradCheckResult result;
  for (const auto& [name, grad] : grads) {
    for (std::size_t i = 0; i < grad.size(); ++i) {
      nd::ParamStore plus = params, minus = params;
      plus.value(name)[i] += h;
      minus.value(name)[i] -= h;
      const double numeric = (eval(plus) - eval(minus)) / (2.0 * h);
      const double err = relative_error(grad[i], numeric);
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_param = name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return result;
}

}  // namespace anesi::testutil
