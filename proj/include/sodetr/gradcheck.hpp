#pragma once

#include "sodetr/tensor.hpp"

#include <functional>

namespace sodetr {

/// Central-difference check of an analytic gradient.
///
/// Returns max_i |a_i - n_i| / max(|a_i|, |n_i|, 1e-8), where a is the
/// reverse-mode gradient of f at x and n_i = (f(x + h e_i) - f(x - h e_i)) / 2h.
double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h);

/// Same check against a leaf already captured inside `loss` (e.g. a model
/// parameter). The leaf's values are perturbed in place and restored.
double finite_diff_check(const std::function<Tensor()>& loss, Tensor param, double h);

}  // namespace sodetr
