#pragma once

#include <functional>
#include <vector>

#include "flowgnn/diffcore/tensor.hpp"

namespace flowgnn::diffcore {

using TensorFn = std::function<Tensor(const std::vector<Tensor>&)>;

// Compares the tape gradient of a scalar-valued function against central
// finite differences over every element of every grad-tracked input.
// Returns the worst relative error |analytic - numeric| / max(1, |numeric|).
// The function must be deterministic; two evaluations that disagree bitwise
// raise UsageError before any comparison happens.
double grad_check(const TensorFn& f, std::vector<Tensor> inputs,
                  double eps = 1e-5);

}  // namespace flowgnn::diffcore
