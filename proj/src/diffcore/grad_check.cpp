#include "flowgnn/diffcore/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "flowgnn/errors.hpp"

namespace flowgnn::diffcore {

namespace {

double eval_scalar(const TensorFn& f, const std::vector<Tensor>& inputs) {
  NoGradGuard guard;
  Tensor out = f(inputs);
  return out.value();
}

}  // namespace

double grad_check(const TensorFn& f, std::vector<Tensor> inputs, double eps) {
  if (inputs.empty()) throw UsageError("grad_check: no inputs");
  if (eps <= 0.0) throw UsageError("grad_check: eps must be positive");

  const double first = eval_scalar(f, inputs);
  const double second = eval_scalar(f, inputs);
  if (std::memcmp(&first, &second, sizeof(double)) != 0)
    throw UsageError(
        "grad_check: function is not deterministic across evaluations");

  for (Tensor& t : inputs)
    if (t.requires_grad()) t.zero_grad();
  Tensor loss = f(inputs);
  backward(loss);

  double worst = 0.0;
  for (Tensor& t : inputs) {
    if (!t.requires_grad()) continue;
    if (!t.has_grad())
      throw UsageError("grad_check: input never received a gradient");
    std::vector<double>& data = t.mutable_data();
    const std::vector<double> analytic = t.grad();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + eps;
      const double up = eval_scalar(f, inputs);
      data[i] = saved - eps;
      const double down = eval_scalar(f, inputs);
      data[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double err =
          std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace flowgnn::diffcore
