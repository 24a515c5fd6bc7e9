#pragma once

#include <cstddef>
#include <vector>

#include "flowgnn/diffcore/tensor.hpp"

namespace flowgnn::trainer {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Global gradient-norm ceiling applied before the moment update;
  // <= 0 disables clipping.
  double clip_norm = 5.0;

  void validate() const;  // throws ConfigError on out-of-range fields
};

// Adam with decoupled bias correction and global-norm gradient clipping.
// Holds non-owning handles to the parameter tensors; moments live here.
class Adam {
public:
  Adam(std::vector<diffcore::Tensor> params, AdamConfig config);

  // One update from the parameters' current gradients. A parameter with
  // no gradient buffer counts as zero gradient. Throws NumericError if
  // any updated value is non-finite.
  void step();

  // Clears the gradient buffers of every managed parameter.
  void zero_grad();

  const AdamConfig& config() const { return config_; }
  std::size_t steps_taken() const { return steps_; }

  // Euclidean norm of the concatenated gradients at the last step(),
  // before clipping. Zero before the first step.
  double last_grad_norm() const { return last_grad_norm_; }

private:
  std::vector<diffcore::Tensor> params_;
  AdamConfig config_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::size_t steps_ = 0;
  double last_grad_norm_ = 0.0;
};

}  // namespace flowgnn::trainer
