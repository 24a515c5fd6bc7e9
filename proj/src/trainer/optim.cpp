#include "flowgnn/trainer/optim.hpp"

#include <cmath>
#include <string>

#include "flowgnn/errors.hpp"

namespace flowgnn::trainer {

void AdamConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) {
    throw ConfigError("learning rate must be finite and non-negative");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("beta1 outside [0,1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("beta2 outside [0,1)");
  if (!(eps > 0.0)) throw ConfigError("eps must be positive");
  if (!std::isfinite(clip_norm)) throw ConfigError("clip norm must be finite");
}

Adam::Adam(std::vector<diffcore::Tensor> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  config_.validate();
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    if (!p.defined()) throw UsageError("optimizer given an undefined tensor");
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void Adam::step() {
  // Pass 1: global gradient norm over every managed parameter.
  double sq = 0.0;
  for (const auto& p : params_) {
    if (!p.has_grad()) continue;
    for (double g : p.grad()) sq += g * g;
  }
  last_grad_norm_ = std::sqrt(sq);
  if (!std::isfinite(last_grad_norm_)) {
    throw NumericError("non-finite gradient norm in optimizer step " +
                       std::to_string(steps_ + 1));
  }
  double scale = 1.0;
  if (config_.clip_norm > 0.0 && last_grad_norm_ > config_.clip_norm) {
    scale = config_.clip_norm / last_grad_norm_;
  }

  steps_ += 1;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));

  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& data = params_[i].mutable_data();
    const bool has = params_[i].has_grad();
    const std::vector<double>* grad = has ? &params_[i].grad() : nullptr;
    for (std::size_t j = 0; j < data.size(); ++j) {
      const double g = has ? (*grad)[j] * scale : 0.0;
      m_[i][j] = config_.beta1 * m_[i][j] + (1.0 - config_.beta1) * g;
      v_[i][j] = config_.beta2 * v_[i][j] + (1.0 - config_.beta2) * g * g;
      const double m_hat = m_[i][j] / bc1;
      const double v_hat = v_[i][j] / bc2;
      data[j] -= config_.lr * m_hat / (std::sqrt(v_hat) + config_.eps);
      if (!std::isfinite(data[j])) {
        throw NumericError("parameter " + std::to_string(i) +
                           " went non-finite at optimizer step " +
                           std::to_string(steps_));
      }
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace flowgnn::trainer
