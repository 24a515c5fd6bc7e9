#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

#include "flowgnn/rng.hpp"

namespace flowgnn::diffcore {

using Shape = std::vector<std::size_t>;

namespace detail {

/// One tape entry. The tape is the implicit DAG formed by `inputs` links;
/// it is acyclic by construction (results only reference operands).
struct TensorNode {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;  // empty until first touched
  const char* op = "leaf";
  std::vector<std::shared_ptr<TensorNode>> inputs;
  // Reads this node's grad and accumulates into the inputs' grads.
  std::function<void(TensorNode&)> backward_fn;

  std::size_t size() const { return data.size(); }
  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
  }
};

}  // namespace detail

/// Dense row-major float64 tensor with optional reverse-mode gradient
/// tracking. Handles share the underlying node; data is immutable after
/// an op creates it except for grad accumulation and optimizer updates.
class Tensor {
public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor ones(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  /// Uniform values in [lo, hi), consuming from `gen`.
  static Tensor uniform(Shape shape, double lo, double hi, rng::Pcg& gen,
                        bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const;
  const std::vector<double>& data() const;
  double value() const;  // scalar tensors only
  double at(std::size_t i) const;
  double at(std::size_t i, std::size_t j) const;  // 2-D

  bool requires_grad() const;
  bool has_grad() const;
  const std::vector<double>& grad() const;  // throws UsageError when absent
  void ensure_grad();
  void zero_grad();

  /// In-place access for optimizer steps and finite-difference probes.
  /// Caller owns exclusivity; never call while a forward capture of this
  /// tensor is still going to be backpropagated.
  std::vector<double>& mutable_data();

  /// Reverse pass from this scalar. Grads accumulate; callers that want
  /// fresh gradients zero them first.
  void backward() const;

  /// Deep copy of data (drops any tape history; keeps requires_grad).
  Tensor detached_copy() const;

  std::shared_ptr<detail::TensorNode> node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::TensorNode> node)
      : node_(std::move(node)) {}

private:
  std::shared_ptr<detail::TensorNode> node_;
};

/// Free-function form of Tensor::backward.
void backward(const Tensor& loss);

/// True when ops in this thread record tape entries.
bool grad_enabled();

/// RAII switch that disables tape recording in the current thread.
class NoGradGuard {
public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

namespace detail {

/// Builds an op result node. Inputs and the backward fn are recorded only
/// when grad mode is on and some input requires grad.
Tensor make_result(Shape shape, std::vector<double> data, const char* op,
                   const std::vector<Tensor>& inputs,
                   std::function<void(TensorNode&)> backward_fn);

/// NaN/Inf policing at op boundaries: full scan in debug builds, strided
/// sample in release. Throws NumericError naming the op.
void police_finite(const TensorNode& node, const char* op);

}  // namespace detail

}  // namespace flowgnn::diffcore
