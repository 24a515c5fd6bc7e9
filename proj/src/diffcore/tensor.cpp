#include "flowgnn/diffcore/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

#include "flowgnn/errors.hpp"

namespace flowgnn::diffcore {

namespace {

thread_local int g_no_grad_depth = 0;

std::size_t shape_product(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor extents must be positive");
    n *= d;
  }
  return n;
}

std::shared_ptr<detail::TensorNode> make_leaf(Shape shape,
                                              std::vector<double> data,
                                              bool requires_grad) {
  auto node = std::make_shared<detail::TensorNode>();
  if (shape_product(shape) != data.size())
    throw DimensionError("tensor data length does not match shape");
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return node;
}

}  // namespace

bool grad_enabled() { return g_no_grad_depth == 0; }

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::ones(Shape shape, bool requires_grad) {
  return full(std::move(shape), 1.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::size_t n = shape_product(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<double>(n, value),
                          requires_grad));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data,
                         bool requires_grad) {
  return Tensor(make_leaf(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

Tensor Tensor::uniform(Shape shape, double lo, double hi, rng::Pcg& gen,
                       bool requires_grad) {
  std::size_t n = shape_product(shape);
  std::vector<double> data(n);
  for (double& v : data) v = gen.next_double(lo, hi);
  return Tensor(make_leaf(std::move(shape), std::move(data), requires_grad));
}

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::rank() const { return node_->shape.size(); }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= node_->shape.size())
    throw DimensionError("axis out of range for tensor rank");
  return node_->shape[axis];
}

std::size_t Tensor::size() const { return node_->data.size(); }
const std::vector<double>& Tensor::data() const { return node_->data; }

double Tensor::value() const {
  if (size() != 1) throw UsageError("value() requires a scalar tensor");
  return node_->data[0];
}

double Tensor::at(std::size_t i) const { return node_->data.at(i); }

double Tensor::at(std::size_t i, std::size_t j) const {
  if (rank() != 2) throw UsageError("at(i, j) requires a rank-2 tensor");
  return node_->data.at(i * node_->shape[1] + j);
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }
bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

const std::vector<double>& Tensor::grad() const {
  if (!has_grad())
    throw UsageError("gradient not populated; call backward() first");
  return node_->grad;
}

void Tensor::ensure_grad() { node_->ensure_grad(); }

void Tensor::zero_grad() { node_->grad.assign(node_->data.size(), 0.0); }

std::vector<double>& Tensor::mutable_data() { return node_->data; }

Tensor Tensor::detached_copy() const {
  return from_data(node_->shape, node_->data, node_->requires_grad);
}

void Tensor::backward() const { flowgnn::diffcore::backward(*this); }

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw UsageError("backward() requires a scalar loss tensor");
  auto root = loss.node();
  if (!root->requires_grad) return;  // nothing on the tape depends on params

  // Iterative post-order DFS: children (inputs) first, so `order` ends up
  // topologically sorted with the root last. Each node is visited once.
  std::vector<detail::TensorNode*> order;
  std::unordered_set<detail::TensorNode*> seen;
  struct Frame {
    detail::TensorNode* node;
    std::size_t next_input;
  };
  std::vector<Frame> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    Frame& top = stack.back();
    if (top.next_input < top.node->inputs.size()) {
      detail::TensorNode* in = top.node->inputs[top.next_input++].get();
      if (in->requires_grad && seen.insert(in).second)
        stack.push_back({in, 0});
    } else {
      order.push_back(top.node);
      stack.pop_back();
    }
  }

  // Interior grads are scratch for this pass; only leaf grads accumulate
  // across repeated backward calls.
  for (detail::TensorNode* node : order)
    if (node->backward_fn) node->grad.assign(node->data.size(), 0.0);

  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::TensorNode* node = *it;
    if (node->backward_fn) node->backward_fn(*node);
  }
}

namespace detail {

Tensor make_result(Shape shape, std::vector<double> data, const char* op,
                   const std::vector<Tensor>& inputs,
                   std::function<void(TensorNode&)> backward_fn) {
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = op;
  bool track = grad_enabled();
  if (track) {
    bool any = false;
    for (const Tensor& in : inputs) any = any || in.requires_grad();
    track = any;
  }
  if (track) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (const Tensor& in : inputs) node->inputs.push_back(in.node());
    node->backward_fn = std::move(backward_fn);
  }
  police_finite(*node, op);
  return Tensor(std::move(node));
}

void police_finite(const TensorNode& node, const char* op) {
  auto fail = [&](std::size_t i) {
    std::ostringstream msg;
    msg << "op '" << op << "' produced a non-finite value at flat index " << i;
    throw NumericError(msg.str());
  };
  const std::vector<double>& d = node.data;
#ifndef NDEBUG
  for (std::size_t i = 0; i < d.size(); ++i)
    if (!std::isfinite(d[i])) fail(i);
#else
  if (d.empty()) return;
  std::size_t stride = d.size() > 16 ? d.size() / 16 : 1;
  for (std::size_t i = 0; i < d.size(); i += stride)
    if (!std::isfinite(d[i])) fail(i);
  if (!std::isfinite(d.back())) fail(d.size() - 1);
#endif
}

}  // namespace detail

}  // namespace flowgnn::diffcore
