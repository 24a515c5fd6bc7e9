#include "flowgnn/diffcore/ops.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "flowgnn/diffcore/kernels.hpp"
#include "flowgnn/errors.hpp"

namespace flowgnn::diffcore {

namespace {

using detail::TensorNode;

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << " x ";
    os << s[i];
  }
  os << ']';
  return os.str();
}

void require_rank(const Tensor& t, std::size_t r, const char* op) {
  if (!t.defined() || t.rank() != r) {
    std::ostringstream os;
    os << op << " expects a rank-" << r << " tensor, got "
       << (t.defined() ? shape_str(t.shape()) : std::string("<undefined>"));
    throw DimensionError(os.str());
  }
}

// Accumulation buffer for one input of a tape node; null when the input
// does not participate in the gradient.
double* grad_buf(const std::shared_ptr<TensorNode>& n) {
  if (!n->requires_grad) return nullptr;
  n->ensure_grad();
  return n->grad.data();
}

void check_offsets(const std::vector<std::size_t>& offsets, std::size_t total,
                   const char* op) {
  if (offsets.empty() || offsets.front() != 0 || offsets.back() != total)
    throw UsageError(std::string(op) + ": malformed segment offsets");
  for (std::size_t i = 1; i < offsets.size(); ++i)
    if (offsets[i] < offsets[i - 1])
      throw UsageError(std::string(op) + ": segment offsets must be monotone");
}

Tensor unary_pointwise(const Tensor& x, const char* op,
                       double (*fwd)(double),
                       double (*dfd)(double x_in, double y_out)) {
  std::vector<double> out(x.size());
  const std::vector<double>& xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xd[i]);
  return detail::make_result(
      x.shape(), std::move(out), op, {x}, [dfd](TensorNode& self) {
        double* dx = grad_buf(self.inputs[0]);
        if (!dx) return;
        const std::vector<double>& xin = self.inputs[0]->data;
        for (std::size_t i = 0; i < self.data.size(); ++i)
          dx[i] += self.grad[i] * dfd(xin[i], self.data[i]);
      });
}

double stable_sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  if (a.dim(1) != b.dim(0)) {
    std::ostringstream os;
    os << "matmul inner dimensions differ: " << shape_str(a.shape()) << " vs "
       << shape_str(b.shape());
    throw DimensionError(os.str());
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n);
  kernels::gemm(false, false, m, n, k, a.data().data(), b.data().data(),
                out.data());
  return detail::make_result(
      {m, n}, std::move(out), "matmul", {a, b}, [m, k, n](TensorNode& self) {
        const auto& an = self.inputs[0];
        const auto& bn = self.inputs[1];
        if (double* da = grad_buf(an))
          kernels::gemm(false, true, m, k, n, self.grad.data(),
                        bn->data.data(), da, /*accumulate=*/true);
        if (double* db = grad_buf(bn))
          kernels::gemm(true, false, k, n, m, an->data.data(),
                        self.grad.data(), db, /*accumulate=*/true);
      });
}

Tensor transpose(const Tensor& x) {
  require_rank(x, 2, "transpose");
  const std::size_t m = x.dim(0), n = x.dim(1);
  std::vector<double> out(m * n);
  const std::vector<double>& xd = x.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = xd[i * n + j];
  return detail::make_result(
      {n, m}, std::move(out), "transpose", {x}, [m, n](TensorNode& self) {
        double* dx = grad_buf(self.inputs[0]);
        if (!dx) return;
        for (std::size_t j = 0; j < n; ++j)
          for (std::size_t i = 0; i < m; ++i)
            dx[i * n + j] += self.grad[j * m + i];
      });
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw DimensionError("add requires equal shapes: " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + b.at(i);
  return detail::make_result(
      a.shape(), std::move(out), "add", {a, b}, [](TensorNode& self) {
        for (int which = 0; which < 2; ++which) {
          if (double* d = grad_buf(self.inputs[which]))
            for (std::size_t i = 0; i < self.data.size(); ++i)
              d[i] += self.grad[i];
        }
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw DimensionError("sub requires equal shapes: " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) - b.at(i);
  return detail::make_result(
      a.shape(), std::move(out), "sub", {a, b}, [](TensorNode& self) {
        if (double* da = grad_buf(self.inputs[0]))
          for (std::size_t i = 0; i < self.data.size(); ++i)
            da[i] += self.grad[i];
        if (double* db = grad_buf(self.inputs[1]))
          for (std::size_t i = 0; i < self.data.size(); ++i)
            db[i] -= self.grad[i];
      });
}

Tensor scale(const Tensor& x, double c) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * x.at(i);
  return detail::make_result(
      x.shape(), std::move(out), "scale", {x}, [c](TensorNode& self) {
        if (double* dx = grad_buf(self.inputs[0]))
          for (std::size_t i = 0; i < self.data.size(); ++i)
            dx[i] += c * self.grad[i];
      });
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw DimensionError("hadamard requires equal shapes: " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * b.at(i);
  return detail::make_result(
      a.shape(), std::move(out), "hadamard", {a, b}, [](TensorNode& self) {
        const std::vector<double>& ad = self.inputs[0]->data;
        const std::vector<double>& bd = self.inputs[1]->data;
        if (double* da = grad_buf(self.inputs[0]))
          for (std::size_t i = 0; i < self.data.size(); ++i)
            da[i] += self.grad[i] * bd[i];
        if (double* db = grad_buf(self.inputs[1]))
          for (std::size_t i = 0; i < self.data.size(); ++i)
            db[i] += self.grad[i] * ad[i];
      });
}

namespace {

// Shared by the row-bias and channel-bias broadcasts: x viewed as
// [rows x width] plus a width-sized bias.
Tensor broadcast_bias(const Tensor& x, const Tensor& bias, const char* op) {
  const std::size_t width = bias.size();
  if (x.size() % width != 0 || x.shape().back() != width)
    throw DimensionError(std::string(op) + ": bias width " +
                         std::to_string(width) + " does not divide " +
                         shape_str(x.shape()));
  const std::size_t rows = x.size() / width;
  std::vector<double> out(x.size());
  const std::vector<double>& xd = x.data();
  const std::vector<double>& bd = bias.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < width; ++j)
      out[r * width + j] = xd[r * width + j] + bd[j];
  return detail::make_result(
      x.shape(), std::move(out), op, {x, bias},
      [rows, width](TensorNode& self) {
        if (double* dx = grad_buf(self.inputs[0]))
          for (std::size_t i = 0; i < self.data.size(); ++i)
            dx[i] += self.grad[i];
        if (double* db = grad_buf(self.inputs[1]))
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < width; ++j)
              db[j] += self.grad[r * width + j];
      });
}

}  // namespace

Tensor add_row_bias(const Tensor& x, const Tensor& bias) {
  require_rank(x, 2, "add_row_bias");
  if (bias.rank() > 2 || (bias.rank() == 2 && bias.dim(0) != 1))
    throw DimensionError("add_row_bias expects bias of shape [n] or [1 x n]");
  return broadcast_bias(x, bias, "add_row_bias");
}

Tensor add_channel_bias(const Tensor& x, const Tensor& bias) {
  require_rank(x, 3, "add_channel_bias");
  require_rank(bias, 1, "add_channel_bias");
  return broadcast_bias(x, bias, "add_channel_bias");
}

Tensor relu(const Tensor& x) {
  return unary_pointwise(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& x, double slope) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double v = x.at(i);
    out[i] = v > 0.0 ? v : slope * v;
  }
  return detail::make_result(
      x.shape(), std::move(out), "leaky_relu", {x}, [slope](TensorNode& self) {
        double* dx = grad_buf(self.inputs[0]);
        if (!dx) return;
        const std::vector<double>& xin = self.inputs[0]->data;
        for (std::size_t i = 0; i < self.data.size(); ++i)
          dx[i] += self.grad[i] * (xin[i] > 0.0 ? 1.0 : slope);
      });
}

Tensor sigmoid(const Tensor& x) {
  return unary_pointwise(
      x, "sigmoid", [](double v) { return stable_sigmoid(v); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary_pointwise(
      x, "tanh", [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor softmax_rows(const Tensor& x) {
  require_rank(x, 2, "softmax_rows");
  const std::size_t m = x.dim(0), n = x.dim(1);
  std::vector<double> out(m * n);
  const std::vector<double>& xd = x.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = xd.data() + i * n;
    double* o = out.data() + i * n;
    double mx = row[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      o[j] = std::exp(row[j] - mx);
      sum += o[j];
    }
    for (std::size_t j = 0; j < n; ++j) o[j] /= sum;
  }
  return detail::make_result(
      {m, n}, std::move(out), "softmax_rows", {x}, [m, n](TensorNode& self) {
        double* dx = grad_buf(self.inputs[0]);
        if (!dx) return;
        for (std::size_t i = 0; i < m; ++i) {
          const double* y = self.data.data() + i * n;
          const double* g = self.grad.data() + i * n;
          double dot = 0.0;
          for (std::size_t j = 0; j < n; ++j) dot += y[j] * g[j];
          for (std::size_t j = 0; j < n; ++j)
            dx[i * n + j] += y[j] * (g[j] - dot);
        }
      });
}

Tensor mean_rows(const Tensor& x) {
  require_rank(x, 2, "mean_rows");
  const std::size_t m = x.dim(0), n = x.dim(1);
  std::vector<double> out(n, 0.0);
  const std::vector<double>& xd = x.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += xd[i * n + j];
  for (std::size_t j = 0; j < n; ++j) out[j] /= static_cast<double>(m);
  return detail::make_result(
      {1, n}, std::move(out), "mean_rows", {x}, [m, n](TensorNode& self) {
        double* dx = grad_buf(self.inputs[0]);
        if (!dx) return;
        const double inv = 1.0 / static_cast<double>(m);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j)
            dx[i * n + j] += self.grad[j] * inv;
      });
}

Tensor sum_all(const Tensor& x) {
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) total += x.at(i);
  return detail::make_result(
      {1}, {total}, "sum_all", {x}, [](TensorNode& self) {
        if (double* dx = grad_buf(self.inputs[0]))
          for (std::size_t i = 0; i < self.inputs[0]->data.size(); ++i)
            dx[i] += self.grad[0];
      });
}

namespace {

Tensor concat_impl(const std::vector<Tensor>& xs, std::size_t axis) {
  if (xs.empty()) throw UsageError("concat of an empty tensor list");
  for (const Tensor& t : xs) require_rank(t, 2, "concat");
  const std::size_t fixed_axis = 1 - axis;
  const std::size_t fixed = xs.front().dim(fixed_axis);
  std::size_t total = 0;
  for (const Tensor& t : xs) {
    if (t.dim(fixed_axis) != fixed) {
      std::ostringstream os;
      os << "concat along axis " << axis << " requires matching axis-"
         << fixed_axis << " extents: " << shape_str(xs.front().shape())
         << " vs " << shape_str(t.shape());
      throw DimensionError(os.str());
    }
    total += t.dim(axis);
  }

  Shape out_shape = axis == 0 ? Shape{total, fixed} : Shape{fixed, total};
  std::vector<double> out(total * fixed);
  std::vector<Tensor> inputs = xs;
  if (axis == 0) {
    std::size_t row0 = 0;
    for (const Tensor& t : xs) {
      std::copy(t.data().begin(), t.data().end(), out.begin() + row0 * fixed);
      row0 += t.dim(0);
    }
  } else {
    std::size_t col0 = 0;
    for (const Tensor& t : xs) {
      const std::size_t w = t.dim(1);
      for (std::size_t i = 0; i < fixed; ++i)
        std::copy(t.data().begin() + i * w, t.data().begin() + (i + 1) * w,
                  out.begin() + i * total + col0);
      col0 += w;
    }
  }
  return detail::make_result(
      std::move(out_shape), std::move(out), axis == 0 ? "concat_rows" : "concat_cols",
      inputs, [axis, fixed, total](TensorNode& self) {
        std::size_t start = 0;
        for (const auto& in : self.inputs) {
          const std::size_t w = in->shape[axis];
          if (double* d = grad_buf(in)) {
            if (axis == 0) {
              for (std::size_t i = 0; i < w * fixed; ++i)
                d[i] += self.grad[start * fixed + i];
            } else {
              for (std::size_t i = 0; i < fixed; ++i)
                for (std::size_t j = 0; j < w; ++j)
                  d[i * w + j] += self.grad[i * total + start + j];
            }
          }
          start += w;
        }
      });
}

}  // namespace

Tensor concat(const std::vector<Tensor>& xs, std::size_t axis) {
  if (axis > 1) throw UsageError("concat supports axis 0 or 1");
  return concat_impl(xs, axis);
}

Tensor concat_rows(const std::vector<Tensor>& xs) { return concat_impl(xs, 0); }
Tensor concat_cols(const std::vector<Tensor>& xs) { return concat_impl(xs, 1); }

Tensor reshape(const Tensor& x, Shape shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  if (n != x.size())
    throw DimensionError("reshape to " + shape_str(shape) +
                         " does not preserve element count of " +
                         shape_str(x.shape()));
  std::vector<double> out = x.data();
  return detail::make_result(
      std::move(shape), std::move(out), "reshape", {x}, [](TensorNode& self) {
        if (double* dx = grad_buf(self.inputs[0]))
          for (std::size_t i = 0; i < self.data.size(); ++i)
            dx[i] += self.grad[i];
      });
}

Tensor dropout(const Tensor& x, double rate, rng::Pcg& gen, bool train) {
  if (!(rate >= 0.0 && rate < 1.0))
    throw ConfigError("dropout rate must lie in [0, 1)");
  if (!train) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mult(x.size());
  for (double& m : mult) m = gen.next_double() < rate ? 0.0 : keep_scale;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.at(i) * mult[i];
  return detail::make_result(
      x.shape(), std::move(out), "dropout", {x},
      [mult = std::move(mult)](TensorNode& self) {
        if (double* dx = grad_buf(self.inputs[0]))
          for (std::size_t i = 0; i < self.data.size(); ++i)
            dx[i] += self.grad[i] * mult[i];
      });
}

Tensor conv1d_causal(const Tensor& x, const Tensor& kernel, const Tensor& bias,
                     std::size_t dilation) {
  require_rank(x, 3, "conv1d_causal");
  require_rank(kernel, 3, "conv1d_causal");
  require_rank(bias, 1, "conv1d_causal");
  const std::size_t n_seq = x.dim(0), s = x.dim(1), d_in = x.dim(2);
  const std::size_t w = kernel.dim(0), d_out = kernel.dim(2);
  if (kernel.dim(1) != d_in)
    throw DimensionError("conv1d_causal kernel input width " +
                         std::to_string(kernel.dim(1)) +
                         " does not match data width " + std::to_string(d_in));
  if (bias.dim(0) != d_out)
    throw DimensionError("conv1d_causal bias width mismatch");
  if (w == 0 || dilation == 0)
    throw ConfigError("conv1d_causal kernel width and dilation must be >= 1");
  // A kernel whose receptive field outruns the sequence is fine: the
  // excess taps land in the implicit left zero-pad.

  std::vector<double> out(n_seq * s * d_out);
  kernels::conv1d(n_seq, s, d_in, d_out, w, dilation, x.data().data(),
                  kernel.data().data(), out.data());
  const std::vector<double>& bd = bias.data();
  for (std::size_t r = 0; r < n_seq * s; ++r)
    for (std::size_t o = 0; o < d_out; ++o) out[r * d_out + o] += bd[o];

  return detail::make_result(
      {n_seq, s, d_out}, std::move(out), "conv1d_causal", {x, kernel, bias},
      [n_seq, s, d_in, d_out, w, dilation](TensorNode& self) {
        const auto& xn = self.inputs[0];
        const auto& kn = self.inputs[1];
        if (double* dx = grad_buf(xn))
          kernels::conv1d_grad_x(n_seq, s, d_in, d_out, w, dilation,
                                 self.grad.data(), kn->data.data(), dx);
        if (double* dk = grad_buf(kn))
          kernels::conv1d_grad_kernel(n_seq, s, d_in, d_out, w, dilation,
                                      self.grad.data(), xn->data.data(), dk);
        if (double* db = grad_buf(self.inputs[2]))
          for (std::size_t r = 0; r < n_seq * s; ++r)
            for (std::size_t o = 0; o < d_out; ++o)
              db[o] += self.grad[r * d_out + o];
      });
}

Tensor last_timestep(const Tensor& x) {
  require_rank(x, 3, "last_timestep");
  const std::size_t n_seq = x.dim(0), s = x.dim(1), d = x.dim(2);
  std::vector<double> out(n_seq * d);
  const std::vector<double>& xd = x.data();
  for (std::size_t q = 0; q < n_seq; ++q)
    std::copy(xd.begin() + (q * s + s - 1) * d, xd.begin() + (q * s + s) * d,
              out.begin() + q * d);
  return detail::make_result(
      {n_seq, d}, std::move(out), "last_timestep", {x},
      [n_seq, s, d](TensorNode& self) {
        double* dx = grad_buf(self.inputs[0]);
        if (!dx) return;
        for (std::size_t q = 0; q < n_seq; ++q)
          for (std::size_t j = 0; j < d; ++j)
            dx[(q * s + s - 1) * d + j] += self.grad[q * d + j];
      });
}

Tensor gather_rows(const Tensor& x, const std::vector<std::int64_t>& idx) {
  require_rank(x, 2, "gather_rows");
  const std::size_t m = x.dim(0), n = x.dim(1);
  std::vector<double> out(idx.size() * n, 0.0);
  const std::vector<double>& xd = x.data();
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const std::int64_t i = idx[r];
    if (i < 0) {
      if (i != -1) throw UsageError("gather_rows index below -1");
      continue;  // padding row stays zero
    }
    if (static_cast<std::size_t>(i) >= m)
      throw UsageError("gather_rows index " + std::to_string(i) +
                       " out of range for " + std::to_string(m) + " rows");
    std::copy(xd.begin() + i * n, xd.begin() + (i + 1) * n,
              out.begin() + r * n);
  }
  return detail::make_result(
      {idx.size(), n}, std::move(out), "gather_rows", {x},
      [idx, n](TensorNode& self) {
        double* dx = grad_buf(self.inputs[0]);
        if (!dx) return;
        for (std::size_t r = 0; r < idx.size(); ++r) {
          if (idx[r] < 0) continue;
          const std::size_t i = static_cast<std::size_t>(idx[r]);
          for (std::size_t j = 0; j < n; ++j)
            dx[i * n + j] += self.grad[r * n + j];
        }
      });
}

Tensor segment_mean_rows(const Tensor& x,
                         const std::vector<std::size_t>& offsets,
                         const std::vector<std::int64_t>& indices) {
  require_rank(x, 2, "segment_mean_rows");
  check_offsets(offsets, indices.size(), "segment_mean_rows");
  const std::size_t m = x.dim(0), n = x.dim(1);
  const std::size_t segs = offsets.size() - 1;
  std::vector<double> out(segs * n, 0.0);
  const std::vector<double>& xd = x.data();
  for (std::size_t s = 0; s < segs; ++s) {
    const std::size_t len = offsets[s + 1] - offsets[s];
    if (len == 0) continue;  // empty neighborhood aggregates to zero
    double* o = out.data() + s * n;
    for (std::size_t e = offsets[s]; e < offsets[s + 1]; ++e) {
      const std::int64_t i = indices[e];
      if (i < 0 || static_cast<std::size_t>(i) >= m)
        throw UsageError("segment_mean_rows index out of range");
      const double* row = xd.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) o[j] += row[j];
    }
    const double inv = 1.0 / static_cast<double>(len);
    for (std::size_t j = 0; j < n; ++j) o[j] *= inv;
  }
  return detail::make_result(
      {segs, n}, std::move(out), "segment_mean_rows", {x},
      [offsets, indices, n, segs](TensorNode& self) {
        double* dx = grad_buf(self.inputs[0]);
        if (!dx) return;
        for (std::size_t s = 0; s < segs; ++s) {
          const std::size_t len = offsets[s + 1] - offsets[s];
          if (len == 0) continue;
          const double inv = 1.0 / static_cast<double>(len);
          for (std::size_t e = offsets[s]; e < offsets[s + 1]; ++e) {
            const std::size_t i = static_cast<std::size_t>(indices[e]);
            for (std::size_t j = 0; j < n; ++j)
              dx[i * n + j] += self.grad[s * n + j] * inv;
          }
        }
      });
}

Tensor segment_sum_rows(const Tensor& x,
                        const std::vector<std::size_t>& offsets) {
  require_rank(x, 2, "segment_sum_rows");
  check_offsets(offsets, x.dim(0), "segment_sum_rows");
  const std::size_t n = x.dim(1);
  const std::size_t segs = offsets.size() - 1;
  std::vector<double> out(segs * n, 0.0);
  const std::vector<double>& xd = x.data();
  for (std::size_t s = 0; s < segs; ++s) {
    double* o = out.data() + s * n;
    for (std::size_t r = offsets[s]; r < offsets[s + 1]; ++r)
      for (std::size_t j = 0; j < n; ++j) o[j] += xd[r * n + j];
  }
  return detail::make_result(
      {segs, n}, std::move(out), "segment_sum_rows", {x},
      [offsets, n, segs](TensorNode& self) {
        double* dx = grad_buf(self.inputs[0]);
        if (!dx) return;
        for (std::size_t s = 0; s < segs; ++s)
          for (std::size_t r = offsets[s]; r < offsets[s + 1]; ++r)
            for (std::size_t j = 0; j < n; ++j)
              dx[r * n + j] += self.grad[s * n + j];
      });
}

Tensor segment_softmax(const Tensor& logits,
                       const std::vector<std::size_t>& offsets) {
  require_rank(logits, 2, "segment_softmax");
  if (logits.dim(1) != 1)
    throw DimensionError("segment_softmax expects an [m x 1] column");
  check_offsets(offsets, logits.dim(0), "segment_softmax");
  const std::size_t segs = offsets.size() - 1;
  std::vector<double> out(logits.size());
  const std::vector<double>& ld = logits.data();
  for (std::size_t s = 0; s < segs; ++s) {
    if (offsets[s] == offsets[s + 1]) continue;
    double mx = ld[offsets[s]];
    for (std::size_t r = offsets[s]; r < offsets[s + 1]; ++r)
      mx = std::max(mx, ld[r]);
    double sum = 0.0;
    for (std::size_t r = offsets[s]; r < offsets[s + 1]; ++r) {
      out[r] = std::exp(ld[r] - mx);
      sum += out[r];
    }
    for (std::size_t r = offsets[s]; r < offsets[s + 1]; ++r) out[r] /= sum;
  }
  return detail::make_result(
      logits.shape(), std::move(out), "segment_softmax", {logits},
      [offsets, segs](TensorNode& self) {
        double* dl = grad_buf(self.inputs[0]);
        if (!dl) return;
        for (std::size_t s = 0; s < segs; ++s) {
          double dot = 0.0;
          for (std::size_t r = offsets[s]; r < offsets[s + 1]; ++r)
            dot += self.data[r] * self.grad[r];
          for (std::size_t r = offsets[s]; r < offsets[s + 1]; ++r)
            dl[r] += self.data[r] * (self.grad[r] - dot);
        }
      });
}

Tensor scale_rows(const Tensor& x, const Tensor& s) {
  require_rank(x, 2, "scale_rows");
  require_rank(s, 2, "scale_rows");
  if (s.dim(0) != x.dim(0) || s.dim(1) != 1)
    throw DimensionError("scale_rows expects scales of shape [rows x 1]");
  const std::size_t m = x.dim(0), n = x.dim(1);
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      out[i * n + j] = x.at(i, j) * s.at(i, 0);
  return detail::make_result(
      {m, n}, std::move(out), "scale_rows", {x, s}, [m, n](TensorNode& self) {
        const std::vector<double>& xd = self.inputs[0]->data;
        const std::vector<double>& sd = self.inputs[1]->data;
        if (double* dx = grad_buf(self.inputs[0]))
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j)
              dx[i * n + j] += self.grad[i * n + j] * sd[i];
        if (double* ds = grad_buf(self.inputs[1]))
          for (std::size_t i = 0; i < m; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j)
              acc += self.grad[i * n + j] * xd[i * n + j];
            ds[i] += acc;
          }
      });
}

Tensor propagate(const TransitionMatrix& p, const Tensor& x) {
  require_rank(x, 2, "propagate");
  const SparseMatrixPtr fwd = p.forward;
  const SparseMatrixPtr bwd = p.transpose;
  if (!fwd || !bwd) throw UsageError("propagate: transition matrix not built");
  if (fwd->cols_count != x.dim(0))
    throw DimensionError("propagate: matrix has " +
                         std::to_string(fwd->cols_count) +
                         " columns but x has " + std::to_string(x.dim(0)) +
                         " rows");
  const std::size_t d = x.dim(1);
  std::vector<double> out(fwd->rows * d);
  kernels::spmm(fwd->offsets.data(), fwd->cols.data(), fwd->vals.data(),
                fwd->rows, x.data().data(), d, out.data());
  return detail::make_result(
      {fwd->rows, d}, std::move(out), "propagate", {x},
      [bwd, d](TensorNode& self) {
        if (double* dx = grad_buf(self.inputs[0]))
          kernels::spmm(bwd->offsets.data(), bwd->cols.data(),
                        bwd->vals.data(), bwd->rows, self.grad.data(), d, dx,
                        /*accumulate=*/true);
      });
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels,
                     const Tensor& class_weights) {
  require_rank(logits, 2, "cross_entropy");
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  if (labels.size() != n)
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(n) + " rows");
  const bool weighted = class_weights.defined();
  if (weighted) {
    if (class_weights.size() != c)
      throw DimensionError("cross_entropy: class weight count mismatch");
    if (class_weights.requires_grad())
      throw UsageError("cross_entropy class weights must not require grad");
  }
  for (std::size_t i = 0; i < n; ++i)
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c)
      throw DataError("cross_entropy: label " + std::to_string(labels[i]) +
                      " out of range [0, " + std::to_string(c) + ") at row " +
                      std::to_string(i));

  const std::vector<double>& xd = logits.data();
  std::vector<double> probs(n * c);
  double loss_sum = 0.0, weight_sum = 0.0;
  std::vector<double> row_weight(n, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = xd.data() + i * c;
    double* p = probs.data() + i * c;
    double mx = row[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      p[j] = std::exp(row[j] - mx);
      sum += p[j];
    }
    for (std::size_t j = 0; j < c; ++j) p[j] /= sum;
    const double log_prob = row[labels[i]] - mx - std::log(sum);
    if (weighted) row_weight[i] = class_weights.at(labels[i]);
    loss_sum += row_weight[i] * (-log_prob);
    weight_sum += row_weight[i];
  }
  if (weight_sum <= 0.0)
    throw UsageError("cross_entropy: total class weight is zero");
  const double loss = loss_sum / weight_sum;

  return detail::make_result(
      {1}, {loss}, "cross_entropy", {logits},
      [labels, probs = std::move(probs), row_weight = std::move(row_weight),
       weight_sum, n, c](TensorNode& self) {
        double* dx = grad_buf(self.inputs[0]);
        if (!dx) return;
        const double g = self.grad[0] / weight_sum;
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < c; ++j) {
            double delta = (static_cast<std::size_t>(labels[i]) == j) ? 1.0 : 0.0;
            dx[i * c + j] += g * row_weight[i] * (probs[i * c + j] - delta);
          }
      });
}

}  // namespace flowgnn::diffcore
