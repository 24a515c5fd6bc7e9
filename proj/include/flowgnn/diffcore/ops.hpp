#pragma once

#include <cstdint>
#include <vector>

#include "flowgnn/diffcore/sparse.hpp"
#include "flowgnn/diffcore/tensor.hpp"
#include "flowgnn/rng.hpp"

// Differentiable ops over Tensor. All of them record tape entries when
// grad mode is on and some operand requires grad. Shapes are validated
// up front; violations throw DimensionError.

namespace flowgnn::diffcore {

// ---- linear algebra ----

/// a[m x k] . b[k x n] -> [m x n]
Tensor matmul(const Tensor& a, const Tensor& b);

/// 2-D transpose.
Tensor transpose(const Tensor& x);

// ---- pointwise and shape ----

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double c);
Tensor hadamard(const Tensor& a, const Tensor& b);

/// x[m x n] + bias broadcast over rows; bias is [n] or [1 x n].
Tensor add_row_bias(const Tensor& x, const Tensor& bias);

/// x[N x S x D] + bias[D] broadcast over the two leading axes.
Tensor add_channel_bias(const Tensor& x, const Tensor& bias);

Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);

/// Row-wise softmax with max subtraction; rows sum to 1.
Tensor softmax_rows(const Tensor& x);

/// Column means over rows: [m x n] -> [1 x n].
Tensor mean_rows(const Tensor& x);

/// Sum of all elements -> scalar.
Tensor sum_all(const Tensor& x);

/// Concatenation of rank-2 tensors along axis 0 (rows) or 1 (columns).
Tensor concat(const std::vector<Tensor>& xs, std::size_t axis);
Tensor concat_rows(const std::vector<Tensor>& xs);
Tensor concat_cols(const std::vector<Tensor>& xs);

/// Same data, new shape (sizes must match).
Tensor reshape(const Tensor& x, Shape shape);

/// Inverted dropout: in train mode each element is zeroed with
/// probability `rate` and survivors are scaled by 1/(1-rate); in eval
/// mode the input passes through unchanged. rate must be in [0, 1).
Tensor dropout(const Tensor& x, double rate, rng::Pcg& gen, bool train);

// ---- sequence ----

/// Causal 1-D convolution; see kernels.hpp for the index convention.
/// x: [N x S x D_in], kernel: [w x D_in x D_out], bias: [D_out].
/// Left zero-pad of (w-1)*dilation keeps the output length S and makes
/// position t depend only on inputs at positions <= t.
Tensor conv1d_causal(const Tensor& x, const Tensor& kernel, const Tensor& bias,
                     std::size_t dilation = 1);

/// [N x S x D] -> [N x D], the slice at the final time step.
Tensor last_timestep(const Tensor& x);

// ---- gather / segment ----

/// out[r] = x[idx[r]]; idx -1 yields a zero row (used for padding).
Tensor gather_rows(const Tensor& x, const std::vector<std::int64_t>& idx);

/// Segment s (rows offsets[s]..offsets[s+1] of `indices`) averages the
/// selected rows of x; empty segments produce zero rows.
Tensor segment_mean_rows(const Tensor& x,
                         const std::vector<std::size_t>& offsets,
                         const std::vector<std::int64_t>& indices);

/// Sums contiguous row ranges of x: out[s] = sum of rows
/// offsets[s]..offsets[s+1].
Tensor segment_sum_rows(const Tensor& x,
                        const std::vector<std::size_t>& offsets);

/// Softmax within each contiguous segment of a column vector [m x 1].
Tensor segment_softmax(const Tensor& logits,
                       const std::vector<std::size_t>& offsets);

/// out[i, :] = s[i] * x[i, :] with s a column vector [m x 1].
Tensor scale_rows(const Tensor& x, const Tensor& s);

// ---- graph propagation ----

/// out = P . x for a constant transition matrix; gradient flows to x
/// through P^T. Used for the diffusion powers (repeated propagation,
/// never dense matrix powers).
Tensor propagate(const TransitionMatrix& p, const Tensor& x);

// ---- loss ----

/// Mean (class-weighted when weights are given) negative log-softmax of
/// the true class. logits: [N x C], labels in [0, C). With weights the
/// reduction is sum(w_y * nll) / sum(w_y).
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels,
                     const Tensor& class_weights = Tensor());

}  // namespace flowgnn::diffcore
