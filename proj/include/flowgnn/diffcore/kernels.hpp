#pragma once

#include <cstddef>
#include <cstdint>

// Dense inner loops behind the tensor ops. Every kernel has a serial
// reference implementation and an OpenMP variant; both iterate the
// reduction dimension in the same order, so results are bit-identical
// and the parallel path stays deterministic. The *_serial functions are
// kept callable for tests and the kernel benchmark.

namespace flowgnn::diffcore::kernels {

enum class Mode { Auto, Serial, Parallel };

/// Process-wide dispatch override. Auto picks the parallel path for
/// large inputs when compiled with OpenMP.
void set_mode(Mode mode);
Mode mode();

// C[m x n] = op(A) . op(B) with op(A): m x k, op(B): k x n.
// A is stored row-major as (trans_a ? k x m : m x k), B likewise.
// accumulate adds into C instead of overwriting.
void gemm_serial(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
                 std::size_t k, const double* a, const double* b, double* c,
                 bool accumulate);
void gemm_parallel(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
                   std::size_t k, const double* a, const double* b, double* c,
                   bool accumulate);
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
          std::size_t k, const double* a, const double* b, double* c,
          bool accumulate = false);

// Causal 1-D convolution over x[n_seq x s x d_in], kernel[w x d_in x d_out].
// out[q, t, o] = sum_{j, i} kernel[j, i, o] * x[q, t - (w-1-j)*dilation, i]
// with out-of-range positions reading as zero, i.e. a left zero-pad of
// (w-1)*dilation. kernel[w-1] multiplies the current position.
void conv1d_serial(std::size_t n_seq, std::size_t s, std::size_t d_in,
                   std::size_t d_out, std::size_t w, std::size_t dilation,
                   const double* x, const double* kernel, double* out);
void conv1d_parallel(std::size_t n_seq, std::size_t s, std::size_t d_in,
                     std::size_t d_out, std::size_t w, std::size_t dilation,
                     const double* x, const double* kernel, double* out);
void conv1d(std::size_t n_seq, std::size_t s, std::size_t d_in,
            std::size_t d_out, std::size_t w, std::size_t dilation,
            const double* x, const double* kernel, double* out);

// Gradient of conv1d w.r.t. x: accumulates into dx[n_seq x s x d_in].
void conv1d_grad_x(std::size_t n_seq, std::size_t s, std::size_t d_in,
                   std::size_t d_out, std::size_t w, std::size_t dilation,
                   const double* grad_out, const double* kernel, double* dx);

// Gradient of conv1d w.r.t. kernel: accumulates into dk[w x d_in x d_out].
void conv1d_grad_kernel(std::size_t n_seq, std::size_t s, std::size_t d_in,
                        std::size_t d_out, std::size_t w, std::size_t dilation,
                        const double* grad_out, const double* x, double* dk);

// out[rows x d] = P . x for CSR P with explicit values.
void spmm_serial(const std::size_t* offsets, const std::uint32_t* cols,
                 const double* vals, std::size_t rows, const double* x,
                 std::size_t d, double* out, bool accumulate);
void spmm_parallel(const std::size_t* offsets, const std::uint32_t* cols,
                   const double* vals, std::size_t rows, const double* x,
                   std::size_t d, double* out, bool accumulate);
void spmm(const std::size_t* offsets, const std::uint32_t* cols,
          const double* vals, std::size_t rows, const double* x, std::size_t d,
          double* out, bool accumulate = false);

}  // namespace flowgnn::diffcore::kernels
