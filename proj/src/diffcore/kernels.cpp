#include "flowgnn/diffcore/kernels.hpp"

#include <atomic>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace flowgnn::diffcore::kernels {

namespace {

std::atomic<Mode> g_mode{Mode::Auto};

// Work below this many flops is not worth a parallel region.
constexpr std::size_t kParallelThreshold = 1 << 15;

bool use_parallel(std::size_t work) {
#ifdef _OPENMP
  Mode m = g_mode.load(std::memory_order_relaxed);
  if (m == Mode::Serial) return false;
  if (m == Mode::Parallel) return true;
  return work >= kParallelThreshold;
#else
  (void)work;
  return false;
#endif
}

inline const double* row_ptr(const double* a, std::size_t stride, std::size_t i) {
  return a + i * stride;
}

// One output row of op(A).op(B). The k loop runs in a fixed order so the
// serial and parallel paths produce identical bits.
inline void gemm_row(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
                     std::size_t k, const double* a, const double* b,
                     double* c_row, std::size_t i, bool accumulate) {
  if (!accumulate) {
    for (std::size_t j = 0; j < n; ++j) c_row[j] = 0.0;
  }
  if (!trans_a && !trans_b) {
    const double* a_row = row_ptr(a, k, i);
    for (std::size_t l = 0; l < k; ++l) {
      const double av = a_row[l];
      if (av == 0.0) continue;
      const double* b_row = row_ptr(b, n, l);
      for (std::size_t j = 0; j < n; ++j) c_row[j] += av * b_row[j];
    }
  } else if (trans_a && !trans_b) {
    // A stored k x m
    for (std::size_t l = 0; l < k; ++l) {
      const double av = a[l * m + i];
      if (av == 0.0) continue;
      const double* b_row = row_ptr(b, n, l);
      for (std::size_t j = 0; j < n; ++j) c_row[j] += av * b_row[j];
    }
  } else if (!trans_a && trans_b) {
    // B stored n x k
    const double* a_row = row_ptr(a, k, i);
    for (std::size_t j = 0; j < n; ++j) {
      const double* b_row = row_ptr(b, k, j);
      double acc = 0.0;
      for (std::size_t l = 0; l < k; ++l) acc += a_row[l] * b_row[l];
      c_row[j] += acc;
    }
  } else {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t l = 0; l < k; ++l) acc += a[l * m + i] * b[j * k + l];
      c_row[j] += acc;
    }
  }
}

inline void conv1d_point(std::size_t s, std::size_t d_in, std::size_t d_out,
                         std::size_t w, std::size_t dilation, const double* xq,
                         const double* kernel, double* outq, std::size_t t) {
  double* o_row = outq + t * d_out;
  for (std::size_t o = 0; o < d_out; ++o) o_row[o] = 0.0;
  for (std::size_t j = 0; j < w; ++j) {
    const std::ptrdiff_t src =
        static_cast<std::ptrdiff_t>(t) -
        static_cast<std::ptrdiff_t>((w - 1 - j) * dilation);
    if (src < 0) continue;
    const double* x_row = xq + static_cast<std::size_t>(src) * d_in;
    const double* k_slab = kernel + j * d_in * d_out;
    for (std::size_t i = 0; i < d_in; ++i) {
      const double xv = x_row[i];
      if (xv == 0.0) continue;
      const double* k_row = k_slab + i * d_out;
      for (std::size_t o = 0; o < d_out; ++o) o_row[o] += xv * k_row[o];
    }
  }
  (void)s;
}

inline void spmm_row(const std::size_t* offsets, const std::uint32_t* cols,
                     const double* vals, const double* x, std::size_t d,
                     double* out_row, std::size_t i, bool accumulate) {
  if (!accumulate) {
    for (std::size_t j = 0; j < d; ++j) out_row[j] = 0.0;
  }
  for (std::size_t e = offsets[i]; e < offsets[i + 1]; ++e) {
    const double v = vals[e];
    const double* x_row = x + static_cast<std::size_t>(cols[e]) * d;
    for (std::size_t j = 0; j < d; ++j) out_row[j] += v * x_row[j];
  }
}

}  // namespace

void set_mode(Mode mode) { g_mode.store(mode, std::memory_order_relaxed); }
Mode mode() { return g_mode.load(std::memory_order_relaxed); }

void gemm_serial(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
                 std::size_t k, const double* a, const double* b, double* c,
                 bool accumulate) {
  for (std::size_t i = 0; i < m; ++i)
    gemm_row(trans_a, trans_b, m, n, k, a, b, c + i * n, i, accumulate);
}

void gemm_parallel(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
                   std::size_t k, const double* a, const double* b, double* c,
                   bool accumulate) {
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < m; ++i)
    gemm_row(trans_a, trans_b, m, n, k, a, b, c + i * n, i, accumulate);
}

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
          std::size_t k, const double* a, const double* b, double* c,
          bool accumulate) {
  if (use_parallel(m * n * k))
    gemm_parallel(trans_a, trans_b, m, n, k, a, b, c, accumulate);
  else
    gemm_serial(trans_a, trans_b, m, n, k, a, b, c, accumulate);
}

void conv1d_serial(std::size_t n_seq, std::size_t s, std::size_t d_in,
                   std::size_t d_out, std::size_t w, std::size_t dilation,
                   const double* x, const double* kernel, double* out) {
  for (std::size_t q = 0; q < n_seq; ++q)
    for (std::size_t t = 0; t < s; ++t)
      conv1d_point(s, d_in, d_out, w, dilation, x + q * s * d_in, kernel,
                   out + q * s * d_out, t);
}

void conv1d_parallel(std::size_t n_seq, std::size_t s, std::size_t d_in,
                     std::size_t d_out, std::size_t w, std::size_t dilation,
                     const double* x, const double* kernel, double* out) {
#pragma omp parallel for collapse(2) schedule(static)
  for (std::size_t q = 0; q < n_seq; ++q)
    for (std::size_t t = 0; t < s; ++t)
      conv1d_point(s, d_in, d_out, w, dilation, x + q * s * d_in, kernel,
                   out + q * s * d_out, t);
}

void conv1d(std::size_t n_seq, std::size_t s, std::size_t d_in,
            std::size_t d_out, std::size_t w, std::size_t dilation,
            const double* x, const double* kernel, double* out) {
  if (use_parallel(n_seq * s * d_in * d_out * w))
    conv1d_parallel(n_seq, s, d_in, d_out, w, dilation, x, kernel, out);
  else
    conv1d_serial(n_seq, s, d_in, d_out, w, dilation, x, kernel, out);
}

void conv1d_grad_x(std::size_t n_seq, std::size_t s, std::size_t d_in,
                   std::size_t d_out, std::size_t w, std::size_t dilation,
                   const double* grad_out, const double* kernel, double* dx) {
  // dx[q, p, i] += sum_{j, o} kernel[j, i, o] * g[q, p + (w-1-j)*dil, o]
  for (std::size_t q = 0; q < n_seq; ++q) {
    const double* gq = grad_out + q * s * d_out;
    double* dxq = dx + q * s * d_in;
    for (std::size_t p = 0; p < s; ++p) {
      double* dx_row = dxq + p * d_in;
      for (std::size_t j = 0; j < w; ++j) {
        const std::size_t t = p + (w - 1 - j) * dilation;
        if (t >= s) continue;
        const double* g_row = gq + t * d_out;
        const double* k_slab = kernel + j * d_in * d_out;
        for (std::size_t i = 0; i < d_in; ++i) {
          const double* k_row = k_slab + i * d_out;
          double acc = 0.0;
          for (std::size_t o = 0; o < d_out; ++o) acc += k_row[o] * g_row[o];
          dx_row[i] += acc;
        }
      }
    }
  }
}

void conv1d_grad_kernel(std::size_t n_seq, std::size_t s, std::size_t d_in,
                        std::size_t d_out, std::size_t w, std::size_t dilation,
                        const double* grad_out, const double* x, double* dk) {
  // dk[j, i, o] += sum_{q, t} x[q, t - (w-1-j)*dil, i] * g[q, t, o]
  for (std::size_t j = 0; j < w; ++j) {
    const std::size_t back = (w - 1 - j) * dilation;
    double* dk_slab = dk + j * d_in * d_out;
    for (std::size_t q = 0; q < n_seq; ++q) {
      const double* xq = x + q * s * d_in;
      const double* gq = grad_out + q * s * d_out;
      for (std::size_t t = back; t < s; ++t) {
        const double* x_row = xq + (t - back) * d_in;
        const double* g_row = gq + t * d_out;
        for (std::size_t i = 0; i < d_in; ++i) {
          const double xv = x_row[i];
          if (xv == 0.0) continue;
          double* dk_row = dk_slab + i * d_out;
          for (std::size_t o = 0; o < d_out; ++o) dk_row[o] += xv * g_row[o];
        }
      }
    }
  }
}

void spmm_serial(const std::size_t* offsets, const std::uint32_t* cols,
                 const double* vals, std::size_t rows, const double* x,
                 std::size_t d, double* out, bool accumulate) {
  for (std::size_t i = 0; i < rows; ++i)
    spmm_row(offsets, cols, vals, x, d, out + i * d, i, accumulate);
}

void spmm_parallel(const std::size_t* offsets, const std::uint32_t* cols,
                   const double* vals, std::size_t rows, const double* x,
                   std::size_t d, double* out, bool accumulate) {
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < rows; ++i)
    spmm_row(offsets, cols, vals, x, d, out + i * d, i, accumulate);
}

void spmm(const std::size_t* offsets, const std::uint32_t* cols,
          const double* vals, std::size_t rows, const double* x, std::size_t d,
          double* out, bool accumulate) {
  if (use_parallel(offsets[rows] * d))
    spmm_parallel(offsets, cols, vals, rows, x, d, out, accumulate);
  else
    spmm_serial(offsets, cols, vals, rows, x, d, out, accumulate);
}

}  // namespace flowgnn::diffcore::kernels
