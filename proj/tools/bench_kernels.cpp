// Benchmark of the dense kernel pairs: every kernel ships a serial
// reference implementation and an OpenMP variant that iterates reductions
// in the same order, so outputs must be bit-identical. This tool times
// both paths on representative shapes, reports the speedup, and fails if
// any pair ever disagrees by a single bit.
#include <chrono>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "CLI11.hpp"
#include "flowgnn/diffcore/kernels.hpp"
#include "flowgnn/rng.hpp"

namespace {

using namespace flowgnn;
namespace kn = diffcore::kernels;

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  rng::Pcg gen(seed);
  std::vector<double> v(n);
  for (double& x : v) x = gen.next_double(-1.0, 1.0);
  return v;
}

// Best-of-N wall time of fn(), with one untimed warmup call.
template <typename Fn>
double best_ms(int reps, Fn&& fn) {
  fn();
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const double ms =
        std::chrono::duration<double, std::milli>(
            std::chrono::steady_clock::now() - t0)
            .count();
    if (ms < best) best = ms;
  }
  return best;
}

bool identical(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

int mismatches = 0;

void report(const std::string& kernel, const std::string& shape, double gflop,
            double serial_ms, double parallel_ms, bool same) {
  if (!same) ++mismatches;
  std::printf("%-7s %-34s %8.3f %11.2f %12.2f %8.2fx %s\n", kernel.c_str(),
              shape.c_str(), gflop, serial_ms, parallel_ms,
              serial_ms / parallel_ms, same ? "yes" : "NO");
}

void bench_gemm(int reps, std::size_t m, std::size_t n, std::size_t k) {
  const std::vector<double> a = random_vec(m * k, 1);
  const std::vector<double> b = random_vec(k * n, 2);
  std::vector<double> c_serial(m * n), c_parallel(m * n);
  const double serial_ms = best_ms(reps, [&] {
    kn::gemm_serial(false, false, m, n, k, a.data(), b.data(),
                    c_serial.data(), false);
  });
  const double parallel_ms = best_ms(reps, [&] {
    kn::gemm_parallel(false, false, m, n, k, a.data(), b.data(),
                      c_parallel.data(), false);
  });
  const std::string shape = std::to_string(m) + "x" + std::to_string(k) +
                            " . " + std::to_string(k) + "x" +
                            std::to_string(n);
  report("gemm", shape, 2.0 * m * n * k * 1e-9, serial_ms, parallel_ms,
         identical(c_serial, c_parallel));
}

void bench_conv1d(int reps, std::size_t n_seq, std::size_t s, std::size_t d_in,
                  std::size_t d_out, std::size_t w, std::size_t dilation) {
  const std::vector<double> x = random_vec(n_seq * s * d_in, 3);
  const std::vector<double> kernel = random_vec(w * d_in * d_out, 4);
  std::vector<double> o_serial(n_seq * s * d_out), o_parallel(o_serial.size());
  const double serial_ms = best_ms(reps, [&] {
    kn::conv1d_serial(n_seq, s, d_in, d_out, w, dilation, x.data(),
                      kernel.data(), o_serial.data());
  });
  const double parallel_ms = best_ms(reps, [&] {
    kn::conv1d_parallel(n_seq, s, d_in, d_out, w, dilation, x.data(),
                        kernel.data(), o_parallel.data());
  });
  const std::string shape = std::to_string(n_seq) + "x" + std::to_string(s) +
                            "x" + std::to_string(d_in) + " -> " +
                            std::to_string(d_out) + " w" + std::to_string(w) +
                            " d" + std::to_string(dilation);
  report("conv1d", shape, 2.0 * n_seq * s * d_in * d_out * w * 1e-9,
         serial_ms, parallel_ms, identical(o_serial, o_parallel));
}

void bench_spmm(int reps, std::size_t rows, std::size_t degree,
                std::size_t d) {
  // Random CSR with a fixed number of distinct columns per row.
  rng::Pcg gen(5);
  std::vector<std::size_t> offsets(rows + 1, 0);
  std::vector<std::uint32_t> cols;
  cols.reserve(rows * degree);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < degree; ++j) {
      cols.push_back(static_cast<std::uint32_t>(gen.next_below(rows)));
    }
    offsets[i + 1] = cols.size();
  }
  const std::vector<double> vals = random_vec(cols.size(), 6);
  const std::vector<double> x = random_vec(rows * d, 7);
  std::vector<double> o_serial(rows * d), o_parallel(rows * d);
  const double serial_ms = best_ms(reps, [&] {
    kn::spmm_serial(offsets.data(), cols.data(), vals.data(), rows, x.data(),
                    d, o_serial.data(), false);
  });
  const double parallel_ms = best_ms(reps, [&] {
    kn::spmm_parallel(offsets.data(), cols.data(), vals.data(), rows,
                      x.data(), d, o_parallel.data(), false);
  });
  const std::string shape = std::to_string(rows) + " rows, deg " +
                            std::to_string(degree) + ", d=" +
                            std::to_string(d);
  report("spmm", shape, 2.0 * cols.size() * d * 1e-9, serial_ms, parallel_ms,
         identical(o_serial, o_parallel));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Serial vs. OpenMP kernel benchmark"};
  int reps = 5;
  app.add_option("--reps", reps, "timed repetitions per kernel (best wins)")
      ->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

#ifdef _OPENMP
  std::printf("OpenMP enabled, %d threads; best of %d runs\n",
              omp_get_max_threads(), reps);
#else
  std::printf("OpenMP disabled (serial fallback); best of %d runs\n", reps);
#endif
  std::printf("%-7s %-34s %8s %11s %12s %9s %s\n", "kernel", "shape",
              "gflop", "serial_ms", "parallel_ms", "speedup", "identical");

  bench_gemm(reps, 256, 256, 256);
  bench_gemm(reps, 512, 512, 512);
  bench_gemm(reps, 2048, 64, 128);
  bench_conv1d(reps, 4096, 16, 32, 32, 3, 1);
  bench_conv1d(reps, 8192, 32, 16, 16, 2, 2);
  bench_spmm(reps, 20000, 16, 64);
  bench_spmm(reps, 100000, 8, 32);

  if (mismatches > 0) {
    std::printf("%d kernel pair(s) disagreed bitwise\n", mismatches);
    return 1;
  }
  return 0;
}
