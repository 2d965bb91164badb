#pragma once

// Dense double-precision inner loops shared by reward evaluation, gradient
// accumulation and simulation. Each kernel has a scalar reference version and,
// on x86-64, an AVX2/FMA version. The active table is chosen once per process
// from CPUID, and can be pinned with APA_KERNELS=scalar|avx2.

#include <cstddef>
#include <span>
#include <string_view>

namespace apa::kernels {

struct KernelTable {
  const char* name;
  // sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // out[r] = sum_c m[r * cols + c] * x[c] + (bias ? bias[r] : 0)
  void (*gemv)(const double* m, const double* x, const double* bias,
               double* out, std::size_t rows, std::size_t cols);
};

const KernelTable& scalar_table();
// Null when the build or the CPU lacks AVX2+FMA.
const KernelTable* avx2_table();

// Table used by the library. Resolved on first call and fixed afterwards so
// results are reproducible within a process and across reruns on one machine.
const KernelTable& active();

// Pins the active table by name ("scalar" or "avx2"); returns false if the
// requested table is unavailable. Intended for tests and benchmarking.
bool select(std::string_view name);

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}

}  // namespace apa::kernels
