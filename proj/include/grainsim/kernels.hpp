#pragma once

#include <cstddef>

// Data-parallel arithmetic kernels used by the hot loops (network layers,
// Adam updates, reward reductions). Each entry point has a scalar
// reference implementation and an AVX2 variant; the active table is
// selected once at runtime from cpu capabilities and can be pinned with
// GRAINSIM_SIMD=scalar|avx2 for equivalence testing.

namespace grainsim::kern {

struct Kernels {
  const char* name;

  // C[MxN] += A[MxK] * B[KxN]
  void (*gemm_nn)(int m, int n, int k, const double* a, const double* b, double* c);
  // C[MxN] += A[MxK] * B[NxK]^T
  void (*gemm_nt)(int m, int n, int k, const double* a, const double* b, double* c);
  // C[MxN] += A[KxM]^T * B[KxN]
  void (*gemm_tn)(int m, int n, int k, const double* a, const double* b, double* c);

  // y += a * x
  void (*axpy)(size_t n, double a, const double* x, double* y);

  // Adam element-wise update; bc1/bc2 are the 1/(1-beta^t) bias corrections.
  void (*adam_step)(size_t n, double* p, const double* g, double* m, double* v,
                    double lr, double beta1, double beta2, double eps,
                    double bc1, double bc2);

  // sum_i |x[i*stride] - c|
  double (*sum_abs_dev)(size_t n, const double* x, size_t stride, double c);

  // max_i |x[i]| (0 for empty)
  double (*max_abs)(size_t n, const double* x);
};

/// Active table (runtime-dispatched).
const Kernels& get();

/// Reference table, always available.
const Kernels& scalar();

/// AVX2 table, or nullptr when unsupported by the build or the cpu.
const Kernels* avx2();

}  // namespace grainsim::kern
