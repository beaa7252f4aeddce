#include "grainsim/kernels.hpp"

#if defined(GRAINSIM_BUILD_AVX2) && (defined(__x86_64__) || defined(__i386__))

#include <immintrin.h>

#include <cmath>

namespace grainsim::kern {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

void gemm_nn(int m, int n, int k, const double* a, const double* b, double* c) {
  for (int i = 0; i < m; ++i) {
    double* ci = c + size_t(i) * n;
    const double* ai = a + size_t(i) * k;
    for (int p = 0; p < k; ++p) {
      const __m256d av = _mm256_set1_pd(ai[p]);
      const double* bp = b + size_t(p) * n;
      int j = 0;
      for (; j + 4 <= n; j += 4) {
        __m256d cj = _mm256_loadu_pd(ci + j);
        cj = _mm256_fmadd_pd(av, _mm256_loadu_pd(bp + j), cj);
        _mm256_storeu_pd(ci + j, cj);
      }
      for (; j < n; ++j) ci[j] += ai[p] * bp[j];
    }
  }
}

// Dot-product form; four output columns per pass share the A row loads.
void gemm_nt(int m, int n, int k, const double* a, const double* b, double* c) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + size_t(i) * k;
    double* ci = c + size_t(i) * n;
    int j = 0;
    for (; j + 4 <= n; j += 4) {
      const double* b0 = b + size_t(j) * k;
      const double* b1 = b + size_t(j + 1) * k;
      const double* b2 = b + size_t(j + 2) * k;
      const double* b3 = b + size_t(j + 3) * k;
      __m256d acc0 = _mm256_setzero_pd(), acc1 = acc0, acc2 = acc0, acc3 = acc0;
      int p = 0;
      for (; p + 4 <= k; p += 4) {
        const __m256d av = _mm256_loadu_pd(ai + p);
        acc0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b0 + p), acc0);
        acc1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b1 + p), acc1);
        acc2 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b2 + p), acc2);
        acc3 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b3 + p), acc3);
      }
      double s0 = hsum(acc0), s1 = hsum(acc1), s2 = hsum(acc2), s3 = hsum(acc3);
      for (; p < k; ++p) {
        s0 += ai[p] * b0[p];
        s1 += ai[p] * b1[p];
        s2 += ai[p] * b2[p];
        s3 += ai[p] * b3[p];
      }
      ci[j] += s0;
      ci[j + 1] += s1;
      ci[j + 2] += s2;
      ci[j + 3] += s3;
    }
    for (; j < n; ++j) {
      const double* bj = b + size_t(j) * k;
      __m256d acc = _mm256_setzero_pd();
      int p = 0;
      for (; p + 4 <= k; p += 4)
        acc = _mm256_fmadd_pd(_mm256_loadu_pd(ai + p), _mm256_loadu_pd(bj + p), acc);
      double s = hsum(acc);
      for (; p < k; ++p) s += ai[p] * bj[p];
      ci[j] += s;
    }
  }
}

void gemm_tn(int m, int n, int k, const double* a, const double* b, double* c) {
  for (int p = 0; p < k; ++p) {
    const double* ap = a + size_t(p) * m;
    const double* bp = b + size_t(p) * n;
    for (int i = 0; i < m; ++i) {
      const __m256d av = _mm256_set1_pd(ap[i]);
      double* ci = c + size_t(i) * n;
      int j = 0;
      for (; j + 4 <= n; j += 4) {
        __m256d cj = _mm256_loadu_pd(ci + j);
        cj = _mm256_fmadd_pd(av, _mm256_loadu_pd(bp + j), cj);
        _mm256_storeu_pd(ci + j, cj);
      }
      for (; j < n; ++j) ci[j] += ap[i] * bp[j];
    }
  }
}

void axpy(size_t n, double a, const double* x, double* y) {
  const __m256d av = _mm256_set1_pd(a);
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d yi = _mm256_loadu_pd(y + i);
    yi = _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), yi);
    _mm256_storeu_pd(y + i, yi);
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void adam_step(size_t n, double* p, const double* g, double* m, double* v,
               double lr, double beta1, double beta2, double eps, double bc1,
               double bc2) {
  const __m256d b1 = _mm256_set1_pd(beta1), ob1 = _mm256_set1_pd(1 - beta1);
  const __m256d b2 = _mm256_set1_pd(beta2), ob2 = _mm256_set1_pd(1 - beta2);
  const __m256d vlr = _mm256_set1_pd(lr), veps = _mm256_set1_pd(eps);
  const __m256d vbc1 = _mm256_set1_pd(bc1), vbc2 = _mm256_set1_pd(bc2);
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d gi = _mm256_loadu_pd(g + i);
    __m256d mi = _mm256_loadu_pd(m + i);
    __m256d vi = _mm256_loadu_pd(v + i);
    mi = _mm256_fmadd_pd(b1, mi, _mm256_mul_pd(ob1, gi));
    vi = _mm256_fmadd_pd(b2, vi, _mm256_mul_pd(ob2, _mm256_mul_pd(gi, gi)));
    _mm256_storeu_pd(m + i, mi);
    _mm256_storeu_pd(v + i, vi);
    const __m256d mh = _mm256_mul_pd(mi, vbc1);
    const __m256d vh = _mm256_mul_pd(vi, vbc2);
    const __m256d den = _mm256_add_pd(_mm256_sqrt_pd(vh), veps);
    __m256d pi = _mm256_loadu_pd(p + i);
    pi = _mm256_sub_pd(pi, _mm256_div_pd(_mm256_mul_pd(vlr, mh), den));
    _mm256_storeu_pd(p + i, pi);
  }
  for (; i < n; ++i) {
    m[i] = beta1 * m[i] + (1 - beta1) * g[i];
    v[i] = beta2 * v[i] + (1 - beta2) * g[i] * g[i];
    p[i] -= lr * (m[i] * bc1) / (std::sqrt(v[i] * bc2) + eps);
  }
}

double sum_abs_dev(size_t n, const double* x, size_t stride, double c) {
  const __m256d sign_mask = _mm256_set1_pd(-0.0);
  const __m256d vc = _mm256_set1_pd(c);
  __m256d acc = _mm256_setzero_pd();
  size_t i = 0;
  if (stride == 1) {
    for (; i + 4 <= n; i += 4) {
      const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x + i), vc);
      acc = _mm256_add_pd(acc, _mm256_andnot_pd(sign_mask, d));
    }
  } else {
    for (; i + 4 <= n; i += 4) {
      const __m256d xi = _mm256_set_pd(x[(i + 3) * stride], x[(i + 2) * stride],
                                       x[(i + 1) * stride], x[i * stride]);
      acc = _mm256_add_pd(acc, _mm256_andnot_pd(sign_mask, _mm256_sub_pd(xi, vc)));
    }
  }
  double s = hsum(acc);
  for (; i < n; ++i) s += std::fabs(x[i * stride] - c);
  return s;
}

double max_abs(size_t n, const double* x) {
  const __m256d sign_mask = _mm256_set1_pd(-0.0);
  __m256d acc = _mm256_setzero_pd();
  size_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_max_pd(acc, _mm256_andnot_pd(sign_mask, _mm256_loadu_pd(x + i)));
  __m128d lo = _mm256_castpd256_pd128(acc);
  __m128d hi = _mm256_extractf128_pd(acc, 1);
  lo = _mm_max_pd(lo, hi);
  double s = std::max(_mm_cvtsd_f64(lo), _mm_cvtsd_f64(_mm_unpackhi_pd(lo, lo)));
  for (; i < n; ++i) s = std::max(s, std::fabs(x[i]));
  return s;
}

}  // namespace

const Kernels* avx2_impl() {
  static const Kernels k = {"avx2", gemm_nn, gemm_nt,  gemm_tn,
                            axpy,   adam_step, sum_abs_dev, max_abs};
  return &k;
}

}  // namespace grainsim::kern

#else

namespace grainsim::kern {
const Kernels* avx2_impl() { return nullptr; }
}  // namespace grainsim::kern

#endif
