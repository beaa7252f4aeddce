#include <cmath>

#include "grainsim/kernels.hpp"

namespace grainsim::kern {
namespace {

void gemm_nn(int m, int n, int k, const double* a, const double* b, double* c) {
  for (int i = 0; i < m; ++i) {
    double* ci = c + size_t(i) * n;
    const double* ai = a + size_t(i) * k;
    for (int p = 0; p < k; ++p) {
      const double av = ai[p];
      const double* bp = b + size_t(p) * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

void gemm_nt(int m, int n, int k, const double* a, const double* b, double* c) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + size_t(i) * k;
    double* ci = c + size_t(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* bj = b + size_t(j) * k;
      double acc = 0;
      for (int p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] += acc;
    }
  }
}

void gemm_tn(int m, int n, int k, const double* a, const double* b, double* c) {
  for (int p = 0; p < k; ++p) {
    const double* ap = a + size_t(p) * m;
    const double* bp = b + size_t(p) * n;
    for (int i = 0; i < m; ++i) {
      const double av = ap[i];
      double* ci = c + size_t(i) * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

void axpy(size_t n, double a, const double* x, double* y) {
  for (size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void adam_step(size_t n, double* p, const double* g, double* m, double* v,
               double lr, double beta1, double beta2, double eps, double bc1,
               double bc2) {
  for (size_t i = 0; i < n; ++i) {
    m[i] = beta1 * m[i] + (1 - beta1) * g[i];
    v[i] = beta2 * v[i] + (1 - beta2) * g[i] * g[i];
    const double mh = m[i] * bc1;
    const double vh = v[i] * bc2;
    p[i] -= lr * mh / (std::sqrt(vh) + eps);
  }
}

double sum_abs_dev(size_t n, const double* x, size_t stride, double c) {
  double s = 0;
  for (size_t i = 0; i < n; ++i) s += std::fabs(x[i * stride] - c);
  return s;
}

double max_abs(size_t n, const double* x) {
  double s = 0;
  for (size_t i = 0; i < n; ++i) s = std::max(s, std::fabs(x[i]));
  return s;
}

}  // namespace

const Kernels& scalar() {
  static const Kernels k = {"scalar", gemm_nn, gemm_nt,  gemm_tn,
                            axpy,     adam_step, sum_abs_dev, max_abs};
  return k;
}

}  // namespace grainsim::kern
