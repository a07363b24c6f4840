// AVX2 variants of the scalar reference kernels. Built with -mavx2 only:
// enabling FMA would let the compiler fuse the mul/add pairs below and break
// bit-equality with the scalar table.

#include <immintrin.h>

#include <cmath>

#include "gnasforge/kernels.hpp"

namespace gnasforge::kernels {
namespace {

constexpr std::size_t kLanes = 4;

void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
              double* c) {
  const std::size_t vec_end = n - n % kLanes;
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = b + p * n;
      const __m256d va = _mm256_set1_pd(aip);
      std::size_t j = 0;
      for (; j < vec_end; j += kLanes) {
        const __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(brow + j));
        _mm256_storeu_pd(crow + j, _mm256_add_pd(_mm256_loadu_pd(crow + j), prod));
      }
      for (; j < n; ++j) crow[j] = crow[j] + aip * brow[j];
    }
  }
}

template <typename VecOp, typename ScalarOp>
inline void binary(std::size_t n, const double* a, const double* b, double* out, VecOp vop,
                   ScalarOp sop) {
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    _mm256_storeu_pd(out + i, vop(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) out[i] = sop(a[i], b[i]);
}

void add(std::size_t n, const double* a, const double* b, double* out) {
  binary(n, a, b, out, [](__m256d x, __m256d y) { return _mm256_add_pd(x, y); },
         [](double x, double y) { return x + y; });
}
void sub(std::size_t n, const double* a, const double* b, double* out) {
  binary(n, a, b, out, [](__m256d x, __m256d y) { return _mm256_sub_pd(x, y); },
         [](double x, double y) { return x - y; });
}
void mul(std::size_t n, const double* a, const double* b, double* out) {
  binary(n, a, b, out, [](__m256d x, __m256d y) { return _mm256_mul_pd(x, y); },
         [](double x, double y) { return x * y; });
}
void div(std::size_t n, const double* a, const double* b, double* out) {
  binary(n, a, b, out, [](__m256d x, __m256d y) { return _mm256_div_pd(x, y); },
         [](double x, double y) { return x / y; });
}

void axpy(std::size_t n, double alpha, const double* x, double* y) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    const __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), prod));
  }
  for (; i < n; ++i) y[i] = y[i] + alpha * x[i];
}

void scale(std::size_t n, double alpha, const double* x, double* out) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    _mm256_storeu_pd(out + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  }
  for (; i < n; ++i) out[i] = alpha * x[i];
}

void adam(std::size_t n, const AdamCoefficients& c, double* param, const double* grad, double* m,
          double* v) {
  const __m256d wd = _mm256_set1_pd(c.weight_decay);
  const __m256d b1 = _mm256_set1_pd(c.beta1);
  const __m256d omb1 = _mm256_set1_pd(c.one_minus_beta1);
  const __m256d b2 = _mm256_set1_pd(c.beta2);
  const __m256d omb2 = _mm256_set1_pd(c.one_minus_beta2);
  const __m256d bc1 = _mm256_set1_pd(c.bias_correction1);
  const __m256d bc2 = _mm256_set1_pd(c.bias_correction2);
  const __m256d lr = _mm256_set1_pd(c.lr);
  const __m256d eps = _mm256_set1_pd(c.epsilon);
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    const __m256d p = _mm256_loadu_pd(param + i);
    const __m256d g = _mm256_add_pd(_mm256_loadu_pd(grad + i), _mm256_mul_pd(wd, p));
    const __m256d mi =
        _mm256_add_pd(_mm256_mul_pd(b1, _mm256_loadu_pd(m + i)), _mm256_mul_pd(omb1, g));
    const __m256d vi = _mm256_add_pd(_mm256_mul_pd(b2, _mm256_loadu_pd(v + i)),
                                     _mm256_mul_pd(omb2, _mm256_mul_pd(g, g)));
    _mm256_storeu_pd(m + i, mi);
    _mm256_storeu_pd(v + i, vi);
    const __m256d m_hat = _mm256_div_pd(mi, bc1);
    const __m256d v_hat = _mm256_div_pd(vi, bc2);
    const __m256d step = _mm256_div_pd(_mm256_mul_pd(lr, m_hat),
                                       _mm256_add_pd(_mm256_sqrt_pd(v_hat), eps));
    _mm256_storeu_pd(param + i, _mm256_sub_pd(p, step));
  }
  for (; i < n; ++i) {
    const double g = grad[i] + c.weight_decay * param[i];
    m[i] = c.beta1 * m[i] + c.one_minus_beta1 * g;
    v[i] = c.beta2 * v[i] + c.one_minus_beta2 * (g * g);
    const double m_hat = m[i] / c.bias_correction1;
    const double v_hat = v[i] / c.bias_correction2;
    param[i] = param[i] - c.lr * m_hat / (std::sqrt(v_hat) + c.epsilon);
  }
}

constexpr KernelTable kAvx2{Isa::Avx2, gemm_acc, add, sub, mul, div, axpy, scale, adam};

}  // namespace

const KernelTable* avx2_table_impl() { return &kAvx2; }

}  // namespace gnasforge::kernels
