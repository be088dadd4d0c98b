// AVX2 variants of the inner-loop kernels. Compiled with -mavx2 in its own
// translation unit; callers reach it only through the runtime dispatch table.
// No FMA: mul-then-add keeps results bit-identical to the scalar reference.

#include "gnas/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#define GNAS_X86 1
#include <immintrin.h>
#else
#define GNAS_X86 0
#endif

namespace gnas::kern {

#if GNAS_X86

namespace {

void v_axpy(double* y, double a, const double* x, size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vy = _mm256_loadu_pd(y + i);
    __m256d vx = _mm256_loadu_pd(x + i);
    vy = _mm256_add_pd(vy, _mm256_mul_pd(va, vx));
    _mm256_storeu_pd(y + i, vy);
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void v_axpy_gather2(double* y, double a, const double* x, size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    // even elements of two consecutive 4-lane loads
    __m256d lo = _mm256_loadu_pd(x + 2 * i);
    __m256d hi = _mm256_loadu_pd(x + 2 * i + 4);
    __m256d ev = _mm256_unpacklo_pd(lo, hi);          // x0 x4 x2 x6
    ev = _mm256_permute4x64_pd(ev, _MM_SHUFFLE(3, 1, 2, 0));  // x0 x2 x4 x6
    __m256d vy = _mm256_loadu_pd(y + i);
    vy = _mm256_add_pd(vy, _mm256_mul_pd(va, ev));
    _mm256_storeu_pd(y + i, vy);
  }
  for (; i < n; ++i) y[i] += a * x[2 * i];
}

void v_axpy_scatter2(double* y, double a, const double* x, size_t n) {
  // scatter has no profitable AVX2 form for doubles at this width
  for (size_t i = 0; i < n; ++i) y[2 * i] += a * x[i];
}

void v_add(double* y, const double* x, size_t n) {
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vy = _mm256_loadu_pd(y + i);
    __m256d vx = _mm256_loadu_pd(x + i);
    _mm256_storeu_pd(y + i, _mm256_add_pd(vy, vx));
  }
  for (; i < n; ++i) y[i] += x[i];
}

void v_scal(double* y, double a, size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_mul_pd(va, _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] *= a;
}

void v_relu(double* y, const double* x, size_t n) {
  const __m256d z = _mm256_setzero_pd();
  size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_max_pd(_mm256_loadu_pd(x + i), z));
  for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void v_relu_bwd(double* dx, const double* x, const double* dy, size_t n) {
  const __m256d z = _mm256_setzero_pd();
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vx = _mm256_loadu_pd(x + i);
    __m256d mask = _mm256_cmp_pd(vx, z, _CMP_GT_OQ);
    __m256d vdy = _mm256_and_pd(_mm256_loadu_pd(dy + i), mask);
    _mm256_storeu_pd(dx + i, _mm256_add_pd(_mm256_loadu_pd(dx + i), vdy));
  }
  for (; i < n; ++i)
    if (x[i] > 0.0) dx[i] += dy[i];
}

}  // namespace

bool avx2_supported() { return __builtin_cpu_supports("avx2"); }

const Kernels& avx2_kernels() {
  static const Kernels k{v_axpy, v_axpy_gather2, v_axpy_scatter2, v_add, v_scal, v_relu, v_relu_bwd};
  return k;
}

#else

bool avx2_supported() { return false; }
const Kernels& avx2_kernels() { return scalar_kernels(); }

#endif

}  // namespace gnas::kern
