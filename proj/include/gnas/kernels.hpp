#pragma once

#include <cstddef>

// Data-parallel inner-loop kernels. Every kernel exists as a scalar reference
// and (on x86-64 with AVX2) a SIMD variant selected at runtime. The SIMD
// variants vectorize across output elements only and never reorder per-element
// accumulation, so both backends produce bit-identical results; the test suite
// asserts exact equality.

namespace gnas::kern {

enum class Backend { Scalar, Avx2 };

struct Kernels {
  // y[i] += a * x[i]
  void (*axpy)(double* y, double a, const double* x, size_t n);
  // y[i] += a * x[2*i]
  void (*axpy_gather2)(double* y, double a, const double* x, size_t n);
  // y[2*i] += a * x[i]
  void (*axpy_scatter2)(double* y, double a, const double* x, size_t n);
  // y[i] += x[i]
  void (*add)(double* y, const double* x, size_t n);
  // y[i] *= a
  void (*scal)(double* y, double a, size_t n);
  // y[i] = max(x[i], 0)
  void (*relu)(double* y, const double* x, size_t n);
  // dx[i] += dy[i] where x[i] > 0
  void (*relu_bwd)(double* dx, const double* x, const double* dy, size_t n);
};

const Kernels& scalar_kernels();
bool avx2_supported();
const Kernels& avx2_kernels();  // call only if avx2_supported()

/// Currently active kernel table (AVX2 when the CPU has it, scalar otherwise).
const Kernels& active();
Backend current_backend();
void set_backend(Backend b);  // throws if unsupported

}  // namespace gnas::kern
