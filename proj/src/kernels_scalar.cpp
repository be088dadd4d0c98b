#include "gnas/kernels.hpp"

#include <stdexcept>

namespace gnas::kern {

namespace {

void s_axpy(double* y, double a, const double* x, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void s_axpy_gather2(double* y, double a, const double* x, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] += a * x[2 * i];
}

void s_axpy_scatter2(double* y, double a, const double* x, size_t n) {
  for (size_t i = 0; i < n; ++i) y[2 * i] += a * x[i];
}

void s_add(double* y, const double* x, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] += x[i];
}

void s_scal(double* y, double a, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] *= a;
}

void s_relu(double* y, const double* x, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void s_relu_bwd(double* dx, const double* x, const double* dy, size_t n) {
  for (size_t i = 0; i < n; ++i)
    if (x[i] > 0.0) dx[i] += dy[i];
}

Backend g_backend = avx2_supported() ? Backend::Avx2 : Backend::Scalar;

}  // namespace

const Kernels& scalar_kernels() {
  static const Kernels k{s_axpy, s_axpy_gather2, s_axpy_scatter2, s_add, s_scal, s_relu, s_relu_bwd};
  return k;
}

const Kernels& active() {
  return g_backend == Backend::Avx2 ? avx2_kernels() : scalar_kernels();
}

Backend current_backend() { return g_backend; }

void set_backend(Backend b) {
  if (b == Backend::Avx2 && !avx2_supported())
    throw std::runtime_error("AVX2 backend requested but CPU lacks AVX2");
  g_backend = b;
}

}  // namespace gnas::kern
