#include "xpr/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>

#if defined(__x86_64__) || defined(__i386__)
#define XPR_X86 1
#else
#define XPR_X86 0
#endif

namespace xpr::kernels {

namespace {

double dot_scalar(std::size_t n, const double* x, const double* y) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

void axpy_scalar(std::size_t n, double a, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void matvec_acc_scalar(const double* a, std::size_t rows, std::size_t cols,
                       const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    y[r] += dot_scalar(cols, a + r * cols, x);
  }
}

void matvec_t_acc_scalar(const double* a, std::size_t rows, std::size_t cols,
                         const double* u, double* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    axpy_scalar(cols, u[r], a + r * cols, y);
  }
}

void ger_acc_scalar(double* a, std::size_t rows, std::size_t cols, double s,
                    const double* u, const double* v) {
  for (std::size_t r = 0; r < rows; ++r) {
    axpy_scalar(cols, s * u[r], v, a + r * cols);
  }
}

std::atomic<const detail::KernelTable*> g_table{nullptr};
std::atomic<Backend> g_backend{Backend::Scalar};

Backend default_backend() {
  if (const char* env = std::getenv("XPR_KERNELS")) {
    if (std::strcmp(env, "scalar") == 0) return Backend::Scalar;
    if (std::strcmp(env, "avx2") == 0 && cpu_has_avx2()) return Backend::Avx2;
  }
  return cpu_has_avx2() ? Backend::Avx2 : Backend::Scalar;
}

const detail::KernelTable* table() {
  const detail::KernelTable* t = g_table.load(std::memory_order_acquire);
  if (!t) {
    set_backend(default_backend());
    t = g_table.load(std::memory_order_acquire);
  }
  return t;
}

}  // namespace

namespace detail {

const KernelTable& scalar_table() {
  static const KernelTable t{dot_scalar, axpy_scalar, matvec_acc_scalar,
                             matvec_t_acc_scalar, ger_acc_scalar};
  return t;
}

}  // namespace detail

const char* backend_name(Backend b) {
  return b == Backend::Avx2 ? "avx2" : "scalar";
}

bool cpu_has_avx2() {
#if XPR_X86
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend active_backend() {
  table();
  return g_backend.load(std::memory_order_acquire);
}

bool set_backend(Backend b) {
  if (b == Backend::Avx2) {
    if (!cpu_has_avx2()) return false;
#if XPR_X86
    g_table.store(&detail::avx2_table(), std::memory_order_release);
#endif
  } else {
    g_table.store(&detail::scalar_table(), std::memory_order_release);
  }
  g_backend.store(b, std::memory_order_release);
  return true;
}

double dot(std::size_t n, const double* x, const double* y) {
  return table()->dot(n, x, y);
}

void axpy(std::size_t n, double a, const double* x, double* y) {
  table()->axpy(n, a, x, y);
}

void matvec_acc(const double* a, std::size_t rows, std::size_t cols,
                const double* x, double* y) {
  table()->matvec_acc(a, rows, cols, x, y);
}

void matvec_t_acc(const double* a, std::size_t rows, std::size_t cols,
                  const double* u, double* y) {
  table()->matvec_t_acc(a, rows, cols, u, y);
}

void ger_acc(double* a, std::size_t rows, std::size_t cols, double s,
             const double* u, const double* v) {
  table()->ger_acc(a, rows, cols, s, u, v);
}

}  // namespace xpr::kernels
