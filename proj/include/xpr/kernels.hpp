#pragma once

#include <cstddef>

// Dense double-precision primitives behind the model's forward/backward
// passes. Every operation has a scalar reference implementation and, on
// x86-64 with AVX2+FMA, a vectorized variant selected at runtime. The
// two backends are equivalence-tested against each other; results may
// differ by reduction order (last-ulp differences), never in shape or
// semantics. A fixed backend is bit-deterministic.
//
// Backend selection: AVX2 when the CPU supports it, else scalar.
// Override with the environment variable XPR_KERNELS=scalar|avx2 or
// programmatically via set_backend().

namespace xpr::kernels {

enum class Backend { Scalar, Avx2 };

const char* backend_name(Backend b);
bool cpu_has_avx2();

Backend active_backend();
// Returns false (and leaves the selection unchanged) if the requested
// backend is unsupported on this CPU.
bool set_backend(Backend b);

// <x, y>
double dot(std::size_t n, const double* x, const double* y);

// y[i] += a * x[i]
void axpy(std::size_t n, double a, const double* x, double* y);

// y += A x, with A row-major (rows x cols), x of size cols, y of size rows.
void matvec_acc(const double* a, std::size_t rows, std::size_t cols,
                const double* x, double* y);

// y += A^T u, with A row-major (rows x cols), u of size rows, y of size cols.
void matvec_t_acc(const double* a, std::size_t rows, std::size_t cols,
                  const double* u, double* y);

// A += s * u v^T, with A row-major (rows x cols).
void ger_acc(double* a, std::size_t rows, std::size_t cols, double s,
             const double* u, const double* v);

namespace detail {

struct KernelTable {
  double (*dot)(std::size_t, const double*, const double*);
  void (*axpy)(std::size_t, double, const double*, double*);
  void (*matvec_acc)(const double*, std::size_t, std::size_t, const double*,
                     double*);
  void (*matvec_t_acc)(const double*, std::size_t, std::size_t, const double*,
                       double*);
  void (*ger_acc)(double*, std::size_t, std::size_t, double, const double*,
                  const double*);
};

const KernelTable& scalar_table();
// Defined in the AVX2 translation unit; only callable when cpu_has_avx2().
const KernelTable& avx2_table();

}  // namespace detail

}  // namespace xpr::kernels
