#pragma once

#include <cstddef>

// Raw row-major kernels behind Tensor arithmetic. The `parallel` variants
// split independent output rows across OpenMP threads; the `serial` variants
// are the single-threaded reference kept for tests and benchmarks. Both
// accumulate every output element in the same left-to-right order, so they
// agree bitwise.
namespace ouro::kernels {

namespace serial {

// Naive triple loop, i-j-p order.
void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n);
void add(const double* a, const double* b, double* out, std::size_t n);
void sub(const double* a, const double* b, double* out, std::size_t n);
void mul(const double* a, const double* b, double* out, std::size_t n);
void scale(const double* a, double s, double* out, std::size_t n);

}  // namespace serial

namespace parallel {

// i-p-j order over row blocks; per-element accumulation order matches serial.
void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n);
void add(const double* a, const double* b, double* out, std::size_t n);
void sub(const double* a, const double* b, double* out, std::size_t n);
void mul(const double* a, const double* b, double* out, std::size_t n);
void scale(const double* a, double s, double* out, std::size_t n);

}  // namespace parallel

// Number of OpenMP threads the parallel kernels may use (1 without OpenMP).
int max_threads();

}  // namespace ouro::kernels
