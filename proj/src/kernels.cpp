#include "ouroboros/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

#include <algorithm>
#include <cstdint>
#include <cstring>

namespace ouro::kernels {

namespace {
// Below this many multiply-adds the fork/join cost dominates.
constexpr std::size_t kParallelWork = 1u << 15;
}  // namespace

namespace serial {

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] = acc;
    }
  }
}

void add(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}
void sub(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}
void mul(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}
void scale(const double* a, double s, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * s;
}

}  // namespace serial

namespace parallel {

namespace {
constexpr std::size_t kRowBlock = 4;
constexpr std::size_t kColBlock = 32;

// A 4x32 tile of C held in registers; each element still sums p = 0..k-1 in
// order from 0.0, so tiles agree bitwise with the serial kernel.
void tile(const double* __restrict a, const double* __restrict b, double* __restrict c,
          std::size_t i0, std::size_t j0, std::size_t k, std::size_t n) {
  double acc[kRowBlock][kColBlock] = {};
  for (std::size_t p = 0; p < k; ++p) {
    const double* brow = b + p * n + j0;
    for (std::size_t r = 0; r < kRowBlock; ++r) {
      const double av = a[(i0 + r) * k + p];
      for (std::size_t j = 0; j < kColBlock; ++j) acc[r][j] += av * brow[j];
    }
  }
  for (std::size_t r = 0; r < kRowBlock; ++r)
    std::memcpy(c + (i0 + r) * n + j0, acc[r], sizeof(acc[r]));
}

void edge(const double* a, const double* b, double* c, std::size_t i0, std::size_t rows,
          std::size_t j0, std::size_t cols, std::size_t k, std::size_t n) {
  for (std::size_t i = i0; i < i0 + rows; ++i) {
    for (std::size_t j = j0; j < j0 + cols; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] = acc;
    }
  }
}
}  // namespace

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n) {
  const auto blocks = static_cast<std::int64_t>((m + kRowBlock - 1) / kRowBlock);
  const bool wide = m * k * n >= kParallelWork;
#pragma omp parallel for schedule(static) if (wide)
  for (std::int64_t bi = 0; bi < blocks; ++bi) {
    const std::size_t i0 = static_cast<std::size_t>(bi) * kRowBlock;
    const std::size_t rows = std::min(kRowBlock, m - i0);
    for (std::size_t j0 = 0; j0 < n; j0 += kColBlock) {
      const std::size_t cols = std::min(kColBlock, n - j0);
      if (rows == kRowBlock && cols == kColBlock) {
        tile(a, b, c, i0, j0, k, n);
      } else {
        edge(a, b, c, i0, rows, j0, cols, k, n);
      }
    }
  }
}

#define OURO_PARALLEL_ELEMENTWISE(expr)                               \
  const auto count = static_cast<std::int64_t>(n);                    \
  _Pragma("omp parallel for schedule(static) if (n >= kParallelWork)") \
  for (std::int64_t i = 0; i < count; ++i) out[i] = (expr);

void add(const double* a, const double* b, double* out, std::size_t n) {
  OURO_PARALLEL_ELEMENTWISE(a[i] + b[i])
}
void sub(const double* a, const double* b, double* out, std::size_t n) {
  OURO_PARALLEL_ELEMENTWISE(a[i] - b[i])
}
void mul(const double* a, const double* b, double* out, std::size_t n) {
  OURO_PARALLEL_ELEMENTWISE(a[i] * b[i])
}
void scale(const double* a, double s, double* out, std::size_t n) {
  OURO_PARALLEL_ELEMENTWISE(a[i] * s)
}

#undef OURO_PARALLEL_ELEMENTWISE

}  // namespace parallel

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace ouro::kernels
