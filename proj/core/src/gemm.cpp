#include "gemm.hpp"

#include <cstring>

#pragma GCC diagnostic ignored "-Wpsabi"

namespace pdda::detail {

namespace {

// GCC/Clang vector extension; lowers to AVX when available, SSE2 pairs otherwise.
typedef double v4d __attribute__((vector_size(32)));

constexpr std::size_t kRows = 4;
constexpr std::size_t kCols = 8;

inline v4d load(const double* p) {
  v4d v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

inline void store_add(double* p, v4d v) {
  v4d c = load(p);
  c += v;
  std::memcpy(p, &c, sizeof c);
}

// 4 x 8 register tile accumulated over the full K extent.
inline void tile(const double* __restrict A, const double* __restrict B, double* __restrict C,
                 std::size_t K, std::size_t N) {
  v4d c00{}, c01{}, c10{}, c11{}, c20{}, c21{}, c30{}, c31{};
  for (std::size_t k = 0; k < K; ++k) {
    const v4d b0 = load(B + k * N), b1 = load(B + k * N + 4);
    const double a0 = A[k], a1 = A[K + k], a2 = A[2 * K + k], a3 = A[3 * K + k];
    c00 += a0 * b0;
    c01 += a0 * b1;
    c10 += a1 * b0;
    c11 += a1 * b1;
    c20 += a2 * b0;
    c21 += a2 * b1;
    c30 += a3 * b0;
    c31 += a3 * b1;
  }
  store_add(C, c00);
  store_add(C + 4, c01);
  store_add(C + N, c10);
  store_add(C + N + 4, c11);
  store_add(C + 2 * N, c20);
  store_add(C + 2 * N + 4, c21);
  store_add(C + 3 * N, c30);
  store_add(C + 3 * N + 4, c31);
}

}  // namespace

void gemm_acc(const double* A, const double* B, double* C, std::size_t M, std::size_t K,
              std::size_t N) {
  const std::size_t Mt = M - M % kRows, Nt = N - N % kCols;
  for (std::size_t i = 0; i < Mt; i += kRows) {
    for (std::size_t j = 0; j < Nt; j += kCols) tile(A + i * K, B + j, C + i * N + j, K, N);
  }
  // Ragged edges.
  for (std::size_t i = 0; i < M; ++i) {
    const std::size_t j0 = i < Mt ? Nt : 0;
    if (j0 == N) continue;
    for (std::size_t k = 0; k < K; ++k) {
      const double a = A[i * K + k];
      const double* b = B + k * N;
      double* c = C + i * N;
      for (std::size_t j = j0; j < N; ++j) c[j] += a * b[j];
    }
  }
}

void transpose(const double* src, double* dst, std::size_t rows, std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) dst[j * rows + i] = src[i * cols + j];
}

}  // namespace pdda::detail
