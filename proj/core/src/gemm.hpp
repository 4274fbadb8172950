#pragma once

#include <cstddef>

namespace pdda::detail {

/// C += A * B for row-major A (M x K), B (K x N), C (M x N).
void gemm_acc(const double* A, const double* B, double* C, std::size_t M, std::size_t K,
              std::size_t N);

/// dst (cols x rows) = transpose of src (rows x cols).
void transpose(const double* src, double* dst, std::size_t rows, std::size_t cols);

}  // namespace pdda::detail
