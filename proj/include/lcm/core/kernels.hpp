#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace lcm::kernels {

// Every output element C[i][j] is a chain of fused multiply-adds over
// k = 0, 1, ... starting from 0 (or the old C[i][j]), whatever the row count,
// the tile a row falls into, or whether the column is handled by the vector
// body or the tail. Batched evaluation therefore produces bit-identical rows
// to one-at-a-time evaluation.

template <class T>
inline T madd(T a, T b, T c) {
#if defined(__FMA__)
  return std::fma(a, b, c);
#else
  return a * b + c;
#endif
}

namespace detail {

template <class T, std::size_t R, std::size_t W>
inline void gemm_tile(const T* __restrict a, const T* __restrict b, T* __restrict c, std::size_t k, std::size_t n,
                      bool accumulate) {
  T acc[R][W];
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t j = 0; j < W; ++j) acc[r][j] = accumulate ? c[r * n + j] : T{0};
  }
  for (std::size_t p = 0; p < k; ++p) {
    const T* __restrict bp = b + p * n;
    for (std::size_t r = 0; r < R; ++r) {
      const T ar = a[r * k + p];
      for (std::size_t j = 0; j < W; ++j) acc[r][j] = madd(ar, bp[j], acc[r][j]);
    }
  }
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t j = 0; j < W; ++j) c[r * n + j] = acc[r][j];
  }
}

template <class T>
inline void gemm_column(const T* a, const T* b, T* c, std::size_t rows, std::size_t k, std::size_t n,
                        bool accumulate) {
  for (std::size_t r = 0; r < rows; ++r) {
    T acc = accumulate ? c[r * n] : T{0};
    for (std::size_t p = 0; p < k; ++p) acc = madd(a[r * k + p], b[p * n], acc);
    c[r * n] = acc;
  }
}

}  // namespace detail

/// C[m,n] (+)= A[m,k] * B[k,n]
template <class T>
void gemm(const T* __restrict a, const T* __restrict b, T* __restrict c, std::size_t m, std::size_t k,
          std::size_t n, bool accumulate) {
  constexpr std::size_t R = 4, W = 64 / sizeof(T) * 2;
  std::size_t i = 0;
  for (; i + R <= m; i += R) {
    std::size_t j = 0;
    for (; j + W <= n; j += W) detail::gemm_tile<T, R, W>(a + i * k, b + j, c + i * n + j, k, n, accumulate);
    for (; j < n; ++j) detail::gemm_column(a + i * k, b + j, c + i * n + j, R, k, n, accumulate);
  }
  for (; i < m; ++i) {
    std::size_t j = 0;
    for (; j + W <= n; j += W) detail::gemm_tile<T, 1, W>(a + i * k, b + j, c + i * n + j, k, n, accumulate);
    for (; j < n; ++j) detail::gemm_column(a + i * k, b + j, c + i * n + j, 1, k, n, accumulate);
  }
}

template <class T>
std::vector<T> transpose(const T* src, std::size_t rows, std::size_t cols) {
  std::vector<T> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = src[r * cols + c];
  }
  return out;
}

}  // namespace lcm::kernels
