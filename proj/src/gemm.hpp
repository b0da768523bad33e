#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstring>
#include <vector>

namespace srn::kernels {

namespace detail {

#if defined(__AVX512F__)
constexpr std::size_t kVectorBytes = 64;
#else
constexpr std::size_t kVectorBytes = 32;
#endif

template <typename T>
using Vec [[gnu::vector_size(kVectorBytes)]] = T;

template <typename T>
constexpr std::size_t kLanes = kVectorBytes / sizeof(T);

template <typename T>
inline Vec<T> load(const T* p) {
  Vec<T> v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

template <typename T>
inline void store(T* p, const Vec<T>& v) {
  std::memcpy(p, &v, sizeof v);
}

// Rows [i0, i0+R) x W vectors of columns from j0. Every element is the fused
// chain c + a_0 b_0 + a_1 b_1 + ... in ascending k, whatever the tile shape,
// so a row's values never depend on which rows share its tile.
template <typename T, std::size_t R, std::size_t W>
inline void tile(std::size_t k, std::size_t n, const T* __restrict a, std::size_t ars,
                 std::size_t acs, const T* __restrict b, T* __restrict c, std::size_t i0,
                 std::size_t j0) {
  constexpr std::size_t L = kLanes<T>;
  Vec<T> acc[R][W];
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t w = 0; w < W; ++w) acc[r][w] = load(c + (i0 + r) * n + j0 + w * L);
  for (std::size_t p = 0; p < k; ++p) {
    Vec<T> bp[W];
    for (std::size_t w = 0; w < W; ++w) bp[w] = load(b + p * n + j0 + w * L);
    for (std::size_t r = 0; r < R; ++r) {
      const T ap = a[(i0 + r) * ars + p * acs];
      for (std::size_t w = 0; w < W; ++w) acc[r][w] = ap * bp[w] + acc[r][w];
    }
  }
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t w = 0; w < W; ++w) store<T>(c + (i0 + r) * n + j0 + w * L, acc[r][w]);
}

template <typename T>
inline void tile_scalar(std::size_t k, std::size_t n, const T* __restrict a, std::size_t ars,
                        std::size_t acs, const T* __restrict b, T* __restrict c, std::size_t i0,
                        std::size_t rows, std::size_t j0) {
  for (std::size_t r = 0; r < rows; ++r) {
    T* ci = c + (i0 + r) * n;
    const T* ai = a + (i0 + r) * ars;
    for (std::size_t j = j0; j < n; ++j) {
      T acc = ci[j];
      for (std::size_t p = 0; p < k; ++p) acc = std::fma(ai[p * acs], b[p * n + j], acc);
      ci[j] = acc;
    }
  }
}

template <typename T, std::size_t R>
inline void row_block(std::size_t k, std::size_t n, const T* a, std::size_t ars,
                      std::size_t acs, const T* b, T* c, std::size_t i0) {
  constexpr std::size_t L = kLanes<T>;
  std::size_t j = 0;
  for (; j + 2 * L <= n; j += 2 * L) tile<T, R, 2>(k, n, a, ars, acs, b, c, i0, j);
  for (; j + L <= n; j += L) tile<T, R, 1>(k, n, a, ars, acs, b, c, i0, j);
  if (j < n) tile_scalar(k, n, a, ars, acs, b, c, i0, R, j);
}

// c[m,n] += A·b where A(i,p) = a[i*ars + p*acs].
template <typename T>
void gemm_strided(std::size_t m, std::size_t k, std::size_t n, const T* a, std::size_t ars,
                  std::size_t acs, const T* b, T* c) {
  std::size_t i = 0;
  for (; i + 8 <= m; i += 8) row_block<T, 8>(k, n, a, ars, acs, b, c, i);
  for (; i + 4 <= m; i += 4) row_block<T, 4>(k, n, a, ars, acs, b, c, i);
  for (; i < m; ++i) row_block<T, 1>(k, n, a, ars, acs, b, c, i);
}

}  // namespace detail

// c[m,n] += a[m,k]·b[k,n]. Each output element accumulates over k in
// ascending order with fused multiply-adds, independent of m.
template <typename T>
void gemm_acc(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c) {
  detail::gemm_strided(m, k, n, a, k, 1, b, c);
}

template <typename T>
std::vector<T> transpose(std::size_t rows, std::size_t cols, const T* a) {
  constexpr std::size_t B = 32;
  std::vector<T> out(rows * cols);
  for (std::size_t i0 = 0; i0 < rows; i0 += B)
    for (std::size_t j0 = 0; j0 < cols; j0 += B) {
      const std::size_t i1 = std::min(rows, i0 + B), j1 = std::min(cols, j0 + B);
      for (std::size_t i = i0; i < i1; ++i)
        for (std::size_t j = j0; j < j1; ++j) out[j * rows + i] = a[i * cols + j];
    }
  return out;
}

// c[k,n] += a[m,k]ᵀ·b[m,n]
template <typename T>
void gemm_tn_acc(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c) {
  detail::gemm_strided(k, m, n, a, 1, k, b, c);
}

// c[m,k] += a[m,n]·b[k,n]ᵀ
template <typename T>
void gemm_nt_acc(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  const auto bt = transpose(k, n, b);
  gemm_acc(m, n, k, a, bt.data(), c);
}

}  // namespace srn::kernels
