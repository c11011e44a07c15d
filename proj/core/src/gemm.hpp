#pragma once

// Row-major GEMM kernels. Each output element accumulates over k in
// ascending order whatever the worker count, so results are reproducible.

#include <algorithm>
#include <cstddef>
#include <vector>

#include "dgcw/memory.hpp"
#include "dgcw/parallel.hpp"

namespace dgcw::kernel {

// C[M,N] (+)= A[M,K] * B[K,N]
template <typename T>
void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const T* A, std::size_t lda, const T* B,
             std::size_t ldb, T* C, std::size_t ldc, bool accumulate) {
  std::size_t rows_per_chunk = std::max<std::size_t>(1, 32768 / std::max<std::size_t>(1, N * K));
  parallel_for(M, rows_per_chunk, [&](std::size_t i0, std::size_t i1) {
    constexpr std::size_t kBlock = 128;
    for (std::size_t i = i0; i < i1; ++i) {
      T* c = C + i * ldc;
      if (!accumulate) std::fill(c, c + N, T(0));
    }
    for (std::size_t k0 = 0; k0 < K; k0 += kBlock) {
      std::size_t k1 = std::min(K, k0 + kBlock);
      for (std::size_t i = i0; i < i1; ++i) {
        T* __restrict c = C + i * ldc;
        const T* a = A + i * lda;
        for (std::size_t k = k0; k < k1; ++k) {
          const T av = a[k];
          const T* __restrict b = B + k * ldb;
          for (std::size_t j = 0; j < N; ++j) c[j] += av * b[j];
        }
      }
    }
  });
}

// C[M,N] (+)= A[K,M]^T * B[K,N]
template <typename T>
void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const T* A, std::size_t lda, const T* B,
             std::size_t ldb, T* C, std::size_t ldc, bool accumulate) {
  std::size_t rows_per_chunk = std::max<std::size_t>(1, 32768 / std::max<std::size_t>(1, N * K));
  parallel_for(M, rows_per_chunk, [&](std::size_t i0, std::size_t i1) {
    if (!accumulate)
      for (std::size_t i = i0; i < i1; ++i) std::fill(C + i * ldc, C + i * ldc + N, T(0));
    for (std::size_t k = 0; k < K; ++k) {
      const T* __restrict b = B + k * ldb;
      const T* a = A + k * lda;
      for (std::size_t i = i0; i < i1; ++i) {
        const T av = a[i];
        T* __restrict c = C + i * ldc;
        for (std::size_t j = 0; j < N; ++j) c[j] += av * b[j];
      }
    }
  });
}

// C[M,N] (+)= A[M,K] * B[N,K]^T
template <typename T>
void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const T* A, std::size_t lda, const T* B,
             std::size_t ldb, T* C, std::size_t ldc, bool accumulate) {
  Buffer<T> bt(K * N);
  for (std::size_t j = 0; j < N; ++j)
    for (std::size_t k = 0; k < K; ++k) bt[k * N + j] = B[j * ldb + k];
  gemm_nn(M, N, K, A, lda, bt.data(), N, C, ldc, accumulate);
}

}  // namespace dgcw::kernel
