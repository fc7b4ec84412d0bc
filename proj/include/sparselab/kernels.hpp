#pragma once

// Dense row-major kernels used by the autodiff ops.
//
// Two implementations are kept side by side:
//   serial::  straightforward loops, the reference the tests compare against.
//   omp::     OpenMP versions that split work over independent output rows.
//
// Every output element is reduced sequentially by index in both versions, so
// the two are bit-identical (the build disables FP contraction). The public
// entry points at namespace scope dispatch to omp:: when OpenMP is enabled.

#include <cstddef>
#include <span>

namespace sparselab::kernels {

namespace serial {

// c[m×n] = a[m×k] · b[k×n]
void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n);
// c[m×n] = a[m×k] · b[n×k]ᵀ
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n);
// c[m×n] = a[k×m]ᵀ · b[k×n]
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n);
// Row-wise softmax with max subtraction; returns false if a row has no finite entry.
bool softmax_rows(std::span<const double> x, std::span<double> y, std::size_t m, std::size_t n);

}  // namespace serial

namespace omp {

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n);
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n);
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n);
bool softmax_rows(std::span<const double> x, std::span<double> y, std::size_t m, std::size_t n);

}  // namespace omp

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n);
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n);
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n);
bool softmax_rows(std::span<const double> x, std::span<double> y, std::size_t m, std::size_t n);

/// True when the library was built with OpenMP.
bool parallel_enabled();

}  // namespace sparselab::kernels
