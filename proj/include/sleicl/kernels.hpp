#pragma once

#include <cstddef>
#include <string_view>

// Vector/matrix inner loops shared by the embedder, the clustering code and
// the neural network. Each kernel has a scalar reference implementation and
// an AVX2+FMA variant; the active set is chosen once at startup from CPU
// features (override with SLEICL_FORCE_SCALAR=1 or force_scalar()).
//
// The two variants are equivalence-tested against each other; they may
// differ in the last bits because the vector paths use fused multiply-add
// and lane-wise partial sums.

namespace sleicl::kernels {

namespace scalar {

double dot(const double* a, const double* b, size_t n);
double squared_l2(const double* a, const double* b, size_t n);
void axpy(double alpha, const double* x, double* y, size_t n);

/// C(m x n) = A(m x k) * B(k x n), row-major. C is overwritten.
void matmul_nn(const double* a, const double* b, double* c, size_t m, size_t k,
               size_t n);

}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
namespace avx2 {

double dot(const double* a, const double* b, size_t n);
double squared_l2(const double* a, const double* b, size_t n);
void axpy(double alpha, const double* x, double* y, size_t n);
void matmul_nn(const double* a, const double* b, double* c, size_t m, size_t k,
               size_t n);

}  // namespace avx2
#endif

// Dispatched entry points.
double dot(const double* a, const double* b, size_t n);
double squared_l2(const double* a, const double* b, size_t n);
void axpy(double alpha, const double* x, double* y, size_t n);
void matmul_nn(const double* a, const double* b, double* c, size_t m, size_t k,
               size_t n);

/// B(k x n) -> BT(n x k), row-major.
void transpose(const double* src, double* dst, size_t rows, size_t cols);

/// C = A * B^T, via transpose + matmul_nn. B is n x k row-major.
void matmul_nt(const double* a, const double* b, double* c, size_t m, size_t k,
               size_t n);

/// C = A^T * B with A m-major: A is k x m row-major, C is m x n.
void matmul_tn(const double* a, const double* b, double* c, size_t m, size_t k,
               size_t n);

/// Name of the active variant ("avx2" or "scalar").
std::string_view active_variant();

/// Test hook: pin dispatch to the scalar reference kernels.
void force_scalar(bool on);

}  // namespace sleicl::kernels
