#include "sleicl/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <vector>

namespace sleicl::kernels {

namespace scalar {

double dot(const double* a, const double* b, size_t n) {
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double squared_l2(const double* a, const double* b, size_t n) {
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

void axpy(double alpha, const double* x, double* y, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void matmul_nn(const double* a, const double* b, double* c, size_t m, size_t k,
               size_t n) {
  for (size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (size_t j = 0; j < n; ++j) crow[j] = 0.0;
    for (size_t kk = 0; kk < k; ++kk) {
      const double av = a[i * k + kk];
      const double* brow = b + kk * n;
      for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace scalar

namespace {

struct Ops {
  double (*dot)(const double*, const double*, size_t);
  double (*squared_l2)(const double*, const double*, size_t);
  void (*axpy)(double, const double*, double*, size_t);
  void (*matmul_nn)(const double*, const double*, double*, size_t, size_t, size_t);
  const char* name;
};

constexpr Ops kScalarOps{scalar::dot, scalar::squared_l2, scalar::axpy,
                         scalar::matmul_nn, "scalar"};

bool avx2_available() {
#if (defined(__x86_64__) || defined(_M_X64)) && defined(__GNUC__)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Ops detect_ops() {
  if (const char* env = std::getenv("SLEICL_FORCE_SCALAR");
      env && env[0] == '1') {
    return kScalarOps;
  }
#if defined(__x86_64__) || defined(_M_X64)
  if (avx2_available()) {
    return Ops{avx2::dot, avx2::squared_l2, avx2::axpy, avx2::matmul_nn,
               "avx2"};
  }
#endif
  return kScalarOps;
}

Ops g_ops = detect_ops();
std::atomic<bool> g_force_scalar{false};

inline const Ops& active() {
  static const Ops detected = g_ops;
  return g_force_scalar.load(std::memory_order_relaxed) ? kScalarOps : detected;
}

}  // namespace

double dot(const double* a, const double* b, size_t n) {
  return active().dot(a, b, n);
}

double squared_l2(const double* a, const double* b, size_t n) {
  return active().squared_l2(a, b, n);
}

void axpy(double alpha, const double* x, double* y, size_t n) {
  active().axpy(alpha, x, y, n);
}

void matmul_nn(const double* a, const double* b, double* c, size_t m, size_t k,
               size_t n) {
  active().matmul_nn(a, b, c, m, k, n);
}

void transpose(const double* src, double* dst, size_t rows, size_t cols) {
  constexpr size_t kBlock = 32;
  for (size_t i0 = 0; i0 < rows; i0 += kBlock) {
    const size_t i1 = std::min(rows, i0 + kBlock);
    for (size_t j0 = 0; j0 < cols; j0 += kBlock) {
      const size_t j1 = std::min(cols, j0 + kBlock);
      for (size_t i = i0; i < i1; ++i)
        for (size_t j = j0; j < j1; ++j) dst[j * rows + i] = src[i * cols + j];
    }
  }
}

void matmul_nt(const double* a, const double* b, double* c, size_t m, size_t k,
               size_t n) {
  std::vector<double> bt(k * n);
  transpose(b, bt.data(), n, k);
  matmul_nn(a, bt.data(), c, m, k, n);
}

void matmul_tn(const double* a, const double* b, double* c, size_t m, size_t k,
               size_t n) {
  std::vector<double> at(m * k);
  transpose(a, at.data(), k, m);
  matmul_nn(at.data(), b, c, m, k, n);
}

std::string_view active_variant() { return active().name; }

void force_scalar(bool on) { g_force_scalar.store(on, std::memory_order_relaxed); }

}  // namespace sleicl::kernels
