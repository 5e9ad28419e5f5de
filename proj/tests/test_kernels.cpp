#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "sleicl/common.hpp"
#include "sleicl/kernels.hpp"

using namespace sleicl;

namespace {

std::vector<double> random_vec(std::mt19937_64& rng, size_t n) {
  std::vector<double> out(n);
  for (double& v : out) v = 2.0 * detrand::uniform01(rng) - 1.0;
  return out;
}

bool close_rel(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace

TEST_SUITE("kernels") {

TEST_CASE("dispatched kernels match the scalar reference") {
  std::mt19937_64 rng(42);
  for (size_t n : {size_t{1}, size_t{3}, size_t{4}, size_t{7}, size_t{8},
                   size_t{31}, size_t{64}, size_t{257}, size_t{768}}) {
    const auto a = random_vec(rng, n);
    const auto b = random_vec(rng, n);
    CHECK(close_rel(kernels::dot(a.data(), b.data(), n),
                    kernels::scalar::dot(a.data(), b.data(), n), 1e-12));
    CHECK(close_rel(kernels::squared_l2(a.data(), b.data(), n),
                    kernels::scalar::squared_l2(a.data(), b.data(), n), 1e-12));

    auto y1 = random_vec(rng, n);
    auto y2 = y1;
    kernels::axpy(0.37, a.data(), y1.data(), n);
    kernels::scalar::axpy(0.37, a.data(), y2.data(), n);
    for (size_t i = 0; i < n; ++i) CHECK(close_rel(y1[i], y2[i], 1e-12));
  }
}

TEST_CASE("matmul_nn matches the scalar reference on odd shapes") {
  std::mt19937_64 rng(7);
  for (auto [m, k, n] : {std::tuple<size_t, size_t, size_t>{1, 1, 1},
                         {2, 3, 2},
                         {5, 7, 3},
                         {4, 16, 8},
                         {9, 33, 17},
                         {13, 257, 31}}) {
    const auto a = random_vec(rng, m * k);
    const auto b = random_vec(rng, k * n);
    std::vector<double> c1(m * n), c2(m * n);
    kernels::matmul_nn(a.data(), b.data(), c1.data(), m, k, n);
    kernels::scalar::matmul_nn(a.data(), b.data(), c2.data(), m, k, n);
    for (size_t i = 0; i < m * n; ++i) CHECK(close_rel(c1[i], c2[i], 1e-11));
  }
}

TEST_CASE("matmul_nn hand-checked values") {
  // [1 2; 3 4] * [5 6; 7 8] = [19 22; 43 50]
  const std::vector<double> a{1, 2, 3, 4};
  const std::vector<double> b{5, 6, 7, 8};
  std::vector<double> c(4);
  kernels::matmul_nn(a.data(), b.data(), c.data(), 2, 2, 2);
  CHECK(c[0] == doctest::Approx(19));
  CHECK(c[1] == doctest::Approx(22));
  CHECK(c[2] == doctest::Approx(43));
  CHECK(c[3] == doctest::Approx(50));
}

TEST_CASE("transposed products agree with explicit transposition") {
  std::mt19937_64 rng(11);
  const size_t m = 6, k = 5, n = 4;
  const auto a = random_vec(rng, m * k);   // m x k
  const auto bt = random_vec(rng, n * k);  // n x k, used as B^T operand
  std::vector<double> via_nt(m * n), expected(m * n), b(k * n);
  kernels::matmul_nt(a.data(), bt.data(), via_nt.data(), m, k, n);
  kernels::transpose(bt.data(), b.data(), n, k);
  kernels::scalar::matmul_nn(a.data(), b.data(), expected.data(), m, k, n);
  for (size_t i = 0; i < m * n; ++i) CHECK(close_rel(via_nt[i], expected[i], 1e-11));

  // A^T(kxm becomes mxk) * B: feed A as k x m.
  const auto a_km = random_vec(rng, k * m);
  const auto b2 = random_vec(rng, k * n);
  std::vector<double> via_tn(m * n), at(m * k), expected2(m * n);
  kernels::matmul_tn(a_km.data(), b2.data(), via_tn.data(), m, k, n);
  kernels::transpose(a_km.data(), at.data(), k, m);
  kernels::scalar::matmul_nn(at.data(), b2.data(), expected2.data(), m, k, n);
  for (size_t i = 0; i < m * n; ++i)
    CHECK(close_rel(via_tn[i], expected2[i], 1e-11));
}

TEST_CASE("transpose round-trips") {
  std::mt19937_64 rng(3);
  const size_t r = 37, c = 19;
  const auto src = random_vec(rng, r * c);
  std::vector<double> once(r * c), twice(r * c);
  kernels::transpose(src.data(), once.data(), r, c);
  kernels::transpose(once.data(), twice.data(), c, r);
  CHECK(twice == src);
}

TEST_CASE("force_scalar pins the dispatch") {
  kernels::force_scalar(true);
  CHECK(kernels::active_variant() == "scalar");
  kernels::force_scalar(false);
}

}  // TEST_SUITE
