#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "mixred/common.hpp"
#include "mixred/linalg.hpp"
#include "mixred/rng.hpp"

using namespace mixred;

TEST_CASE("log_sum_exp basics") {
  Vec xs = {std::log(0.25), std::log(0.5), std::log(0.25)};
  CHECK(log_sum_exp(xs) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(log_sum_exp(kNegInf, std::log(2.0)) == doctest::Approx(std::log(2.0)));
  Vec inf = {kNegInf, kNegInf};
  CHECK(log_sum_exp(inf) == kNegInf);
}

TEST_CASE("kahan summation beats naive on adversarial input") {
  KahanSum k;
  double naive = 0.0;
  for (int i = 0; i < 1000000; ++i) {
    k.add(1e-10);
    naive += 1e-10;
  }
  k.add(1.0);
  naive += 1.0;
  for (int i = 0; i < 1000000; ++i) k.add(-1e-10);
  CHECK(k.value() == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("lu determinant on known matrices") {
  CHECK(lu_det(Matrix::identity(3)) == doctest::Approx(1.0));
  Matrix m(2, 2, {6, 3, 3, 6});
  CHECK(lu_det(m) == doctest::Approx(27.0).epsilon(1e-12));
  Matrix sing(2, 2, {1, 2, 2, 4});
  CHECK(lu_det(sing) == doctest::Approx(0.0));
  CHECK_THROWS_AS(lu_det(Matrix(2, 3)), std::domain_error);
}

// cofactor expansion as an independent determinant oracle
static double cofactor_det(const Matrix& m) {
  std::size_t n = m.rows();
  if (n == 1) return m(0, 0);
  double det = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    Matrix minor(n - 1, n - 1);
    for (std::size_t i = 1; i < n; ++i) {
      std::size_t jj = 0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == c) continue;
        minor(i - 1, jj++) = m(i, j);
      }
    }
    det += (c % 2 == 0 ? 1.0 : -1.0) * m(0, c) * cofactor_det(minor);
  }
  return det;
}

TEST_CASE("lu matches cofactor expansion on random matrices") {
  Rng rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    std::size_t n = 1 + std::size_t(rng.bits() % 4);
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) m(i, j) = 2.0 * rng.uniform01() - 1.0;
    double expect = cofactor_det(m);
    CHECK(lu_det(m) == doctest::Approx(expect).epsilon(1e-9));
  }
}

TEST_CASE("symmetric eigenvalues and spectral norm") {
  Matrix m(2, 2, {6, 3, 3, 6});
  Vec ev = sym_eigenvalues(m);
  CHECK(ev[0] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(ev[1] == doctest::Approx(9.0).epsilon(1e-12));
  CHECK(spectral_norm(m) == doctest::Approx(9.0).epsilon(1e-12));
  CHECK(spectral_norm(Matrix::identity(3)) == doctest::Approx(1.0));
  Matrix asym(2, 2, {1, 2, 0, 1});
  CHECK_THROWS_AS(spectral_norm(asym), std::domain_error);
}

TEST_CASE("cholesky solve round trip") {
  Matrix a(3, 3, {4, 1, 0.5, 1, 3, 0.2, 0.5, 0.2, 2});
  Matrix l = cholesky(a);
  Vec b = {1.0, -2.0, 0.5};
  Vec x = cholesky_solve(l, b);
  Vec back = a.mul(x);
  for (int i = 0; i < 3; ++i) CHECK(back[std::size_t(i)] == doctest::Approx(b[std::size_t(i)]).epsilon(1e-10));
  Matrix not_pd(2, 2, {1, 2, 2, 1});
  CHECK_THROWS_AS(cholesky(not_pd), NumericError);
}

TEST_CASE("rng determinism and seed splitting") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.uniform01() == b.uniform01());
  CHECK(derive_seed(1, 0) != derive_seed(1, 1));
  CHECK(derive_seed(1, 0) != derive_seed(2, 0));
  CHECK(derive_seed(7, 3) == derive_seed(7, 3));
}

TEST_CASE("rng normal moments") {
  Rng rng(2024);
  const int n = 200000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    double z = rng.normal();
    sum += z;
    sq += z * z;
  }
  CHECK(sum / n == doctest::Approx(0.0).epsilon(0.01));
  CHECK(std::abs(sum / n) < 3.5 / std::sqrt(double(n)));
  CHECK(sq / n == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("matrix csv uses 12 significant digits") {
  Matrix m(1, 2, {1.0 / 3.0, 2.0});
  CHECK(m.to_csv() == "0.333333333333,2\n");
}
