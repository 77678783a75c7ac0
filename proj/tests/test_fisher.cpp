#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "mixred/families.hpp"
#include "mixred/fisher.hpp"
#include "mixred/rng.hpp"

using namespace mixred;

namespace {

Vec random_interior_simplex(Rng& rng, int d) {
  // rejection keeps every coordinate and the remainder well inside (0,1)
  for (;;) {
    Vec th(std::size_t(d), 0.0);
    double sum = 0.0;
    for (int i = 0; i < d; ++i) {
      th[std::size_t(i)] = 0.05 + 0.9 * rng.uniform01();
      sum += th[std::size_t(i)];
    }
    for (double& x : th) x /= (sum / (0.05 + 0.9 * rng.uniform01()));
    sum = 0.0;
    bool ok = true;
    for (double x : th) {
      ok &= x > 0.02 && x < 0.95;
      sum += x;
    }
    if (ok && sum < 0.95 && sum > 0.05) return th;
  }
}

}  // namespace

TEST_CASE("categorical fisher closed form") {
  auto fm = categorical_fisher(Vec{1.0 / 3, 1.0 / 3});
  CHECK(fm.info(0, 0) == doctest::Approx(6.0).epsilon(1e-12));
  CHECK(fm.info(0, 1) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(fm.info(1, 1) == doctest::Approx(6.0).epsilon(1e-12));

  auto b = categorical_fisher(Vec{0.5});
  CHECK(b.info(0, 0) == doctest::Approx(4.0).epsilon(1e-12));

  CHECK_THROWS_AS(categorical_fisher(Vec{1e-18}), std::domain_error);
}

TEST_CASE("structured determinant lemma vs LU") {
  CHECK(structured_det(Vec{1.0 / 3, 1.0 / 3}) == doctest::Approx(27.0).epsilon(1e-12));
  CHECK(structured_det(Vec{0.5}) == doctest::Approx(4.0).epsilon(1e-12));
  Rng rng(101);
  for (int trial = 0; trial < 100; ++trial) {
    int d = 1 + int(rng.bits() % 4);
    Vec th = random_interior_simplex(rng, d);
    double lemma = structured_det(th);
    double lu = lu_det(categorical_fisher(th).info);
    CHECK(lemma == doctest::Approx(lu).epsilon(1e-8));
  }
}

TEST_CASE("markov stationary distribution") {
  Matrix p(2, 2, {0.9, 0.1, 0.1, 0.9});
  Vec pi = markov_stationary(p);
  CHECK(pi[0] == doctest::Approx(0.5).epsilon(1e-10));

  Matrix q(2, 2, {0.5, 0.5, 0.25, 0.75});
  Vec pq = markov_stationary(q);
  CHECK(pq[0] == doctest::Approx(1.0 / 3).epsilon(1e-10));
  CHECK(pq[1] == doctest::Approx(2.0 / 3).epsilon(1e-10));

  Matrix u(2, 2, {0.5, 0.5, 0.5, 0.5});
  Vec pu = markov_stationary(u);
  CHECK(pu[0] == doctest::Approx(0.5).epsilon(1e-12));

  Matrix bad(2, 2, {1.0, 0.0, 0.5, 0.5});
  CHECK_THROWS_AS(markov_stationary(bad), std::domain_error);
}

TEST_CASE("markov fisher determinant formula") {
  Matrix u(2, 2, {0.5, 0.5, 0.5, 0.5});
  CHECK(markov_fisher_det(u) == doctest::Approx(4.0).epsilon(1e-10));
  Matrix p(2, 2, {0.9, 0.1, 0.1, 0.9});
  CHECK(markov_fisher_det(p) == doctest::Approx((0.5 / 0.09) * (0.5 / 0.09)).epsilon(1e-10));
  CHECK(markov_fisher_det(p) == doctest::Approx(30.8642).epsilon(1e-4));
}

TEST_CASE("markov fisher det is positive on random interior chains") {
  Rng rng(555);
  for (int trial = 0; trial < 50; ++trial) {
    double a = 0.05 + 0.9 * rng.uniform01();
    double b = 0.05 + 0.9 * rng.uniform01();
    Matrix p(2, 2, {a, 1 - a, b, 1 - b});
    CHECK(markov_fisher_det(p) > 0.0);
  }
}

TEST_CASE("linreg fisher") {
  SideInfoStream side;
  side.dim = 1;
  side.beta = 2.0;
  side.basis_at = [](int) { return Vec{1.0}; };
  auto fm = linreg_fisher(side, 17);
  CHECK(fm.info(0, 0) == doctest::Approx(2.0).epsilon(1e-12));

  SideInfoStream alt;
  alt.dim = 2;
  alt.beta = 1.0;
  alt.basis_at = [](int t) { return t % 2 == 1 ? Vec{1.0, 0.0} : Vec{0.0, 1.0}; };
  auto fa = linreg_fisher(alt, 2);
  CHECK(fa.info(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(fa.info(1, 1) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(fa.info(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("linreg fisher spectral norm is bounded by d * beta") {
  Rng rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    int d = 1 + int(rng.bits() % 4);
    double beta = 0.1 + 5.0 * rng.uniform01();
    std::uint64_t bseed = rng.bits();
    SideInfoStream side;
    side.dim = d;
    side.beta = beta;
    side.basis_at = [d, bseed](int t) {
      Vec phi(std::size_t(d), 0.0);
      for (int i = 0; i < d; ++i)
        phi[std::size_t(i)] =
            double(splitmix64(derive_seed(bseed, std::uint64_t(t)) + std::uint64_t(i)) >> 11) *
            0x1.0p-53;
      return phi;
    };
    long long n = 1 + (long long)(rng.bits() % 40);
    auto fm = linreg_fisher(side, n);
    CHECK(fm.info.symmetric(1e-8));
    CHECK(fm.spectral() <= d * beta + 1e-9);
  }
}

TEST_CASE("finite difference fisher: closed-form oracles") {
  auto bern = make_categorical_family(Vec{0.5});
  auto fd = finite_diff_fisher(bern, {0.5}, 1);
  CHECK(fd.info(0, 0) == doctest::Approx(4.0).epsilon(1e-3));

  auto tri = make_categorical_family(Vec{1.0 / 3, 1.0 / 3});
  auto fd2 = finite_diff_fisher(tri, {1.0 / 3, 1.0 / 3}, 1);
  CHECK(fd2.info(0, 0) == doctest::Approx(6.0).epsilon(1e-3));
  CHECK(fd2.info(0, 1) == doctest::Approx(3.0).epsilon(1e-3));
  CHECK(fd2.info.symmetric(1e-8));

  auto flat = std::make_shared<FlatFamily>(0.5, 4);
  auto fdf = finite_diff_fisher(flat, {0.5}, 1);
  CHECK(std::abs(fdf.info(0, 0)) < 1e-4);

  // stencil point outside the domain
  CHECK_THROWS_AS(finite_diff_fisher(bern, {1e-4}, 1), std::domain_error);
}

TEST_CASE("finite difference fisher agrees with closed form on random interior points") {
  Rng rng(303);
  for (int trial = 0; trial < 100; ++trial) {
    int d = 1 + int(rng.bits() % 4);
    Vec th = random_interior_simplex(rng, d);
    auto closed = categorical_fisher(th);
    auto fd = finite_diff_fisher(make_categorical_family(th), th, 1);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        double c = closed.info(std::size_t(i), std::size_t(j));
        CHECK(fd.info(std::size_t(i), std::size_t(j)) ==
              doctest::Approx(c).epsilon(1e-3));
      }
  }
}

TEST_CASE("mean KL: per-step, enumeration and forward recursion agree") {
  auto tri = make_categorical_family(Vec{0.25, 0.35});
  Vec th0 = {0.25, 0.35};
  Vec th = {0.3, 0.3};
  MeanKl per(tri, th0, 6, MeanKlMode::per_step);
  MeanKl enu(tri, th0, 6, MeanKlMode::enumeration);
  CHECK(per(th) == doctest::Approx(enu(th)).epsilon(1e-12));

  Matrix p(2, 2, {0.7, 0.3, 0.2, 0.8});
  auto [mfam, mtheta] = make_markov_family(p, 0);
  Vec mth = {0.6, 0.25};
  MeanKl fwd(mfam, mtheta, 8, MeanKlMode::markov_forward);
  MeanKl menu(mfam, mtheta, 8, MeanKlMode::enumeration);
  CHECK(fwd(mth) == doctest::Approx(menu(mth)).epsilon(1e-12));

  auto ce = std::make_shared<CounterexampleFamily>([](int t) { return 0.5 * t; });
  MeanKl cper(ce, {0.5}, 7, MeanKlMode::per_step);
  MeanKl cenu(ce, {0.5}, 7, MeanKlMode::enumeration);
  Vec cth = {0.55};
  CHECK(cper(cth) == doctest::Approx(cenu(cth)).epsilon(1e-12));
}

TEST_CASE("mean KL monte carlo tracks the exact value") {
  auto bern = make_categorical_family(Vec{0.3});
  MeanKl exact(bern, {0.3}, 10, MeanKlMode::per_step);
  MeanKl mc(bern, {0.3}, 10, MeanKlMode::monte_carlo, 20000, 99);
  Vec th = {0.4};
  CHECK(mc(th) == doctest::Approx(exact(th)).epsilon(0.03));
}

TEST_CASE("markov fisher det formula vs finite differences at n = 512") {
  Rng rng(909);
  for (int trial = 0; trial < 3; ++trial) {
    double a = 0.15 + 0.7 * rng.uniform01();
    double b = 0.15 + 0.7 * rng.uniform01();
    Matrix p(2, 2, {a, 1 - a, b, 1 - b});
    auto [fam, theta] = make_markov_family(p, 0);
    auto fd = finite_diff_fisher(fam, theta, 512);
    double formula = markov_fisher_det(p);
    CHECK(fd.det() == doctest::Approx(formula).epsilon(0.05));
  }
}

TEST_CASE("lambda_n examples") {
  auto flat = std::make_shared<FlatFamily>(0.5, 4);
  auto form = lambda_n(flat, {0.5}, 4, 1);
  CHECK(form.lambda == doctest::Approx(48.0).epsilon(0.02));

  auto bern = make_categorical_family(Vec{0.5});
  auto k2 = lambda_n(bern, {0.5}, 2, 1, 1e-3);
  CHECK(k2.lambda == doctest::Approx(4.0).epsilon(1e-4));

  CHECK_THROWS_AS(lambda_n(bern, {0.5}, 3, 1), std::domain_error);
  // second derivative of the categorical mean KL does not vanish: the k=4
  // precondition fails with the measured value
  CHECK_THROWS_AS(lambda_n(bern, {0.5}, 4, 1), std::domain_error);
}

TEST_CASE("lambda_n d=2 grid search reaches the spectral norm at k=2") {
  auto tri = make_categorical_family(Vec{1.0 / 3, 1.0 / 3});
  auto form = lambda_n(tri, {1.0 / 3, 1.0 / 3}, 2, 1, 1e-3, MeanKlMode::auto_select, 720);
  CHECK(form.lambda == doctest::Approx(9.0).epsilon(1e-2));
}

TEST_CASE("norm inequalities from the spectral lemma") {
  Rng rng(111);
  for (int trial = 0; trial < 200; ++trial) {
    int d = 1 + int(rng.bits() % 5);
    // random SPD A = B^T B + eps I, random B
    Matrix b(std::size_t(d), std::size_t(d));
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        b(std::size_t(i), std::size_t(j)) = 2.0 * rng.uniform01() - 1.0;
    Matrix a(std::size_t(d), std::size_t(d));
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        double s = 0.0;
        for (int k = 0; k < d; ++k)
          s += b(std::size_t(k), std::size_t(i)) * b(std::size_t(k), std::size_t(j));
        a(std::size_t(i), std::size_t(j)) = s + (i == j ? 0.05 : 0.0);
      }
    Vec x(std::size_t(d), 0.0);
    for (int i = 0; i < d; ++i) x[std::size_t(i)] = 2.0 * rng.uniform01() - 1.0;

    double x2 = dot(x, x);
    double xa = quadratic_form(a, x);
    double spec_ainv = spectral_norm(spd_inverse(a));
    CHECK(x2 <= xa * spec_ainv + 1e-9);

    // symmetric B for the second inequality; the tight form uses spec(B)^1,
    // the squared form additionally holds once spec(B) >= 1
    Matrix bs(std::size_t(d), std::size_t(d));
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        bs(std::size_t(i), std::size_t(j)) =
            0.5 * (b(std::size_t(i), std::size_t(j)) + b(std::size_t(j), std::size_t(i)));
    double xb = quadratic_form(bs, x);
    double spec_b = spectral_norm(bs);
    CHECK(xb <= x2 * spec_b + 1e-9);
    if (spec_b >= 1.0) CHECK(xb <= x2 * spec_b * spec_b + 1e-9);
  }
}
