#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "mixred/families.hpp"
#include "mixred/priors.hpp"
#include "mixred/rng.hpp"

using namespace mixred;

TEST_CASE("categorical conditionals") {
  auto fam = make_categorical_family(Vec{0.5});
  CHECK(std::exp(fam->log_conditional(Vec{0.5}, {}, 1, 1)) == doctest::Approx(0.5));
  CHECK(std::exp(fam->log_conditional(Vec{0.5}, {}, 7, 0)) == doctest::Approx(0.5));

  auto tri = make_categorical_family(Vec{1.0 / 3, 1.0 / 3});
  for (int k = 0; k < 3; ++k)
    CHECK(std::exp(tri->log_conditional(Vec{1.0 / 3, 1.0 / 3}, {}, 1, k)) ==
          doctest::Approx(1.0 / 3));

  CHECK_THROWS_AS(make_categorical_family(Vec{1.2}), std::domain_error);
  CHECK_THROWS_AS(make_categorical_family(Vec{0.0}), std::domain_error);
  CHECK_THROWS_AS(make_categorical_family(Vec{0.6, 0.5}), std::domain_error);
}

TEST_CASE("markov family") {
  Matrix p(2, 2, {0.9, 0.1, 0.1, 0.9});
  auto [fam, theta] = make_markov_family(p, 0);
  CHECK(fam->dim() == 2);
  CHECK(std::exp(fam->log_conditional(theta, {}, 1, 0)) == doctest::Approx(0.9));
  std::vector<int> hist = {0, 1};
  CHECK(std::exp(fam->log_conditional(theta, hist, 3, 1)) == doctest::Approx(0.9));

  Matrix uniform(2, 2, {0.5, 0.5, 0.5, 0.5});
  auto [ufam, utheta] = make_markov_family(uniform, 1);
  for (int j = 0; j < 2; ++j) {
    std::vector<int> h = {j};
    for (int k = 0; k < 2; ++k)
      CHECK(std::exp(ufam->log_conditional(utheta, h, 2, k)) == doctest::Approx(0.5));
  }

  Matrix bad(2, 2, {0.5, 0.4, 0.5, 0.5});
  CHECK_THROWS_AS(make_markov_family(bad, 0), std::domain_error);
  Matrix zero(2, 2, {1.0, 0.0, 0.5, 0.5});
  CHECK_THROWS_AS(make_markov_family(zero, 0), std::domain_error);
}

TEST_CASE("counterexample family: formula and history independence") {
  CounterexampleFamily fam([](int) { return 4.0; });
  // theta = 0.5: p(1) = 0.5 for every schedule and step
  CHECK(std::exp(fam.log_conditional(Vec{0.5}, {}, 1, 1)) == doctest::Approx(0.5));
  CHECK(std::exp(fam.log_conditional(Vec{0.5}, {}, 99, 1)) == doctest::Approx(0.5));
  // theta = 0.75, a = 4: min(1, 0.75 + 4 * 0.0625) = 1 (clamped away from log 0)
  CHECK(std::exp(fam.log_conditional(Vec{0.75}, {}, 1, 1)) ==
        doctest::Approx(1.0).epsilon(1e-9));

  CounterexampleFamily unit([](int) { return 1.0; });
  CHECK(std::exp(unit.log_conditional(Vec{0.6}, {}, 3, 1)) == doctest::Approx(0.61));

  // conditionals ignore the history; only t matters
  CounterexampleFamily grow([](int t) { return double(t); });
  std::vector<int> h1 = {0, 1, 1};
  std::vector<int> h2 = {1, 0, 0};
  CHECK(grow.log_conditional(Vec{0.7}, h1, 4, 1) ==
        grow.log_conditional(Vec{0.7}, h2, 4, 1));

  CounterexampleFamily neg([](int) { return -1.0; });
  CHECK_THROWS_AS(neg.log_conditional(Vec{0.5}, {}, 1, 1), std::domain_error);
  CHECK_THROWS_AS(fam.check_theta(Vec{1.5}), std::domain_error);
}

TEST_CASE("flat family") {
  FlatFamily fam(0.5, 4);
  CHECK(std::exp(fam.log_conditional(Vec{0.5}, {}, 1, 1)) == doctest::Approx(0.5));
  CHECK(std::exp(fam.log_conditional(Vec{0.6}, {}, 1, 1)) == doctest::Approx(0.51));
  CHECK_THROWS_AS(FlatFamily(0.5, 5), std::domain_error);
  CHECK_THROWS_AS(FlatFamily(0.5, 2), std::domain_error);
}

TEST_CASE("flat family mean KL matches the symbolic expansion") {
  // KL(Bern(1/2) || Bern(1/2 + u^2)) = -0.5 ln(1 - 4 u^4) ~ 2 u^4
  FlatFamily fam(0.5, 4);
  for (double u : {0.05, 0.1, 0.2}) {
    double p = 0.5 + u * u;
    double kl = 0.5 * std::log(0.5 / p) + 0.5 * std::log(0.5 / (1.0 - p));
    CHECK(kl == doctest::Approx(-0.5 * std::log1p(-4.0 * std::pow(u, 4.0))).epsilon(1e-12));
  }
}

TEST_CASE("countable family validation") {
  auto b13 = make_categorical_family(Vec{1.0 / 3});
  auto b23 = make_categorical_family(Vec{2.0 / 3});
  std::vector<CountableMember> members = {{b13, {1.0 / 3}}, {b23, {2.0 / 3}}};
  CountableFamily fam(members, {0.5, 0.5});
  CHECK(fam.size() == 2);
  CHECK(fam.mass(1) == doctest::Approx(0.5));

  CHECK_THROWS_AS(CountableFamily({}, {}), std::domain_error);
  CHECK_THROWS_AS(CountableFamily(members, {0.3, 0.3}), std::domain_error);
}

TEST_CASE("regression family") {
  SideInfoStream side;
  side.dim = 1;
  side.beta = 1.0;
  side.basis_at = [](int) { return Vec{1.0}; };
  RegressionFamily fam(side, Vec{0.0});
  // standard normal log density at 0
  CHECK(fam.log_conditional(Vec{0.0}, 1, 0.0) ==
        doctest::Approx(-0.5 * std::log(2.0 * kPi)).epsilon(1e-12));

  SideInfoStream side4 = side;
  side4.beta = 4.0;
  RegressionFamily fam4(side4, Vec{2.0});
  CHECK(std::exp(fam4.log_conditional(Vec{2.0}, 1, 2.0)) ==
        doctest::Approx(std::sqrt(4.0 / (2.0 * kPi))).epsilon(1e-12));

  SideInfoStream bad = side;
  bad.beta = 0.0;
  CHECK_THROWS_AS(RegressionFamily(bad, Vec{0.0}), std::domain_error);
  CHECK_THROWS_AS(RegressionFamily(side, Vec{0.0, 1.0}), std::domain_error);
}

TEST_CASE("conditional probabilities normalize across random histories") {
  Rng rng(7);
  auto tri = make_categorical_family(Vec{0.2, 0.5});
  Matrix p(3, 3, {0.2, 0.3, 0.5, 0.4, 0.4, 0.2, 0.25, 0.5, 0.25});
  auto [markov, mtheta] = make_markov_family(p, 2);
  CounterexampleFamily ce([](int t) { return 0.5 * t; });
  FlatFamily flat(0.5, 4);

  auto check_family = [&](const DiscreteFamily& fam, const Vec& theta) {
    for (int trial = 0; trial < 20; ++trial) {
      int len = int(rng.bits() % 6);
      std::vector<int> hist;
      for (int i = 0; i < len; ++i) hist.push_back(int(rng.bits() % std::uint64_t(fam.alphabet())));
      Vec probs = fam.conditional_probs(theta, hist, len + 1);
      double sum = 0.0;
      for (double q : probs) sum += q;
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
  };
  check_family(*tri, Vec{0.2, 0.5});
  check_family(*markov, mtheta);
  check_family(ce, Vec{0.3});
  check_family(flat, Vec{0.55});
}

TEST_CASE("sampling: determinism and marginal frequencies") {
  auto fam = make_categorical_family(Vec{0.5});
  auto s1 = sample_sequence(*fam, Vec{0.5}, 1000, 123);
  auto s2 = sample_sequence(*fam, Vec{0.5}, 1000, 123);
  CHECK(s1 == s2);
  auto s3 = sample_sequence(*fam, Vec{0.5}, 1000, 124);
  CHECK(s1 != s3);

  const int n = 100000;
  auto seq = sample_sequence(*fam, Vec{0.5}, n, 2718);
  double ones = 0;
  for (int x : seq) ones += x;
  CHECK(ones / n > 0.494);
  CHECK(ones / n < 0.506);
}

TEST_CASE("sampling: uniform chain transition counts within 3 sigma") {
  Matrix p(2, 2, {0.5, 0.5, 0.5, 0.5});
  auto [fam, theta] = make_markov_family(p, 0);
  const int n = 40000;
  auto seq = sample_sequence(*fam, theta, n, 5150);
  long long counts[2][2] = {{0, 0}, {0, 0}};
  int prev = 0;
  for (int x : seq) {
    counts[prev][x]++;
    prev = x;
  }
  // each of the 4 cells is ~Binomial(n/2 visits, 1/2)
  for (int j = 0; j < 2; ++j) {
    long long row = counts[j][0] + counts[j][1];
    double sigma = std::sqrt(double(row) * 0.25);
    CHECK(std::abs(double(counts[j][0]) - 0.5 * double(row)) < 3.0 * sigma);
  }
}

TEST_CASE("sampled log-loss matches conditional entropy within 3 SE") {
  auto fam = make_categorical_family(Vec{0.3});
  const int s = 4000, n = 16;
  double entropy = -(0.3 * std::log(0.3) + 0.7 * std::log(0.7));
  double sum = 0.0, sq = 0.0;
  for (int r = 0; r < s; ++r) {
    auto [seq, logp] = sample_sequence_with_logp(*fam, Vec{0.3}, n, derive_seed(31, std::uint64_t(r)));
    double x = -logp / n;
    sum += x;
    sq += x * x;
  }
  double mean = sum / s;
  double se = std::sqrt((sq / s - mean * mean) / s);
  CHECK(std::abs(mean - entropy) < 3.0 * se);
}

// ---------------------------------------------------------------------------
// priors

TEST_CASE("jeffreys categorical density values") {
  auto prior = jeffreys_categorical(1);
  // d=1, theta=1/2: w = 2/pi
  CHECK(std::exp(prior.log_density_at(0.5)) == doctest::Approx(2.0 / kPi).epsilon(1e-12));
  CHECK(-prior.log_density_at(0.5) == doctest::Approx(0.45158).epsilon(1e-4));

  auto prior2 = jeffreys_categorical(2);
  double expect = std::tgamma(1.5) * std::pow(kPi, -1.5) * std::sqrt(27.0);
  CHECK(std::exp(prior2.log_density(Vec{1.0 / 3, 1.0 / 3})) ==
        doctest::Approx(expect).epsilon(1e-12));

  CHECK(prior2.log_density(Vec{0.0, 0.5}) == kNegInf);
  CHECK(prior.log_density_at(1.0) == kNegInf);
}

TEST_CASE("prior normalization by quadrature") {
  // 1-d priors through their unit maps (trapezoid in u)
  auto integrate_unit = [](const PriorDensity& prior, int grid) {
    double h = 1.0 / (grid - 1);
    KahanSum s;
    for (int g = 0; g < grid; ++g) {
      double u = g * h;
      double w = (g == 0 || g == grid - 1) ? 0.5 * h : h;
      s.add(w * std::exp(prior.unit_map->node_log_weight(u)));
    }
    return s.value();
  };
  CHECK(integrate_unit(jeffreys_categorical(1), 4096) == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(integrate_unit(uniform_prior(0.0, 1.0), 4096) == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(integrate_unit(gaussian_prior({0.3}, Matrix(1, 1, {0.7})), 4096) ==
        doctest::Approx(1.0).epsilon(1e-3));

  // d=2 Jeffreys over the simplex via the angular substitution
  // theta = (sin^2 a, cos^2 a sin^2 b): w * |J| = 4 Gamma(3/2) pi^-3/2 cos(a)
  auto prior2 = jeffreys_categorical(2);
  int grid = 2000;
  double h = (kPi / 2.0) / grid;
  KahanSum s;
  for (int i = 0; i < grid; ++i)
    for (int j = 0; j < grid; ++j) {
      double a = (i + 0.5) * h, b = (j + 0.5) * h;
      double t1 = std::sin(a) * std::sin(a);
      double t2 = std::cos(a) * std::cos(a) * std::sin(b) * std::sin(b);
      double jac = 4.0 * std::sin(a) * std::pow(std::cos(a), 3.0) * std::sin(b) * std::cos(b);
      s.add(h * h * jac * std::exp(prior2.log_density(Vec{t1, t2})));
    }
  CHECK(s.value() == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("gaussian prior density") {
  auto prior = gaussian_prior({0.0, 0.0}, Matrix::identity(2));
  CHECK(prior.log_density(Vec{0.0, 0.0}) ==
        doctest::Approx(-std::log(2.0 * kPi)).epsilon(1e-12));
  CHECK_THROWS_AS(gaussian_prior({0.0}, Matrix(1, 1, {-1.0})), NumericError);
}

TEST_CASE("product dirichlet markov prior at the uniform chain") {
  auto prior = product_dirichlet_markov(2);
  // per row: Dirichlet(1/2,1/2) density at 1/2 is (1/pi) / sqrt(1/4) = 2/pi
  double expect = std::log(2.0 / kPi) * 2.0;
  CHECK(prior.log_density(Vec{0.5, 0.5}) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("discrete mass prior") {
  auto prior = discrete_mass_prior({0.5, 0.5});
  CHECK(prior.log_density(Vec{1.0}) == doctest::Approx(std::log(0.5)));
  CHECK_THROWS_AS(discrete_mass_prior({0.3, 0.3}), std::domain_error);
}
