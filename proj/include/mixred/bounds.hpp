#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mixred/common.hpp"
#include "mixred/linalg.hpp"
#include "mixred/redundancy.hpp"
#include "mixred/rng.hpp"

namespace mixred {

// itemized redundancy bound: total = prior_term + dimension_term +
// information_term. The theorems are asymptotic (limsup with o(1)); reports
// carry the variant tag and never assert the inequality at finite n.
struct BoundReport {
  long long n = 0;
  double prior_term = 0.0;      // ln 1/w(theta0)
  double dimension_term = 0.0;  // (d/2) ln(n/2pi), or (d/k) ln n for higher-order
  double information_term = 0.0;
  std::string variant;
  double total = 0.0;
};

inline nlohmann::ordered_json to_json(const BoundReport& b) {
  return {{"n", b.n},
          {"prior_term", b.prior_term},
          {"dimension_term", b.dimension_term},
          {"information_term", b.information_term},
          {"variant", b.variant},
          {"total", b.total}};
}

// log_w0 = ln w(theta0) in nats
inline BoundReport bound_thm1(double log_w0, int d, long long n, double det_info) {
  if (n < 1) throw std::domain_error("bound: n must be >= 1");
  if (!(det_info > 0.0))
    throw std::domain_error(
        "bound: det I_n must be positive (information matrix degenerate; "
        "use the spectral-slack or higher-order variant)");
  BoundReport b;
  b.n = n;
  b.variant = "thm1";
  b.prior_term = -log_w0;
  b.dimension_term = 0.5 * d * std::log(double(n) / (2.0 * kPi));
  b.information_term = 0.5 * std::log(det_info);
  b.total = b.prior_term + b.dimension_term + b.information_term;
  return b;
}

inline BoundReport bound_thm3(double log_w0, int d, long long n, double spec_info,
                              double epsilon) {
  if (n < 1) throw std::domain_error("bound: n must be >= 1");
  if (!(epsilon > 0.0)) throw std::domain_error("bound: epsilon must be > 0");
  if (spec_info < 0.0) throw std::domain_error("bound: spectral norm must be >= 0");
  BoundReport b;
  b.n = n;
  b.variant = "thm3";
  b.prior_term = -log_w0;
  b.dimension_term = 0.5 * d * std::log(double(n) / (2.0 * kPi));
  b.information_term = 0.5 * d * std::log(spec_info + epsilon);
  b.total = b.prior_term + b.dimension_term + b.information_term;
  return b;
}

// remark variant: (d/2) ln(spec + eps) replaced by (1/2) ln det(I_n + eps I)
inline BoundReport bound_thm3_det(double log_w0, const Matrix& info, long long n,
                                  double epsilon) {
  if (n < 1) throw std::domain_error("bound: n must be >= 1");
  if (!(epsilon > 0.0)) throw std::domain_error("bound: epsilon must be > 0");
  Matrix a = info;
  for (std::size_t i = 0; i < a.rows(); ++i) a(i, i) += epsilon;
  BoundReport b;
  b.n = n;
  b.variant = "thm3-det";
  b.prior_term = -log_w0;
  b.dimension_term = 0.5 * double(info.rows()) * std::log(double(n) / (2.0 * kPi));
  b.information_term = 0.5 * std::log(lu_det(a));
  b.total = b.prior_term + b.dimension_term + b.information_term;
  return b;
}

// vanishing-curvature bound: total = ln 1/w + (d/k) ln n + (d/k) ln Lambda_n
// + (d/k) ln(1/k!) + d ln(k / (2 Gamma(1/k)))
inline BoundReport bound_higher_order(double log_w0, int d, int k, long long n,
                                      double lambda_n) {
  if (n < 1) throw std::domain_error("bound: n must be >= 1");
  if (k < 2 || k % 2 != 0) throw std::domain_error("bound: k must be even and >= 2");
  if (!(lambda_n > 0.0)) throw std::domain_error("bound: Lambda_n must be positive");
  BoundReport b;
  b.n = n;
  b.variant = "higher-order";
  b.prior_term = -log_w0;
  b.dimension_term = double(d) / k * std::log(double(n));
  b.information_term = double(d) / k * std::log(lambda_n) -
                       double(d) / k * std::lgamma(double(k) + 1.0) +
                       d * std::log(k / (2.0 * std::tgamma(1.0 / k)));
  b.total = b.prior_term + b.dimension_term + b.information_term;
  return b;
}

// countable families: D_n <= ln 1/w(k) for every n
inline BoundReport bound_countable(double mass, long long n = 1) {
  if (!(mass > 0.0) || mass > 1.0)
    throw std::domain_error("bound: member mass must lie in (0,1]");
  BoundReport b;
  b.n = n;
  b.variant = "countable";
  b.prior_term = std::log(1.0 / mass);
  b.total = b.prior_term;
  return b;
}

// ---------------------------------------------------------------------------
// trend report of an empirical series against a bound series. The theorems
// hold as limsup statements, so only trend criteria are asserted: the OLS
// slope of D_n against ln n, and whether the prior-term gaps stop growing.
struct GapReport {
  double slope = 0.0;       // OLS slope of D_n on ln n, largest 8 grid points
  Vec gaps;                 // D_n - (bound total - prior term)
  bool monotone_tail = true;
  int tail_points = 5;
  double tolerance = 1e-3;  // slack absorbing o(1) convergence wiggle
};

inline nlohmann::ordered_json to_json(const GapReport& g) {
  return {{"slope", g.slope}, {"gaps", g.gaps}, {"monotone_tail", g.monotone_tail}};
}

inline GapReport gap_report(std::span<const RedundancyEstimate> empirical,
                            std::span<const BoundReport> bounds,
                            int tail_points = 5, double tolerance = 1e-3) {
  if (empirical.size() < 3)
    throw ConfigError("gap report: need at least 3 grid points");
  if (empirical.size() != bounds.size())
    throw ConfigError("gap report: series lengths differ");
  for (std::size_t i = 0; i < empirical.size(); ++i)
    if (empirical[i].n != bounds[i].n)
      throw ConfigError("gap report: n-grids differ");

  GapReport g;
  g.tail_points = tail_points;
  g.tolerance = tolerance;
  g.gaps.resize(empirical.size());
  for (std::size_t i = 0; i < empirical.size(); ++i)
    g.gaps[i] = empirical[i].value - (bounds[i].total - bounds[i].prior_term);

  const std::size_t m = std::min<std::size_t>(8, empirical.size());
  const std::size_t off = empirical.size() - m;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = off; i < empirical.size(); ++i) {
    double x = std::log(double(empirical[i].n));
    double y = empirical[i].value;
    sx += x; sy += y; sxx += x * x; sxy += x * y;
  }
  g.slope = (double(m) * sxy - sx * sy) / (double(m) * sxx - sx * sx);

  const std::size_t tail = std::min<std::size_t>(std::size_t(tail_points), g.gaps.size());
  for (std::size_t i = g.gaps.size() - tail; i + 1 < g.gaps.size(); ++i)
    if (g.gaps[i + 1] > g.gaps[i] + tolerance) g.monotone_tail = false;
  return g;
}

// ---------------------------------------------------------------------------
// multivariate Chebyshev concentration check (appendix lemma):
// P(|theta - theta0|^2_{Sigma^-1} <= delta) >= 1 - d/delta
struct ConcentrationCheck {
  double empirical = 0.0;
  double bound = 0.0;  // 1 - d/delta, possibly <= 0 (vacuous)
  bool pass = false;
};

inline ConcentrationCheck normal_concentration_check(int d, const Matrix& sigma,
                                                     double delta, long long samples,
                                                     std::uint64_t seed) {
  if (!(delta > 0.0)) throw std::domain_error("concentration: delta must be > 0");
  if (samples < 10000) throw ConfigError("concentration: need at least 1e4 samples");
  if (int(sigma.rows()) != d)
    throw std::domain_error("concentration: Sigma shape mismatch");
  Matrix chol = cholesky(sigma);
  Rng rng(seed);
  long long hits = 0;
  Vec z(std::size_t(d), 0.0), theta(std::size_t(d), 0.0);
  for (long long s = 0; s < samples; ++s) {
    for (int i = 0; i < d; ++i) z[std::size_t(i)] = rng.normal();
    for (int i = 0; i < d; ++i) {
      double acc = 0.0;
      for (int j = 0; j <= i; ++j) acc += chol(std::size_t(i), std::size_t(j)) * z[std::size_t(j)];
      theta[std::size_t(i)] = acc;
    }
    Vec sol = cholesky_solve(chol, theta);
    if (dot(theta, sol) <= delta) ++hits;
  }
  ConcentrationCheck c;
  c.empirical = double(hits) / double(samples);
  c.bound = 1.0 - double(d) / delta;
  double se = std::sqrt(std::max(c.empirical * (1.0 - c.empirical), 1e-12) /
                        double(samples));
  c.pass = c.bound <= 0.0 || c.empirical >= c.bound - 3.0 * se;
  return c;
}

}  // namespace mixred
