#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mixred/common.hpp"
#include "mixred/linalg.hpp"

namespace mixred {

enum class PriorKind {
  jeffreys_categorical,
  product_dirichlet_markov,
  gaussian,
  uniform,
  discrete_mass
};

inline const char* prior_kind_name(PriorKind k) {
  switch (k) {
    case PriorKind::jeffreys_categorical: return "jeffreys-categorical";
    case PriorKind::product_dirichlet_markov: return "product-dirichlet-markov";
    case PriorKind::gaussian: return "gaussian";
    case PriorKind::uniform: return "uniform";
    case PriorKind::discrete_mass: return "discrete-mass";
  }
  return "?";
}

// Prior density w.r.t. d-dimensional Lebesgue measure. One-dimensional priors
// additionally expose a unit-interval map u in [0,1] -> theta(u) whose
// log-Jacobian is folded into node_log_weight; quadrature places uniform
// trapezoid nodes in u. For Jeffreys this is the arcsine map, which makes the
// effective node density exactly flat and removes the endpoint singularity.
struct PriorDensity {
  PriorKind kind;
  int dim = 1;
  std::function<double(std::span<const double>)> log_density;

  struct UnitMap {
    std::function<double(double)> theta_at;         // u -> theta
    std::function<double(double)> node_log_weight;  // ln w(theta(u)) + ln |theta'(u)|
  };
  std::optional<UnitMap> unit_map;

  double log_density_at(double theta) const {
    double x = theta;
    return log_density(std::span<const double>(&x, 1));
  }
};

// Jeffreys prior for the i.i.d. categorical family:
// w(theta) = Gamma((d+1)/2) pi^{-(d+1)/2} sqrt(prod_k 1/theta_k), boundary -> -inf
inline PriorDensity jeffreys_categorical(int d) {
  if (d < 1) throw std::domain_error("jeffreys: d must be >= 1");
  PriorDensity prior;
  prior.kind = PriorKind::jeffreys_categorical;
  prior.dim = d;
  const double log_norm =
      std::lgamma((d + 1) / 2.0) - (d + 1) / 2.0 * std::log(kPi);
  prior.log_density = [d, log_norm](std::span<const double> theta) {
    if (int(theta.size()) != d) throw std::domain_error("jeffreys: dimension mismatch");
    double sum = 0.0;
    double half_log_det = 0.0;
    for (double x : theta) {
      if (x < 0.0 || x > 1.0) throw std::domain_error("jeffreys: theta outside simplex");
      if (x == 0.0) return kNegInf;
      sum += x;
      half_log_det -= 0.5 * std::log(x);
    }
    double theta0 = 1.0 - sum;
    if (theta0 <= 0.0) return kNegInf;
    return log_norm + half_log_det - 0.5 * std::log(theta0);
  };
  if (d == 1) {
    // theta = sin^2(pi u / 2): w(theta) dtheta = du exactly
    prior.unit_map = PriorDensity::UnitMap{
        [](double u) {
          double s = std::sin(kPi * u / 2.0);
          return s * s;
        },
        [](double) { return 0.0; }};
  }
  return prior;
}

inline PriorDensity uniform_prior(double lo, double hi) {
  if (!(hi > lo)) throw std::domain_error("uniform prior: empty support");
  PriorDensity prior;
  prior.kind = PriorKind::uniform;
  prior.dim = 1;
  const double log_dens = -std::log(hi - lo);
  prior.log_density = [lo, hi, log_dens](std::span<const double> theta) {
    if (theta.size() != 1) throw std::domain_error("uniform prior: dim mismatch");
    return (theta[0] >= lo && theta[0] <= hi) ? log_dens : kNegInf;
  };
  prior.unit_map = PriorDensity::UnitMap{
      [lo, hi](double u) { return lo + u * (hi - lo); },
      [](double) { return 0.0; }};  // density * Jacobian = 1 on a normalized box
  return prior;
}

// multivariate normal prior N(mu, Sigma); 1-d case exposes a +-8 sigma window
inline PriorDensity gaussian_prior(Vec mu, Matrix sigma) {
  const int d = int(mu.size());
  if (!sigma.square() || int(sigma.rows()) != d)
    throw std::domain_error("gaussian prior: Sigma shape mismatch");
  Matrix chol = cholesky(sigma);  // throws NumericError if not SPD
  double log_det = 0.0;
  for (int i = 0; i < d; ++i) log_det += 2.0 * std::log(chol(i, i));
  const double log_norm = -0.5 * (d * std::log(2.0 * kPi) + log_det);

  PriorDensity prior;
  prior.kind = PriorKind::gaussian;
  prior.dim = d;
  prior.log_density = [d, mu, chol, log_norm](std::span<const double> theta) {
    if (int(theta.size()) != d) throw std::domain_error("gaussian prior: dim mismatch");
    Vec diff(std::size_t(d), 0.0);
    for (int i = 0; i < d; ++i) diff[std::size_t(i)] = theta[std::size_t(i)] - mu[std::size_t(i)];
    Vec x = cholesky_solve(chol, diff);  // Sigma^-1 diff
    return log_norm - 0.5 * dot(diff, x);
  };
  if (d == 1) {
    const double m = mu[0];
    const double sd = std::sqrt(sigma(0, 0));
    auto logd = prior.log_density;
    prior.unit_map = PriorDensity::UnitMap{
        [m, sd](double u) { return m + sd * (16.0 * u - 8.0); },
        [m, sd, logd](double u) {
          double th = m + sd * (16.0 * u - 8.0);
          return logd(std::span<const double>(&th, 1)) + std::log(16.0 * sd);
        }};
  }
  return prior;
}

// product over rows of Dirichlet(1/2) densities on N-1 free parameters per
// row; the operational prior for the Markov mixture
inline PriorDensity product_dirichlet_markov(int n_states) {
  if (n_states < 2) throw std::domain_error("markov prior: N must be >= 2");
  PriorDensity prior;
  prior.kind = PriorKind::product_dirichlet_markov;
  const int n = n_states;
  prior.dim = n * (n - 1);
  const double row_log_norm =
      std::lgamma(n / 2.0) - n * std::lgamma(0.5);
  prior.log_density = [n, row_log_norm](std::span<const double> theta) {
    if (int(theta.size()) != n * (n - 1))
      throw std::domain_error("markov prior: dimension mismatch");
    double total = 0.0;
    for (int j = 0; j < n; ++j) {
      double sum = 0.0;
      total += row_log_norm;
      for (int k = 0; k + 1 < n; ++k) {
        double x = theta[std::size_t(j) * (n - 1) + k];
        if (x <= 0.0) return kNegInf;
        sum += x;
        total -= 0.5 * std::log(x);
      }
      double last = 1.0 - sum;
      if (last <= 0.0) return kNegInf;
      total -= 0.5 * std::log(last);
    }
    return total;
  };
  return prior;
}

inline PriorDensity discrete_mass_prior(Vec mass) {
  double sum = 0.0;
  for (double w : mass) {
    if (!(w > 0.0)) throw std::domain_error("discrete prior: masses must be positive");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-12)
    throw std::domain_error("discrete prior: masses must sum to 1 within 1e-12");
  PriorDensity prior;
  prior.kind = PriorKind::discrete_mass;
  prior.dim = 0;
  prior.log_density = [mass](std::span<const double> theta) {
    std::size_t i = std::size_t(theta[0]);
    if (theta.size() != 1 || i >= mass.size() || double(i) != theta[0])
      throw std::domain_error("discrete prior: index out of range");
    return std::log(mass[i]);
  };
  return prior;
}

}  // namespace mixred
