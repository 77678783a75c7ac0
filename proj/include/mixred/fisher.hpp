#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <sstream>
#include <vector>

#include "mixred/common.hpp"
#include "mixred/families.hpp"
#include "mixred/linalg.hpp"

namespace mixred {

// mean Fisher information I_n(theta) with its horizon
struct FisherMatrix {
  Matrix info;
  long long horizon = 1;
  Vec theta0;

  double det() const { return lu_det(info); }
  double spectral() const { return spectral_norm(info); }
};

// higher-order curvature summary used when the information matrix vanishes
struct HigherOrderForm {
  int order = 2;       // k, even
  double lambda = 0.0; // Lambda_n > 0
  Vec theta0;
  long long horizon = 1;
};

// ---------------------------------------------------------------------------
// closed forms

// I(theta)_{ij} = 1/theta_i + 1/theta_0 on the diagonal, 1/theta_0 off it
inline FisherMatrix categorical_fisher(std::span<const double> theta) {
  CategoricalFamily fam(int(theta.size()));
  fam.check_theta(theta);
  const std::size_t d = theta.size();
  double sum = 0.0;
  for (double x : theta) sum += x;
  const double inv0 = 1.0 / (1.0 - sum);
  Matrix m(d, d, inv0);
  for (std::size_t i = 0; i < d; ++i) m(i, i) += 1.0 / theta[i];
  return {std::move(m), 1, Vec(theta.begin(), theta.end())};
}

// det I(theta) = prod_{k=0}^{d} 1/theta_k (structured-determinant lemma)
inline double structured_det(std::span<const double> theta) {
  CategoricalFamily fam(int(theta.size()));
  fam.check_theta(theta);
  double sum = 0.0;
  double prod = 1.0;
  for (double x : theta) {
    sum += x;
    prod /= x;
  }
  return prod / (1.0 - sum);
}

// stationary distribution of an interior row-stochastic matrix by power
// iteration, residual <= 1e-12
inline Vec markov_stationary(const Matrix& transition, int max_iters = 200000) {
  if (!transition.square()) throw std::domain_error("stationary: matrix must be square");
  const std::size_t n = transition.rows();
  for (std::size_t j = 0; j < n; ++j) {
    double sum = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      if (!(transition(j, k) > 0.0 && transition(j, k) < 1.0))
        throw std::domain_error("stationary: chain must be interior");
      sum += transition(j, k);
    }
    if (std::abs(sum - 1.0) > 1e-12)
      throw std::domain_error("stationary: rows must sum to 1");
  }
  Vec pi(n, 1.0 / double(n));
  for (int it = 0; it < max_iters; ++it) {
    Vec next(n, 0.0);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < n; ++k) next[k] += pi[j] * transition(j, k);
    double norm = 0.0;
    for (double x : next) norm += x;
    for (double& x : next) x /= norm;
    double resid = 0.0;
    for (std::size_t k = 0; k < n; ++k) resid = std::max(resid, std::abs(next[k] - pi[k]));
    pi = std::move(next);
    if (resid <= 1e-12) return pi;
  }
  throw NumericError("stationary: power iteration did not converge");
}

// asymptotic det I_n for an interior Markov chain:
// prod_j pi(j)^{N-1} / prod_k theta_j^k
inline double markov_fisher_det(const Matrix& transition) {
  Vec pi = markov_stationary(transition);
  const std::size_t n = transition.rows();
  double det = 1.0;
  for (std::size_t j = 0; j < n; ++j) {
    det *= std::pow(pi[j], double(n - 1));
    for (std::size_t k = 0; k < n; ++k) det /= transition(j, k);
  }
  return det;
}

// I_n = (beta/n) sum_t Phi(x_t) Phi(x_t)^T; independent of theta
inline FisherMatrix linreg_fisher(const SideInfoStream& side, long long n) {
  if (n < 1) throw std::domain_error("linreg_fisher: n must be >= 1");
  const std::size_t d = std::size_t(side.dim);
  Matrix m(d, d);
  for (long long t = 1; t <= n; ++t) {
    Vec phi = side.basis(int(t));
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) m(i, j) += phi[i] * phi[j];
  }
  m *= side.beta / double(n);
  return {std::move(m), n, {}};
}

// ---------------------------------------------------------------------------
// exact and Monte Carlo evaluators of f_n(theta) = (1/n) D(P^n_theta0 || P^n_theta)

enum class MeanKlMode { auto_select, per_step, markov_forward, enumeration, monte_carlo };

class MeanKl {
 public:
  MeanKl(std::shared_ptr<const DiscreteFamily> family, Vec theta0, long long n,
         MeanKlMode mode = MeanKlMode::auto_select, long long mc_samples = 0,
         std::uint64_t seed = 0)
      : family_(std::move(family)), theta0_(std::move(theta0)), n_(n), mode_(mode) {
    family_->check_theta(theta0_);
    if (n_ < 1) throw std::domain_error("mean kl: n must be >= 1");
    if (mode_ == MeanKlMode::auto_select) {
      switch (family_->history_kind()) {
        case HistoryKind::none:
        case HistoryKind::time_only: mode_ = MeanKlMode::per_step; break;
        case HistoryKind::last_state: mode_ = MeanKlMode::markov_forward; break;
      }
    }
    if (mode_ == MeanKlMode::enumeration) {
      double states = std::pow(double(family_->alphabet()), double(n_));
      if (states > 1e7)
        throw ConfigError("mean kl: enumeration state space exceeds 1e7");
    }
    if (mode_ == MeanKlMode::monte_carlo) {
      if (mc_samples < 1) throw ConfigError("mean kl: monte carlo needs samples");
      samples_.reserve(std::size_t(mc_samples));
      logp0_.reserve(std::size_t(mc_samples));
      for (long long s = 0; s < mc_samples; ++s) {
        auto [seq, lp] = sample_sequence_with_logp(*family_, theta0_, int(n_),
                                                   derive_seed(seed, std::uint64_t(s)));
        samples_.push_back(std::move(seq));
        logp0_.push_back(lp);
      }
    }
  }

  double operator()(std::span<const double> theta) const {
    family_->check_theta(theta);
    switch (mode_) {
      case MeanKlMode::per_step: return per_step(theta);
      case MeanKlMode::markov_forward: return markov_forward(theta);
      case MeanKlMode::enumeration: return enumeration(theta);
      case MeanKlMode::monte_carlo: return monte_carlo(theta);
      default: throw NumericError("mean kl: mode not resolved");
    }
  }

 private:
  // i.i.d. / time-indexed families: sum per-step conditional KLs
  double per_step(std::span<const double> theta) const {
    const int a = family_->alphabet();
    const long long steps = family_->history_kind() == HistoryKind::none ? 1 : n_;
    KahanSum acc;
    for (long long t = 1; t <= steps; ++t) {
      for (int k = 0; k < a; ++k) {
        double lp0 = family_->log_conditional(theta0_, {}, int(t), k);
        double lpt = family_->log_conditional(theta, {}, int(t), k);
        acc.add(std::exp(lp0) * (lp0 - lpt));
      }
    }
    return family_->history_kind() == HistoryKind::none ? acc.value()
                                                        : acc.value() / double(n_);
  }

  // Markov chains: exact forward recursion on state marginals
  double markov_forward(std::span<const double> theta) const {
    const int a = family_->alphabet();
    Vec mu(std::size_t(a), 0.0);
    mu[std::size_t(family_->initial_state())] = 1.0;
    KahanSum acc;
    std::vector<int> hist(1, 0);
    for (long long t = 1; t <= n_; ++t) {
      Vec next(std::size_t(a), 0.0);
      for (int j = 0; j < a; ++j) {
        if (mu[std::size_t(j)] == 0.0) continue;
        hist[0] = j;
        for (int k = 0; k < a; ++k) {
          double lp0 = family_->log_conditional(theta0_, hist, int(t), k);
          double lpt = family_->log_conditional(theta, hist, int(t), k);
          double p0 = std::exp(lp0);
          acc.add(mu[std::size_t(j)] * p0 * (lp0 - lpt));
          next[std::size_t(k)] += mu[std::size_t(j)] * p0;
        }
      }
      mu = std::move(next);
    }
    return acc.value() / double(n_);
  }

  double enumeration(std::span<const double> theta) const {
    const int a = family_->alphabet();
    std::vector<int> seq;
    seq.reserve(std::size_t(n_));
    KahanSum acc;
    std::function<void(long long, double, double)> walk =
        [&](long long depth, double lp0, double lpt) {
          if (depth == n_) {
            acc.add(std::exp(lp0) * (lp0 - lpt));
            return;
          }
          for (int k = 0; k < a; ++k) {
            double s0 = family_->log_conditional(theta0_, seq, int(depth) + 1, k);
            double st = family_->log_conditional(theta, seq, int(depth) + 1, k);
            seq.push_back(k);
            walk(depth + 1, lp0 + s0, lpt + st);
            seq.pop_back();
          }
        };
    walk(0, 0.0, 0.0);
    return acc.value() / double(n_);
  }

  // common random numbers: the same presampled sequences are scored at every
  // theta, so finite differences of the estimate stay smooth
  double monte_carlo(std::span<const double> theta) const {
    KahanSum acc;
    for (std::size_t s = 0; s < samples_.size(); ++s) {
      const auto& seq = samples_[s];
      double lpt = 0.0;
      for (std::size_t t = 0; t < seq.size(); ++t)
        lpt += family_->log_conditional(theta, std::span<const int>(seq.data(), t),
                                        int(t) + 1, seq[t]);
      acc.add(logp0_[s] - lpt);
    }
    return acc.value() / (double(n_) * double(samples_.size()));
  }

  std::shared_ptr<const DiscreteFamily> family_;
  Vec theta0_;
  long long n_;
  MeanKlMode mode_;
  std::vector<std::vector<int>> samples_;
  Vec logp0_;
};

// ---------------------------------------------------------------------------
// finite differences

// central difference of order `order` with stencil spacing h:
// f^(k)(x) ~ h^-k sum_i (-1)^i C(k,i) f(x + (k/2 - i) h)
inline double central_derivative(const std::function<double(double)>& f, int order,
                                 double h) {
  if (order < 1) throw std::domain_error("central_derivative: order must be >= 1");
  double sum = 0.0;
  double coeff = 1.0;  // C(order, i) built incrementally
  for (int i = 0; i <= order; ++i) {
    double x = (order / 2.0 - i) * h;
    sum += (i % 2 == 0 ? coeff : -coeff) * f(x);
    coeff = coeff * (order - i) / (i + 1);
  }
  return sum / std::pow(h, order);
}

// Hessian of f_n at theta0 by central differences; the generic oracle for
// every closed-form information matrix
inline FisherMatrix finite_diff_fisher(std::shared_ptr<const DiscreteFamily> family,
                                       Vec theta0, long long n, double h = 1e-3,
                                       MeanKlMode mode = MeanKlMode::auto_select,
                                       long long mc_samples = 0,
                                       std::uint64_t seed = 0) {
  MeanKl f(family, theta0, n, mode, mc_samples, seed);
  const std::size_t d = theta0.size();
  auto at = [&](const Vec& th) { return f(th); };
  const double f0 = at(theta0);
  Matrix hess(d, d);
  for (std::size_t i = 0; i < d; ++i) {
    Vec up = theta0, dn = theta0;
    up[i] += h;
    dn[i] -= h;
    hess(i, i) = (at(up) - 2.0 * f0 + at(dn)) / (h * h);
    for (std::size_t j = i + 1; j < d; ++j) {
      Vec pp = theta0, pm = theta0, mp = theta0, mm = theta0;
      pp[i] += h; pp[j] += h;
      pm[i] += h; pm[j] -= h;
      mp[i] -= h; mp[j] += h;
      mm[i] -= h; mm[j] -= h;
      double v = (at(pp) - at(pm) - at(mp) + at(mm)) / (4.0 * h * h);
      hess(i, j) = hess(j, i) = v;
    }
  }
  return {std::move(hess), n, std::move(theta0)};
}

// directional slice g(s) = f_n(theta0 + s * dir)
inline std::function<double(double)> directional_slice(const MeanKl& f,
                                                       const Vec& theta0,
                                                       const Vec& dir) {
  return [&f, theta0, dir](double s) {
    Vec th = theta0;
    for (std::size_t i = 0; i < th.size(); ++i) th[i] += s * dir[i];
    return f(th);
  };
}

// Lambda_n: the maximal k-th directional derivative of f_n over the unit
// k-norm sphere. d = 1 is a single stencil; d > 1 scans a deterministic
// direction grid with local refinement and yields a lower bound.
inline HigherOrderForm lambda_n(std::shared_ptr<const DiscreteFamily> family,
                                Vec theta0, int k, long long n, double h = 5e-2,
                                MeanKlMode mode = MeanKlMode::auto_select,
                                int grid_points = 10000) {
  if (k < 2 || k % 2 != 0) throw std::domain_error("lambda_n: k must be even and >= 2");
  MeanKl f(family, theta0, n, mode);
  const std::size_t d = theta0.size();
  const double validation_h = 1e-3;

  auto validate_and_measure = [&](const Vec& dir) {
    auto g = directional_slice(f, theta0, dir);
    for (int j = 1; j < k; ++j) {
      double dj = central_derivative(g, j, validation_h);
      if (std::abs(dj) > 1e-3) {
        std::ostringstream os;
        os << "lambda_n: order-" << j << " derivative does not vanish (measured "
           << dj << ")";
        throw std::domain_error(os.str());
      }
    }
    return central_derivative(g, k, h);
  };

  double lambda;
  if (d == 1) {
    lambda = validate_and_measure({1.0});
  } else if (d == 2) {
    // deterministic angle grid on the k-norm unit circle, then golden-section
    // refinement around the best angle
    auto dir_at = [k](double phi) {
      Vec x = {std::cos(phi), std::sin(phi)};
      double norm = std::pow(std::pow(std::abs(x[0]), k) + std::pow(std::abs(x[1]), k),
                             1.0 / k);
      x[0] /= norm;
      x[1] /= norm;
      return x;
    };
    double best = kNegInf, best_phi = 0.0;
    for (int i = 0; i < grid_points; ++i) {
      double phi = 2.0 * kPi * i / grid_points;
      double v = validate_and_measure(dir_at(phi));
      if (v > best) {
        best = v;
        best_phi = phi;
      }
    }
    double lo = best_phi - 2.0 * kPi / grid_points;
    double hi = best_phi + 2.0 * kPi / grid_points;
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    for (int it = 0; it < 60; ++it) {
      double m1 = hi - gr * (hi - lo);
      double m2 = lo + gr * (hi - lo);
      if (validate_and_measure(dir_at(m1)) > validate_and_measure(dir_at(m2)))
        hi = m2;
      else
        lo = m1;
    }
    best = std::max(best, validate_and_measure(dir_at(0.5 * (lo + hi))));
    lambda = best;
  } else {
    // deterministic pseudo-random directions renormalized to the k-norm sphere
    Rng rng(0x4d58524544ULL);
    double best = kNegInf;
    for (int i = 0; i < grid_points; ++i) {
      Vec x(d);
      double norm = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        x[j] = rng.normal();
        norm += std::pow(std::abs(x[j]), k);
      }
      norm = std::pow(norm, 1.0 / k);
      for (double& v : x) v /= norm;
      best = std::max(best, validate_and_measure(x));
    }
    lambda = best;
  }
  if (!(lambda > 0.0))
    throw NumericError("lambda_n: measured Lambda_n is not positive");
  return {k, lambda, std::move(theta0), n};
}

}  // namespace mixred
