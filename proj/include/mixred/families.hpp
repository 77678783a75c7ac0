#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mixred/common.hpp"
#include "mixred/linalg.hpp"
#include "mixred/rng.hpp"

namespace mixred {

// what part of the history a family's conditionals may depend on
enum class HistoryKind {
  none,       // i.i.d.: conditionals ignore history and time
  time_only,  // conditionals depend on the step index t only
  last_state  // Markov: conditionals depend on the previous symbol
};

// A parametric sequential source over a finite alphabet {0..alphabet-1}.
// Conditionals are evaluated at arbitrary theta so the same object serves
// sampling, mixture quadrature and finite-difference Fisher oracles.
// Step indices t are 1-based; `history` holds symbols 1..t-1.
class DiscreteFamily {
 public:
  virtual ~DiscreteFamily() = default;

  int alphabet() const { return alphabet_; }
  int dim() const { return dim_; }
  HistoryKind history_kind() const { return history_; }
  const std::string& name() const { return name_; }
  // Markov chains have a known initial state; -1 elsewhere
  virtual int initial_state() const { return -1; }

  // throws std::domain_error outside the parameter domain
  virtual void check_theta(std::span<const double> theta) const = 0;

  // ln p(symbol | history, t) in nats, clamped away from -inf
  virtual double log_conditional(std::span<const double> theta,
                                 std::span<const int> history, int t,
                                 int symbol) const = 0;

  Vec conditional_probs(std::span<const double> theta,
                        std::span<const int> history, int t) const {
    Vec p(alphabet_);
    for (int k = 0; k < alphabet_; ++k)
      p[k] = std::exp(log_conditional(theta, history, t, k));
    return p;
  }

 protected:
  DiscreteFamily(std::string name, int alphabet, int dim, HistoryKind h)
      : name_(std::move(name)), alphabet_(alphabet), dim_(dim), history_(h) {}

  std::string name_;
  int alphabet_;
  int dim_;
  HistoryKind history_;
};

// ---------------------------------------------------------------------------
// i.i.d. categorical source over {0..d}; theta_k = P(symbol k) for k = 1..d,
// P(symbol 0) = 1 - |theta|_1
class CategoricalFamily final : public DiscreteFamily {
 public:
  explicit CategoricalFamily(int d)
      : DiscreteFamily("categorical", d + 1, d, HistoryKind::none) {
    if (d < 1) throw std::domain_error("categorical: d must be >= 1");
  }

  void check_theta(std::span<const double> theta) const override {
    if (int(theta.size()) != dim_)
      throw std::domain_error("categorical: theta dimension mismatch");
    double sum = 0.0;
    for (double x : theta) {
      if (!(x > 0.0)) throw std::domain_error("categorical: theta_k must be > 0");
      sum += x;
    }
    if (!(sum < 1.0))
      throw std::domain_error("categorical: |theta|_1 must be < 1 (open simplex)");
  }

  double log_conditional(std::span<const double> theta, std::span<const int>,
                         int, int symbol) const override {
    double p;
    if (symbol == 0) {
      double sum = 0.0;
      for (double x : theta) sum += x;
      p = 1.0 - sum;
    } else {
      p = theta[std::size_t(symbol) - 1];
    }
    return std::log(clamp_prob(p));
  }
};

inline std::shared_ptr<CategoricalFamily> make_categorical_family(
    std::span<const double> theta) {
  auto fam = std::make_shared<CategoricalFamily>(int(theta.size()));
  fam->check_theta(theta);
  return fam;
}

// ---------------------------------------------------------------------------
// Markov chain on N states with known initial state. Parameter layout: for
// each row j the free entries are theta_j^k for k = 0..N-2 (stored
// row-major), the last column is 1 minus the row sum. dim = N(N-1).
class MarkovFamily final : public DiscreteFamily {
 public:
  MarkovFamily(int n_states, int initial_state)
      : DiscreteFamily("markov", n_states, n_states * (n_states - 1),
                       HistoryKind::last_state),
        init_(initial_state) {
    if (n_states < 2) throw std::domain_error("markov: need N >= 2 states");
    if (initial_state < 0 || initial_state >= n_states)
      throw std::domain_error("markov: initial state out of range");
  }

  int initial_state() const override { return init_; }

  // flatten an N x N row-stochastic matrix into the free-parameter vector
  static Vec flatten(const Matrix& p) {
    const std::size_t n = p.rows();
    Vec theta;
    theta.reserve(n * (n - 1));
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k + 1 < n; ++k) theta.push_back(p(j, k));
    return theta;
  }

  Vec row_probs(std::span<const double> theta, int j) const {
    const int n = alphabet_;
    Vec row(std::size_t(n), 0.0);
    double sum = 0.0;
    for (int k = 0; k + 1 < n; ++k) {
      row[std::size_t(k)] = theta[std::size_t(j) * (n - 1) + k];
      sum += row[std::size_t(k)];
    }
    row[std::size_t(n) - 1] = 1.0 - sum;
    return row;
  }

  void check_theta(std::span<const double> theta) const override {
    if (int(theta.size()) != dim_)
      throw std::domain_error("markov: theta dimension mismatch");
    for (int j = 0; j < alphabet_; ++j) {
      Vec row = row_probs(theta, j);
      for (double x : row)
        if (!(x > 0.0 && x < 1.0))
          throw std::domain_error("markov: transition probabilities must lie in (0,1)");
    }
  }

  double log_conditional(std::span<const double> theta,
                         std::span<const int> history, int, int symbol) const override {
    const int j = history.empty() ? init_ : history.back();
    const int n = alphabet_;
    double p;
    if (symbol == n - 1) {
      double sum = 0.0;
      for (int k = 0; k + 1 < n; ++k) sum += theta[std::size_t(j) * (n - 1) + k];
      p = 1.0 - sum;
    } else {
      p = theta[std::size_t(j) * (n - 1) + symbol];
    }
    return std::log(clamp_prob(p));
  }

 private:
  int init_;
};

// validates the transition matrix and returns (family, flattened theta)
inline std::pair<std::shared_ptr<MarkovFamily>, Vec> make_markov_family(
    const Matrix& transition, int initial_state) {
  if (!transition.square() || transition.rows() < 2)
    throw std::domain_error("markov: transition matrix must be square, N >= 2");
  const std::size_t n = transition.rows();
  for (std::size_t j = 0; j < n; ++j) {
    double sum = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      double x = transition(j, k);
      if (!(x > 0.0 && x < 1.0))
        throw std::domain_error("markov: entries must lie strictly inside (0,1)");
      sum += x;
    }
    if (std::abs(sum - 1.0) > 1e-12)
      throw std::domain_error("markov: rows must sum to 1 within 1e-12");
  }
  auto fam = std::make_shared<MarkovFamily>(int(n), initial_state);
  return {fam, MarkovFamily::flatten(transition)};
}

// ---------------------------------------------------------------------------
// the non-equicontinuous binary family: p_theta(1 | t) = min{1, theta +
// a_t (theta - 1/2)^2}; depends on the step index, never on the history
class CounterexampleFamily final : public DiscreteFamily {
 public:
  using Schedule = std::function<double(int)>;  // t >= 1 -> a_t

  explicit CounterexampleFamily(Schedule schedule)
      : DiscreteFamily("counterexample", 2, 1, HistoryKind::time_only),
        schedule_(std::move(schedule)) {}

  void check_theta(std::span<const double> theta) const override {
    if (theta.size() != 1)
      throw std::domain_error("counterexample: theta must be scalar");
    if (!(theta[0] >= 0.0 && theta[0] <= 1.0))
      throw std::domain_error("counterexample: theta must lie in [0,1]");
  }

  double prob_one(double theta, int t) const {
    double a = schedule_(t);
    if (a < 0.0) throw std::domain_error("counterexample: schedule a_n must be >= 0");
    double q = theta - 0.5;
    double p = (q == 0.0) ? theta : theta + a * q * q;
    return clamp_prob(p > 1.0 ? 1.0 : p);
  }

  double log_conditional(std::span<const double> theta, std::span<const int>,
                         int t, int symbol) const override {
    double p1 = prob_one(theta[0], t);
    return std::log(symbol == 1 ? p1 : 1.0 - p1);
  }

 private:
  Schedule schedule_;
};

// ---------------------------------------------------------------------------
// i.i.d. Bernoulli demo whose mean-KL has vanishing derivatives up to order
// k-1 at theta0: p_theta(1) = 1/2 + (theta - theta0)^(k/2), k even >= 4
class FlatFamily final : public DiscreteFamily {
 public:
  FlatFamily(double theta0, int k)
      : DiscreteFamily("flat", 2, 1, HistoryKind::none), theta0_(theta0), k_(k) {
    if (k % 2 != 0) throw std::domain_error("flat: k must be even");
    if (k < 4) throw std::domain_error("flat: k must be >= 4");
  }

  double theta0() const { return theta0_; }
  int order() const { return k_; }

  double prob_one(double theta) const {
    double p = 0.5 + std::pow(theta - theta0_, k_ / 2);
    return clamp_prob(p);
  }

  void check_theta(std::span<const double> theta) const override {
    if (theta.size() != 1) throw std::domain_error("flat: theta must be scalar");
    double p = 0.5 + std::pow(theta[0] - theta0_, k_ / 2);
    if (!(p > 0.0 && p < 1.0))
      throw std::domain_error("flat: theta outside the clip-free neighbourhood");
  }

  double log_conditional(std::span<const double> theta, std::span<const int>,
                         int, int symbol) const override {
    double p1 = prob_one(theta[0]);
    return std::log(symbol == 1 ? p1 : 1.0 - p1);
  }

 private:
  double theta0_;
  int k_;
};

// ---------------------------------------------------------------------------
// zero-dimensional (countable) family: finitely many fixed sources with a
// discrete prior mass
struct CountableMember {
  std::shared_ptr<const DiscreteFamily> family;
  Vec theta;
};

class CountableFamily {
 public:
  CountableFamily(std::vector<CountableMember> members, Vec mass)
      : members_(std::move(members)), mass_(std::move(mass)) {
    if (members_.empty()) throw std::domain_error("countable: need at least one member");
    if (mass_.size() != members_.size())
      throw std::domain_error("countable: mass size mismatch");
    double sum = 0.0;
    for (double w : mass_) {
      if (!(w > 0.0)) throw std::domain_error("countable: masses must be positive");
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-12)
      throw std::domain_error("countable: masses must sum to 1 within 1e-12");
    const int a = members_[0].family->alphabet();
    for (const auto& m : members_) {
      if (m.family->alphabet() != a)
        throw std::domain_error("countable: members must share one alphabet");
      m.family->check_theta(m.theta);
    }
  }

  std::size_t size() const { return members_.size(); }
  int alphabet() const { return members_[0].family->alphabet(); }
  const CountableMember& member(std::size_t i) const { return members_[i]; }
  double mass(std::size_t i) const { return mass_[i]; }

 private:
  std::vector<CountableMember> members_;
  Vec mass_;
};

// ---------------------------------------------------------------------------
// discriminative regression: deterministic covariate stream through a bounded
// basis, Gaussian observation noise with known precision beta
struct SideInfoStream {
  int dim = 0;
  double beta = 1.0;
  std::function<Vec(int)> basis_at;  // t >= 1 -> Phi(x_t) in [0,1]^dim

  Vec basis(int t) const {
    Vec phi = basis_at(t);
    if (int(phi.size()) != dim)
      throw std::domain_error("side info: basis dimension mismatch");
    for (double v : phi)
      if (!(v >= 0.0 && v <= 1.0))
        throw std::domain_error("side info: basis values must lie in [0,1]");
    return phi;
  }
};

class RegressionFamily {
 public:
  RegressionFamily(SideInfoStream side, std::span<const double> theta0)
      : side_(std::move(side)), theta0_(theta0.begin(), theta0.end()) {
    if (!(side_.beta > 0.0) || !std::isfinite(side_.beta))
      throw std::domain_error("regression: beta must be positive and finite");
    if (int(theta0_.size()) != side_.dim)
      throw std::domain_error("regression: theta dimension mismatch");
  }

  const SideInfoStream& side() const { return side_; }
  const Vec& theta0() const { return theta0_; }
  int dim() const { return side_.dim; }
  double beta() const { return side_.beta; }

  double mean_at(std::span<const double> theta, int t) const {
    return dot(theta, side_.basis(t));
  }

  // ln N(y | theta^T Phi(x_t), 1/beta)
  double log_conditional(std::span<const double> theta, int t, double y) const {
    double mu = mean_at(theta, t);
    double r = y - mu;
    return 0.5 * std::log(side_.beta / (2.0 * kPi)) - 0.5 * side_.beta * r * r;
  }

  Vec sample(std::span<const double> theta, int n, std::uint64_t seed) const {
    Rng rng(seed);
    Vec ys(std::size_t(n), 0.0);
    double sd = 1.0 / std::sqrt(side_.beta);
    for (int t = 1; t <= n; ++t)
      ys[std::size_t(t) - 1] = mean_at(theta, t) + sd * rng.normal();
    return ys;
  }

 private:
  SideInfoStream side_;
  Vec theta0_;
};

// ---------------------------------------------------------------------------
// seeded sampling for finite-alphabet families; deterministic given the seed
inline std::vector<int> sample_sequence(const DiscreteFamily& family,
                                        std::span<const double> theta, int n,
                                        std::uint64_t seed) {
  if (n < 1) throw std::domain_error("sample_sequence: n must be >= 1");
  family.check_theta(theta);
  Rng rng(seed);
  std::vector<int> seq;
  seq.reserve(std::size_t(n));
  for (int t = 1; t <= n; ++t) {
    Vec p = family.conditional_probs(theta, seq, t);
    seq.push_back(rng.discrete(p));
  }
  return seq;
}

// sample and also accumulate ln p^n(sequence) under the generating theta
inline std::pair<std::vector<int>, double> sample_sequence_with_logp(
    const DiscreteFamily& family, std::span<const double> theta, int n,
    std::uint64_t seed) {
  Rng rng(seed);
  std::vector<int> seq;
  seq.reserve(std::size_t(n));
  KahanSum logp;
  for (int t = 1; t <= n; ++t) {
    Vec p = family.conditional_probs(theta, seq, t);
    int sym = rng.discrete(p);
    logp.add(std::log(p[std::size_t(sym)]));
    seq.push_back(sym);
  }
  return {std::move(seq), logp.value()};
}

}  // namespace mixred
