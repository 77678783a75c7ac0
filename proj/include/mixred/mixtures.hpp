#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mixred/common.hpp"
#include "mixred/families.hpp"
#include "mixred/priors.hpp"

namespace mixred {

// Streaming Bayes-mixture predictor over a finite alphabet. update() feeds
// the next symbol and accumulates the cumulative log-marginal ln m^t, so the
// chain rule ln m^n = sum_t ln m(w_t|w_<t) holds by construction; predictors
// that maintain an independent route to ln m^n expose it for cross-checking.
class Predictor {
 public:
  virtual ~Predictor() = default;

  virtual int alphabet() const = 0;
  // ln m(symbol | everything seen so far)
  virtual double log_predict(int symbol) const = 0;
  virtual void update(int symbol) = 0;
  virtual std::unique_ptr<Predictor> clone() const = 0;
  virtual nlohmann::ordered_json state_json() const = 0;

  double log_marginal() const { return log_m_; }
  int steps() const { return t_; }

  Vec predictive_probs() const {
    Vec p(static_cast<std::size_t>(alphabet()), 0.0);
    for (int k = 0; k < alphabet(); ++k) p[std::size_t(k)] = std::exp(log_predict(k));
    return p;
  }

  // true if ln m^n is a function of symbol counts alone (exchangeable mixture)
  virtual bool counts_sufficient() const { return false; }
  virtual double log_marginal_counts(std::span<const long long>) const {
    throw UnsupportedError("predictor: no count-based marginal");
  }

 protected:
  void record(double log_pred) {
    log_m_ += log_pred;
    ++t_;
  }
  double log_m_ = 0.0;
  int t_ = 0;
};

using PredictorFactory = std::function<std::unique_ptr<Predictor>()>;

// add-1/2 (Krichevsky-Trofimov) conditional probability for a Dirichlet(1/2)
// mixture over a K-symbol categorical source
inline double dirichlet_predictive(std::span<const long long> counts, int symbol) {
  const int k = int(counts.size());
  if (symbol < 0 || symbol >= k)
    throw std::domain_error("dirichlet_predictive: unknown symbol");
  long long total = 0;
  for (long long c : counts) {
    if (c < 0) throw std::domain_error("dirichlet_predictive: negative count");
    total += c;
  }
  return (double(counts[std::size_t(symbol)]) + 0.5) / (double(total) + k / 2.0);
}

// ---------------------------------------------------------------------------
class KtPredictor final : public Predictor {
 public:
  explicit KtPredictor(int alphabet) : counts_(std::size_t(alphabet), 0) {
    if (alphabet < 2) throw std::domain_error("kt: alphabet must have >= 2 symbols");
  }

  int alphabet() const override { return int(counts_.size()); }

  double log_predict(int symbol) const override {
    return std::log(dirichlet_predictive(counts_, symbol));
  }

  void update(int symbol) override {
    record(log_predict(symbol));
    counts_[std::size_t(symbol)]++;
  }

  std::unique_ptr<Predictor> clone() const override {
    return std::make_unique<KtPredictor>(*this);
  }

  bool counts_sufficient() const override { return true; }

  // ln m^n of any sequence with the given symbol counts:
  // Gamma(K/2)/Gamma(n+K/2) * prod_k Gamma(c_k+1/2)/Gamma(1/2)
  double log_marginal_counts(std::span<const long long> counts) const override {
    const int k = alphabet();
    if (int(counts.size()) != k)
      throw std::domain_error("kt: count vector size mismatch");
    long long n = 0;
    double s = 0.0;
    for (long long c : counts) {
      n += c;
      s += std::lgamma(double(c) + 0.5) - std::lgamma(0.5);
    }
    return s + std::lgamma(k / 2.0) - std::lgamma(double(n) + k / 2.0);
  }

  const std::vector<long long>& counts() const { return counts_; }

  nlohmann::ordered_json state_json() const override {
    return {{"kind", "kt"}, {"counts", counts_}, {"t", steps()}, {"log_marginal", log_marginal()}};
  }

 private:
  std::vector<long long> counts_;
};

// ---------------------------------------------------------------------------
// per-row Dirichlet(1/2) mixture over Markov transition rows
class MarkovKtPredictor final : public Predictor {
 public:
  MarkovKtPredictor(int n_states, int initial_state)
      : n_(n_states), state_(initial_state),
        counts_(std::size_t(n_states) * std::size_t(n_states), 0) {
    if (n_states < 2) throw std::domain_error("markov-kt: N must be >= 2");
    if (initial_state < 0 || initial_state >= n_states)
      throw std::domain_error("markov-kt: initial state out of range");
  }

  int alphabet() const override { return n_; }

  double log_predict(int symbol) const override {
    return std::log(markov_predictive(counts_, n_, state_, symbol));
  }

  void update(int symbol) override {
    record(log_predict(symbol));
    counts_[std::size_t(state_) * n_ + symbol]++;
    state_ = symbol;
  }

  std::unique_ptr<Predictor> clone() const override {
    return std::make_unique<MarkovKtPredictor>(*this);
  }

  // (count(j->k) + 1/2) / (count(j->.) + N/2)
  static double markov_predictive(std::span<const long long> counts, int n,
                                  int state, int symbol) {
    if (state < 0 || state >= n || symbol < 0 || symbol >= n)
      throw std::domain_error("markov_predictive: state index out of range");
    long long row = 0;
    for (int k = 0; k < n; ++k) row += counts[std::size_t(state) * n + k];
    return (double(counts[std::size_t(state) * n + symbol]) + 0.5) /
           (double(row) + n / 2.0);
  }

  // ln m^n as a function of the full transition-count matrix (row-major)
  double log_marginal_transition_counts(std::span<const long long> counts) const {
    double s = 0.0;
    for (int j = 0; j < n_; ++j) {
      long long row = 0;
      for (int k = 0; k < n_; ++k) {
        long long c = counts[std::size_t(j) * n_ + k];
        row += c;
        s += std::lgamma(double(c) + 0.5) - std::lgamma(0.5);
      }
      s += std::lgamma(n_ / 2.0) - std::lgamma(double(row) + n_ / 2.0);
    }
    return s;
  }

  int current_state() const { return state_; }
  const std::vector<long long>& transition_counts() const { return counts_; }

  nlohmann::ordered_json state_json() const override {
    return {{"kind", "markov-kt"},
            {"n_states", n_},
            {"state", state_},
            {"transition_counts", counts_},
            {"t", steps()},
            {"log_marginal", log_marginal()}};
  }

 private:
  int n_;
  int state_;
  std::vector<long long> counts_;
};

// ---------------------------------------------------------------------------
// 1-d quadrature mixture: uniform trapezoid nodes in the prior's unit
// coordinate, per-node running log-likelihoods, log-sum-exp marginals. The
// node weights are normalized once at construction, so the discrete mixture
// is itself a probability measure and marginalization is exact by design.
class QuadraturePredictor final : public Predictor {
 public:
  QuadraturePredictor(std::shared_ptr<const DiscreteFamily> family,
                      const PriorDensity& prior, int grid)
      : family_(std::move(family)) {
    if (grid < 16) throw ConfigError("quadrature: need at least 16 nodes");
    if (family_->dim() != 1)
      throw UnsupportedError("quadrature: only 1-d parameter families");
    if (!prior.unit_map)
      throw UnsupportedError("quadrature: prior lacks a unit-interval map");
    const auto& um = *prior.unit_map;
    theta_.resize(std::size_t(grid));
    logw_.resize(std::size_t(grid));
    const double h = 1.0 / (grid - 1);
    for (int g = 0; g < grid; ++g) {
      double u = g * h;
      theta_[std::size_t(g)] = um.theta_at(u);
      double trap = (g == 0 || g == grid - 1) ? 0.5 * h : h;
      logw_[std::size_t(g)] = um.node_log_weight(u) + std::log(trap);
    }
    double z = log_sum_exp(logw_);
    for (double& lw : logw_) lw -= z;
    log_z_ = 0.0;
  }

  int alphabet() const override { return family_->alphabet(); }

  double log_predict(int symbol) const override {
    Vec joint(logw_.size());
    for (std::size_t g = 0; g < logw_.size(); ++g)
      joint[g] = logw_[g] + family_->log_conditional(
                                std::span<const double>(&theta_[g], 1), history_,
                                steps() + 1, symbol);
    return log_sum_exp(joint) - log_z_;
  }

  void update(int symbol) override {
    record(log_predict(symbol));
    for (std::size_t g = 0; g < logw_.size(); ++g)
      logw_[g] += family_->log_conditional(std::span<const double>(&theta_[g], 1),
                                           history_, steps(), symbol);
    history_.push_back(symbol);
    log_z_ = log_sum_exp(logw_);
  }

  std::unique_ptr<Predictor> clone() const override {
    return std::make_unique<QuadraturePredictor>(*this);
  }

  bool counts_sufficient() const override {
    return family_->history_kind() == HistoryKind::none;
  }

  double log_marginal_counts(std::span<const long long> counts) const override {
    if (!counts_sufficient())
      throw UnsupportedError("quadrature: family is not exchangeable");
    if (int(counts.size()) != alphabet())
      throw std::domain_error("quadrature: count vector size mismatch");
    Vec joint(theta_.size());
    for (std::size_t g = 0; g < theta_.size(); ++g) {
      double s = logw_[g];
      for (int k = 0; k < alphabet(); ++k)
        if (counts[std::size_t(k)] > 0)
          s += double(counts[std::size_t(k)]) *
               family_->log_conditional(std::span<const double>(&theta_[g], 1), {}, 1, k);
      joint[g] = s;
    }
    return log_sum_exp(joint);
  }

  // independent route to ln m^t; equals log_marginal() within accumulation error
  double log_node_total() const { return log_z_; }
  int grid() const { return int(theta_.size()); }

  nlohmann::ordered_json state_json() const override {
    return {{"kind", "quadrature"},
            {"family", family_->name()},
            {"grid", grid()},
            {"log_weights", logw_},
            {"t", steps()},
            {"log_marginal", log_marginal()}};
  }

 private:
  std::shared_ptr<const DiscreteFamily> family_;
  Vec theta_;
  Vec logw_;       // ln w_g + ln p^t_{theta_g}(history)
  double log_z_;   // logsumexp of logw_
  std::vector<int> history_;
};

// ---------------------------------------------------------------------------
// mixture over a countable (finite) set of fixed sources
class CountablePredictor final : public Predictor {
 public:
  explicit CountablePredictor(std::shared_ptr<const CountableFamily> family)
      : family_(std::move(family)) {
    logw_.resize(family_->size());
    for (std::size_t i = 0; i < family_->size(); ++i)
      logw_[i] = std::log(family_->mass(i));
    log_z_ = log_sum_exp(logw_);
  }

  int alphabet() const override { return family_->alphabet(); }

  double log_predict(int symbol) const override {
    Vec joint(logw_.size());
    for (std::size_t i = 0; i < logw_.size(); ++i) {
      const auto& m = family_->member(i);
      joint[i] = logw_[i] +
                 m.family->log_conditional(m.theta, history_, steps() + 1, symbol);
    }
    return log_sum_exp(joint) - log_z_;
  }

  void update(int symbol) override {
    record(log_predict(symbol));
    for (std::size_t i = 0; i < logw_.size(); ++i) {
      const auto& m = family_->member(i);
      logw_[i] += m.family->log_conditional(m.theta, history_, steps(), symbol);
    }
    history_.push_back(symbol);
    log_z_ = log_sum_exp(logw_);
  }

  std::unique_ptr<Predictor> clone() const override {
    return std::make_unique<CountablePredictor>(*this);
  }

  double posterior_weight(std::size_t i) const {
    return std::exp(logw_[i] - log_z_);
  }

  nlohmann::ordered_json state_json() const override {
    return {{"kind", "countable"},
            {"log_weights", logw_},
            {"t", steps()},
            {"log_marginal", log_marginal()}};
  }

 private:
  std::shared_ptr<const CountableFamily> family_;
  Vec logw_;
  double log_z_;
  std::vector<int> history_;
};

// ---------------------------------------------------------------------------
// conjugate Gaussian posterior for linear basis-function regression; the
// real-valued analogue of Predictor (consumed by the redundancy module, not
// by the coder)
class GaussianRegressionPredictor {
 public:
  GaussianRegressionPredictor(std::shared_ptr<const RegressionFamily> family,
                              Vec prior_mean, Matrix prior_cov)
      : family_(std::move(family)), mean_(std::move(prior_mean)),
        cov_(std::move(prior_cov)) {
    if (int(mean_.size()) != family_->dim() || int(cov_.rows()) != family_->dim())
      throw std::domain_error("regression predictor: prior shape mismatch");
    cholesky(cov_);  // reject non-SPD priors up front
  }

  int steps() const { return t_; }
  double log_marginal() const { return log_m_; }
  const Vec& posterior_mean() const { return mean_; }
  const Matrix& posterior_cov() const { return cov_; }

  // predictive distribution of y_t at the next step: N(mean, var)
  std::pair<double, double> predictive(int t) const {
    Vec phi = family_->side().basis(t);
    double mu = dot(mean_, phi);
    double var = 1.0 / family_->beta() + quadratic_form(cov_, phi);
    if (!(var > 0.0)) throw NumericError("regression predictor: nonpositive predictive variance");
    return {mu, var};
  }

  double log_predict(double y) const {
    auto [mu, var] = predictive(t_ + 1);
    double r = y - mu;
    return -0.5 * std::log(2.0 * kPi * var) - 0.5 * r * r / var;
  }

  void update(double y) {
    log_m_ += log_predict(y);
    ++t_;
    Vec phi = family_->side().basis(t_);
    Vec sphi = cov_.mul(phi);
    double denom = 1.0 / family_->beta() + dot(phi, sphi);
    double resid = y - dot(mean_, phi);
    for (std::size_t i = 0; i < mean_.size(); ++i)
      mean_[i] += sphi[i] * resid / denom;
    for (std::size_t i = 0; i < cov_.rows(); ++i)
      for (std::size_t j = 0; j < cov_.cols(); ++j)
        cov_(i, j) -= sphi[i] * sphi[j] / denom;
  }

  nlohmann::ordered_json state_json() const {
    Vec cov_flat;
    for (std::size_t i = 0; i < cov_.rows(); ++i)
      for (std::size_t j = 0; j < cov_.cols(); ++j) cov_flat.push_back(cov_(i, j));
    return {{"kind", "gaussian-regression"},
            {"mean", mean_},
            {"cov", cov_flat},
            {"t", t_},
            {"log_marginal", log_m_}};
  }

 private:
  std::shared_ptr<const RegressionFamily> family_;
  Vec mean_;
  Matrix cov_;
  int t_ = 0;
  double log_m_ = 0.0;
};

// closed-form ln m^n(y_{1:n}) for the regression mixture: the joint density
// N(Phi mu, beta^-1 I + Phi Sigma Phi^T) evaluated via Woodbury in O(n d^2)
inline double regression_joint_log_marginal(const RegressionFamily& family,
                                            const Vec& prior_mean,
                                            const Matrix& prior_cov,
                                            std::span<const double> ys) {
  const int d = family.dim();
  const double beta = family.beta();
  const int n = int(ys.size());
  Matrix gram(static_cast<std::size_t>(d), static_cast<std::size_t>(d));  // Phi^T Phi
  Vec phir(std::size_t(d), 0.0);                // Phi^T r
  double rr = 0.0;
  for (int t = 1; t <= n; ++t) {
    Vec phi = family.side().basis(t);
    double r = ys[std::size_t(t) - 1] - dot(prior_mean, phi);
    rr += r * r;
    for (int i = 0; i < d; ++i) {
      phir[std::size_t(i)] += phi[std::size_t(i)] * r;
      for (int j = 0; j < d; ++j)
        gram(std::size_t(i), std::size_t(j)) += phi[std::size_t(i)] * phi[std::size_t(j)];
    }
  }
  // M = Sigma^-1 + beta Phi^T Phi
  Matrix m = spd_inverse(prior_cov);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      m(std::size_t(i), std::size_t(j)) += beta * gram(std::size_t(i), std::size_t(j));
  Matrix lm = cholesky(m);
  // ln det SigmaM = -n ln beta + ln det Sigma + ln det M
  double log_det_m = 0.0;
  for (int i = 0; i < d; ++i) log_det_m += 2.0 * std::log(lm(i, i));
  Matrix lp = cholesky(prior_cov);
  double log_det_sigma = 0.0;
  for (int i = 0; i < d; ++i) log_det_sigma += 2.0 * std::log(lp(i, i));
  double log_det = -n * std::log(beta) + log_det_sigma + log_det_m;
  // quadratic form r^T SigmaM^-1 r = beta r^T r - beta^2 (Phi^T r)^T M^-1 (Phi^T r)
  Vec sol = cholesky_solve(lm, phir);
  double quad = beta * rr - beta * beta * dot(phir, sol);
  return -0.5 * (n * std::log(2.0 * kPi) + log_det + quad);
}

}  // namespace mixred
