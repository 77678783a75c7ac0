#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mixred/bounds.hpp"
#include "mixred/coder.hpp"
#include "mixred/common.hpp"
#include "mixred/families.hpp"
#include "mixred/fisher.hpp"
#include "mixred/mixtures.hpp"
#include "mixred/priors.hpp"
#include "mixred/redundancy.hpp"

namespace mixred {

using json = nlohmann::json;

// every object in a config is checked against its allowed key set; typos fail
// fast instead of silently running a default experiment
inline void check_keys(const json& j, const std::set<std::string>& allowed,
                       const std::string& ctx) {
  if (!j.is_object()) throw ConfigError(ctx + ": expected a JSON object");
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key))
      throw ConfigError(ctx + ": unknown key '" + key + "'");
}

template <typename T>
T require(const json& j, const std::string& key, const std::string& ctx) {
  if (!j.contains(key)) throw ConfigError(ctx + ": missing key '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(ctx + ": key '" + key + "' has the wrong type");
  }
}

// ---------------------------------------------------------------------------
enum class BoundVariant { thm1, thm3, higher_order, countable };
enum class MethodKind { exact, monte_carlo };

struct Experiment {
  enum class Kind { discrete, countable, regression };
  Kind kind = Kind::discrete;

  std::shared_ptr<const DiscreteFamily> family;
  Vec theta0;
  Matrix markov_transition;  // set for Markov families

  std::shared_ptr<const CountableFamily> countable;
  std::size_t truth_index = 0;

  std::shared_ptr<const RegressionFamily> regression;
  Vec reg_prior_mean;
  Matrix reg_prior_cov;

  PriorDensity prior;
  int quadrature_grid = 2048;

  std::vector<long long> grid;
  MethodKind method = MethodKind::exact;
  long long mc_samples = 10000;

  BoundVariant bound = BoundVariant::thm1;
  double epsilon = 0.1;
  int higher_order_k = 4;

  std::uint64_t seed = 1;
  int tail_points = 5;
  double tolerance = 1e-3;

  std::string family_name;
  std::string model_id;

  std::uint64_t model_hash() const { return fnv1a64(model_id); }
};

namespace detail {

inline Matrix parse_matrix(const json& j, const std::string& ctx) {
  if (!j.is_array() || j.empty()) throw ConfigError(ctx + ": expected a matrix");
  std::size_t rows = j.size(), cols = j[0].size();
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    if (!j[i].is_array() || j[i].size() != cols)
      throw ConfigError(ctx + ": ragged matrix");
    for (std::size_t c = 0; c < cols; ++c) m(i, c) = j[i][c].get<double>();
  }
  return m;
}

inline CounterexampleFamily::Schedule parse_schedule(const json& j) {
  check_keys(j, {"kind", "value", "base"}, "family.schedule");
  auto kind = require<std::string>(j, "kind", "family.schedule");
  if (kind == "zero") return [](int) { return 0.0; };
  if (kind == "constant") {
    double v = require<double>(j, "value", "family.schedule");
    if (v < 0.0) throw ConfigError("family.schedule: value must be >= 0");
    return [v](int) { return v; };
  }
  if (kind == "power") {
    double b = require<double>(j, "base", "family.schedule");
    if (b < 0.0) throw ConfigError("family.schedule: base must be >= 0");
    return [b](int t) { return std::pow(b, double(t)); };
  }
  throw ConfigError("family.schedule: unknown kind '" + kind + "'");
}

inline SideInfoStream parse_basis(const json& j, double beta) {
  check_keys(j, {"kind", "dim", "seed"}, "family.basis");
  auto kind = require<std::string>(j, "kind", "family.basis");
  int dim = require<int>(j, "dim", "family.basis");
  if (dim < 1) throw ConfigError("family.basis: dim must be >= 1");
  SideInfoStream side;
  side.dim = dim;
  side.beta = beta;
  if (kind == "constant") {
    side.basis_at = [dim](int) { return Vec(std::size_t(dim), 1.0); };
  } else if (kind == "sine") {
    // [1, 0.5+0.5 sin t, 0.5+0.5 sin 2t, ...]
    side.basis_at = [dim](int t) {
      Vec phi(std::size_t(dim), 1.0);
      for (int i = 1; i < dim; ++i)
        phi[std::size_t(i)] = 0.5 + 0.5 * std::sin(double(i) * double(t));
      return phi;
    };
  } else if (kind == "alternating") {
    // cycles through the coordinate vectors e_1, e_2, ...
    side.basis_at = [dim](int t) {
      Vec phi(std::size_t(dim), 0.0);
      phi[std::size_t((t - 1) % dim)] = 1.0;
      return phi;
    };
  } else if (kind == "seeded") {
    std::uint64_t seed = j.contains("seed") ? j.at("seed").get<std::uint64_t>() : 7;
    side.basis_at = [dim, seed](int t) {
      Vec phi(std::size_t(dim), 0.0);
      for (int i = 0; i < dim; ++i)
        phi[std::size_t(i)] =
            double(splitmix64(derive_seed(seed, std::uint64_t(t)) + std::uint64_t(i)) >> 11) *
            0x1.0p-53;
      return phi;
    };
  } else {
    throw ConfigError("family.basis: unknown kind '" + kind + "'");
  }
  return side;
}

}  // namespace detail

// ---------------------------------------------------------------------------
inline Experiment parse_experiment(const json& cfg) {
  check_keys(cfg,
             {"family", "prior", "n_grid", "method", "bound", "quadrature_grid",
              "seed", "tail_points", "tolerance"},
             "config");
  Experiment e;

  const json& fam = cfg.at("family");
  auto fam_kind = require<std::string>(fam, "kind", "family");
  e.family_name = fam_kind;

  if (fam_kind == "categorical") {
    check_keys(fam, {"kind", "theta"}, "family");
    e.theta0 = require<Vec>(fam, "theta", "family");
    e.family = make_categorical_family(e.theta0);
  } else if (fam_kind == "markov") {
    check_keys(fam, {"kind", "transition", "initial_state"}, "family");
    Matrix p = detail::parse_matrix(fam.at("transition"), "family.transition");
    int init = require<int>(fam, "initial_state", "family");
    auto [family, theta] = make_markov_family(p, init);
    e.family = family;
    e.theta0 = theta;
    e.markov_transition = p;
  } else if (fam_kind == "counterexample") {
    check_keys(fam, {"kind", "theta0", "schedule"}, "family");
    double th0 = require<double>(fam, "theta0", "family");
    if (!fam.contains("schedule")) throw ConfigError("family: missing schedule");
    e.family = std::make_shared<CounterexampleFamily>(detail::parse_schedule(fam.at("schedule")));
    e.theta0 = {th0};
    e.family->check_theta(e.theta0);
  } else if (fam_kind == "flat") {
    check_keys(fam, {"kind", "theta0", "k"}, "family");
    double th0 = require<double>(fam, "theta0", "family");
    int k = require<int>(fam, "k", "family");
    e.family = std::make_shared<FlatFamily>(th0, k);
    e.theta0 = {th0};
    e.higher_order_k = k;
  } else if (fam_kind == "countable") {
    check_keys(fam, {"kind", "members", "mass", "truth_index"}, "family");
    if (!fam.contains("members") || !fam.at("members").is_array() ||
        fam.at("members").empty())
      throw ConfigError("family: countable members must be a nonempty list");
    std::vector<CountableMember> members;
    for (const auto& mj : fam.at("members")) {
      check_keys(mj, {"kind", "theta"}, "family.members[]");
      if (require<std::string>(mj, "kind", "family.members[]") != "categorical")
        throw ConfigError("family.members[]: only categorical members are supported");
      Vec th = require<Vec>(mj, "theta", "family.members[]");
      members.push_back({make_categorical_family(th), th});
    }
    Vec mass = require<Vec>(fam, "mass", "family");
    e.countable = std::make_shared<CountableFamily>(std::move(members), mass);
    e.kind = Experiment::Kind::countable;
    e.truth_index = std::size_t(require<int>(fam, "truth_index", "family"));
    if (e.truth_index >= e.countable->size())
      throw ConfigError("family: truth_index out of range");
    e.bound = BoundVariant::countable;
  } else if (fam_kind == "linreg") {
    check_keys(fam, {"kind", "theta0", "beta", "basis"}, "family");
    double beta = require<double>(fam, "beta", "family");
    Vec th0 = require<Vec>(fam, "theta0", "family");
    if (!fam.contains("basis")) throw ConfigError("family: missing basis");
    SideInfoStream side = detail::parse_basis(fam.at("basis"), beta);
    e.regression = std::make_shared<RegressionFamily>(side, th0);
    e.theta0 = th0;
    e.kind = Experiment::Kind::regression;
    e.bound = BoundVariant::thm3;
  } else {
    throw ConfigError("family: unknown kind '" + fam_kind + "'");
  }

  // prior
  if (e.kind == Experiment::Kind::countable) {
    Vec mass(e.countable->size());
    for (std::size_t i = 0; i < mass.size(); ++i) mass[i] = e.countable->mass(i);
    e.prior = discrete_mass_prior(mass);
    if (cfg.contains("prior")) throw ConfigError("config: countable families carry their prior in 'mass'");
  } else {
    if (!cfg.contains("prior")) throw ConfigError("config: missing prior");
    const json& pj = cfg.at("prior");
    auto pkind = require<std::string>(pj, "kind", "prior");
    if (pkind == "jeffreys") {
      check_keys(pj, {"kind"}, "prior");
      if (e.kind != Experiment::Kind::discrete || e.family_name != "categorical")
        throw ConfigError("prior: jeffreys applies to categorical families");
      e.prior = jeffreys_categorical(int(e.theta0.size()));
    } else if (pkind == "product-dirichlet") {
      check_keys(pj, {"kind"}, "prior");
      if (e.family_name != "markov")
        throw ConfigError("prior: product-dirichlet applies to Markov families");
      e.prior = product_dirichlet_markov(e.family->alphabet());
    } else if (pkind == "uniform") {
      check_keys(pj, {"kind", "lo", "hi"}, "prior");
      double lo = pj.contains("lo") ? pj.at("lo").get<double>() : 0.0;
      double hi = pj.contains("hi") ? pj.at("hi").get<double>() : 1.0;
      e.prior = uniform_prior(lo, hi);
    } else if (pkind == "gaussian") {
      check_keys(pj, {"kind", "mean", "cov"}, "prior");
      Vec mean = require<Vec>(pj, "mean", "prior");
      Matrix cov = detail::parse_matrix(pj.at("cov"), "prior.cov");
      e.prior = gaussian_prior(mean, cov);
      if (e.kind == Experiment::Kind::regression) {
        e.reg_prior_mean = mean;
        e.reg_prior_cov = cov;
      }
    } else {
      throw ConfigError("prior: unknown kind '" + pkind + "'");
    }
  }
  if (e.kind == Experiment::Kind::regression &&
      e.prior.kind != PriorKind::gaussian)
    throw ConfigError("prior: regression families need the gaussian prior");

  // n grid
  if (cfg.contains("n_grid")) {
    const json& gj = cfg.at("n_grid");
    check_keys(gj, {"start", "factor", "count"}, "n_grid");
    double start = require<double>(gj, "start", "n_grid");
    double factor = require<double>(gj, "factor", "n_grid");
    int count = require<int>(gj, "count", "n_grid");
    if (start < 1 || count < 1 || factor <= 0)
      throw ConfigError("n_grid: need start >= 1, factor > 0, count >= 1");
    double x = start;
    for (int i = 0; i < count; ++i) {
      long long n = llround(x);
      if (!e.grid.empty() && n <= e.grid.back())
        throw ConfigError("n_grid: grid must be strictly increasing");
      e.grid.push_back(n);
      x *= factor;
    }
  }

  if (cfg.contains("method")) {
    const json& mj = cfg.at("method");
    check_keys(mj, {"kind", "samples"}, "method");
    auto mk = require<std::string>(mj, "kind", "method");
    if (mk == "exact") {
      e.method = MethodKind::exact;
    } else if (mk == "mc") {
      e.method = MethodKind::monte_carlo;
      e.mc_samples = require<long long>(mj, "samples", "method");
      if (e.mc_samples < 100) throw ConfigError("method: mc needs samples >= 100");
    } else {
      throw ConfigError("method: unknown kind '" + mk + "'");
    }
  }

  if (cfg.contains("bound")) {
    const json& bj = cfg.at("bound");
    check_keys(bj, {"variant", "epsilon", "k"}, "bound");
    auto v = require<std::string>(bj, "variant", "bound");
    if (v == "thm1") e.bound = BoundVariant::thm1;
    else if (v == "thm3") e.bound = BoundVariant::thm3;
    else if (v == "higher-order") e.bound = BoundVariant::higher_order;
    else if (v == "countable") e.bound = BoundVariant::countable;
    else throw ConfigError("bound: unknown variant '" + v + "'");
    if (bj.contains("epsilon")) {
      e.epsilon = bj.at("epsilon").get<double>();
      if (!(e.epsilon > 0.0)) throw ConfigError("bound: epsilon must be > 0");
    }
    if (bj.contains("k")) e.higher_order_k = bj.at("k").get<int>();
  } else if (e.family_name == "flat") {
    e.bound = BoundVariant::higher_order;
  }

  if (cfg.contains("quadrature_grid")) {
    e.quadrature_grid = cfg.at("quadrature_grid").get<int>();
    if (e.quadrature_grid < 16) throw ConfigError("quadrature_grid: need >= 16 nodes");
  }
  if (cfg.contains("seed")) e.seed = cfg.at("seed").get<std::uint64_t>();
  if (cfg.contains("tail_points")) e.tail_points = cfg.at("tail_points").get<int>();
  if (cfg.contains("tolerance")) e.tolerance = cfg.at("tolerance").get<double>();

  // canonical model identifier: family + prior + quadrature resolution
  // (nlohmann::json dumps keys alphabetically, so this is stable)
  json id;
  id["family"] = cfg.at("family");
  if (cfg.contains("prior")) id["prior"] = cfg.at("prior");
  id["quadrature_grid"] = e.quadrature_grid;
  e.model_id = id.dump();
  return e;
}

inline Experiment load_experiment(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  json cfg;
  try {
    in >> cfg;
  } catch (const json::exception& ex) {
    throw ConfigError("config parse error: " + std::string(ex.what()));
  }
  return parse_experiment(cfg);
}

// ---------------------------------------------------------------------------
inline PredictorFactory predictor_factory(const Experiment& e) {
  if (e.kind == Experiment::Kind::countable) {
    auto fam = e.countable;
    return [fam]() -> std::unique_ptr<Predictor> {
      return std::make_unique<CountablePredictor>(fam);
    };
  }
  if (e.kind == Experiment::Kind::regression)
    throw UnsupportedError("predictor factory: regression uses its own conjugate predictor");

  if (e.prior.kind == PriorKind::jeffreys_categorical && e.family_name == "categorical") {
    int alphabet = e.family->alphabet();
    return [alphabet]() -> std::unique_ptr<Predictor> {
      return std::make_unique<KtPredictor>(alphabet);
    };
  }
  if (e.prior.kind == PriorKind::product_dirichlet_markov && e.family_name == "markov") {
    int n = e.family->alphabet();
    int init = e.family->initial_state();
    return [n, init]() -> std::unique_ptr<Predictor> {
      return std::make_unique<MarkovKtPredictor>(n, init);
    };
  }
  if (e.family->dim() == 1 && e.prior.unit_map) {
    auto fam = e.family;
    auto prior = e.prior;
    int grid = e.quadrature_grid;
    return [fam, prior, grid]() -> std::unique_ptr<Predictor> {
      return std::make_unique<QuadraturePredictor>(fam, prior, grid);
    };
  }
  throw UnsupportedError("predictor factory: no conjugate or quadrature mixture for this config");
}

// exact D_n for the regression mixture via the joint-Gaussian KL (Woodbury)
inline RedundancyEstimate regression_exact_redundancy(const Experiment& e, long long n) {
  const auto& fam = *e.regression;
  const int d = fam.dim();
  const double beta = fam.beta();
  Matrix a(static_cast<std::size_t>(d), static_cast<std::size_t>(d));
  for (long long t = 1; t <= n; ++t) {
    Vec phi = fam.side().basis(int(t));
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        a(std::size_t(i), std::size_t(j)) += phi[std::size_t(i)] * phi[std::size_t(j)];
  }
  Matrix sigma_inv = spd_inverse(e.reg_prior_cov);
  Matrix m = sigma_inv;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      m(std::size_t(i), std::size_t(j)) += beta * a(std::size_t(i), std::size_t(j));
  Matrix m_inv = spd_inverse(m);
  // tr(SigmaM^-1 SigmaP) = n - beta tr(M^-1 A)
  double tr = 0.0;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      tr += m_inv(std::size_t(i), std::size_t(j)) * a(std::size_t(j), std::size_t(i));
  double tr_term = double(n) - beta * tr;
  // ln det(I + beta A Sigma)
  Matrix iab = Matrix::identity(std::size_t(d));
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      double s = 0.0;
      for (int k = 0; k < d; ++k)
        s += a(std::size_t(i), std::size_t(k)) * e.reg_prior_cov(std::size_t(k), std::size_t(j));
      iab(std::size_t(i), std::size_t(j)) += beta * s;
    }
  double logdet_ratio = std::log(lu_det(iab));
  Vec delta(std::size_t(d), 0.0);
  for (int i = 0; i < d; ++i)
    delta[std::size_t(i)] = e.theta0[std::size_t(i)] - e.reg_prior_mean[std::size_t(i)];
  Vec ad = a.mul(delta);
  double quad = beta * dot(delta, ad) - beta * beta * quadratic_form(m_inv, ad);
  double value = 0.5 * (tr_term + quad - double(n) + logdet_ratio);
  return {n, value, 0.0, RedundancyMethod::closed_form, 0};
}

// same quantity accumulated step by step: D_n = sum_t E[d_t] with
// d_t = KL(N(theta0^T phi, 1/beta) || N(predictive)) in expectation over y_<t
inline RedundancyEstimate regression_perstep_redundancy(const Experiment& e, long long n) {
  const auto& fam = *e.regression;
  const int d = fam.dim();
  const double beta = fam.beta();
  Matrix sigma_inv = spd_inverse(e.reg_prior_cov);
  Matrix a(static_cast<std::size_t>(d), static_cast<std::size_t>(d));  // running Phi^T Phi
  KahanSum acc;
  for (long long t = 1; t <= n; ++t) {
    Vec phi = fam.side().basis(int(t));
    Matrix prec = sigma_inv;
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        prec(std::size_t(i), std::size_t(j)) += beta * a(std::size_t(i), std::size_t(j));
    Matrix s = spd_inverse(prec);
    // E[m_{t-1}] and Cov[m_{t-1}] under the generating theta0
    Vec rhs = sigma_inv.mul(e.reg_prior_mean);
    Vec atheta = a.mul(e.theta0);
    for (int i = 0; i < d; ++i) rhs[std::size_t(i)] += beta * atheta[std::size_t(i)];
    Vec mean = s.mul(rhs);
    Vec diff(std::size_t(d), 0.0);
    for (int i = 0; i < d; ++i)
      diff[std::size_t(i)] = mean[std::size_t(i)] - e.theta0[std::size_t(i)];
    Vec sphi = s.mul(phi);
    Vec asphi = a.mul(sphi);
    double cov_term = beta * dot(sphi, asphi);
    double err = dot(phi, diff);
    double et = err * err + cov_term;
    double v = 1.0 / beta + dot(phi, sphi);
    acc.add(0.5 * (std::log(v * beta) + (1.0 / beta + et) / v - 1.0));
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        a(std::size_t(i), std::size_t(j)) += phi[std::size_t(i)] * phi[std::size_t(j)];
  }
  return {n, acc.value(), 0.0, RedundancyMethod::closed_form, 0};
}

inline RedundancyEstimate regression_mc_redundancy(const Experiment& e, long long n,
                                                   long long samples,
                                                   std::uint64_t seed) {
  const auto& fam = *e.regression;
  Vec values(std::size_t(samples), 0.0);
  for (long long r = 0; r < samples; ++r) {
    Vec ys = fam.sample(e.theta0, int(n), derive_seed(seed, std::uint64_t(r)));
    GaussianRegressionPredictor pred(e.regression, e.reg_prior_mean, e.reg_prior_cov);
    KahanSum lp;
    for (int t = 1; t <= int(n); ++t) {
      lp.add(fam.log_conditional(e.theta0, t, ys[std::size_t(t) - 1]));
      pred.update(ys[std::size_t(t) - 1]);
    }
    values[std::size_t(r)] = lp.value() - pred.log_marginal();
  }
  KahanSum sum;
  for (double v : values) sum.add(v);
  double mean = sum.value() / double(samples);
  KahanSum sq;
  for (double v : values) sq.add((v - mean) * (v - mean));
  double se = samples > 1 ? std::sqrt(sq.value() / double(samples - 1) / double(samples)) : 0.0;
  return {n, mean, se, RedundancyMethod::monte_carlo, samples};
}

// ---------------------------------------------------------------------------
inline RedundancyEstimate compute_redundancy(const Experiment& e, long long n,
                                             int threads = 1) {
  if (e.kind == Experiment::Kind::regression) {
    if (e.method == MethodKind::monte_carlo)
      return regression_mc_redundancy(e, n, e.mc_samples, e.seed);
    return regression_exact_redundancy(e, n);
  }
  const DiscreteFamily& fam =
      e.kind == Experiment::Kind::countable ? *e.countable->member(e.truth_index).family
                                            : *e.family;
  const Vec& theta0 = e.kind == Experiment::Kind::countable
                          ? e.countable->member(e.truth_index).theta
                          : e.theta0;
  auto factory = predictor_factory(e);
  if (e.method == MethodKind::monte_carlo)
    return mc_redundancy(fam, theta0, factory, n, e.mc_samples, e.seed, threads);
  // exact: prefer the count-based fast path, fall back to enumeration
  if (e.kind != Experiment::Kind::countable) {
    try {
      return exact_redundancy_counts(fam, theta0, factory, n);
    } catch (const UnsupportedError&) {
    } catch (const ConfigError&) {
      // e.g. Markov horizon above the DP cap: fall through to enumeration,
      // which has its own cap and a clear error message
    }
  }
  return exact_redundancy_enumeration(fam, theta0, factory, n);
}

inline BoundReport compute_bound(const Experiment& e, long long n) {
  switch (e.bound) {
    case BoundVariant::countable: {
      if (e.kind != Experiment::Kind::countable)
        throw ConfigError("bound: countable variant needs a countable family");
      BoundReport b = bound_countable(e.countable->mass(e.truth_index), n);
      return b;
    }
    case BoundVariant::thm1: {
      double log_w0, det;
      int d;
      if (e.kind == Experiment::Kind::regression) {
        log_w0 = e.prior.log_density(e.theta0);
        det = lu_det(linreg_fisher(e.regression->side(), n).info);
        d = e.regression->dim();
      } else {
        log_w0 = e.prior.log_density(e.theta0);
        d = e.family->dim();
        if (e.family_name == "categorical") {
          det = structured_det(e.theta0);
        } else if (e.family_name == "markov") {
          det = markov_fisher_det(e.markov_transition);
        } else {
          det = finite_diff_fisher(e.family, e.theta0, n).det();
        }
      }
      return bound_thm1(log_w0, d, n, det);
    }
    case BoundVariant::thm3: {
      double log_w0, spec;
      int d;
      if (e.kind == Experiment::Kind::regression) {
        log_w0 = e.prior.log_density(e.theta0);
        spec = linreg_fisher(e.regression->side(), n).spectral();
        d = e.regression->dim();
      } else {
        log_w0 = e.prior.log_density(e.theta0);
        d = e.family->dim();
        if (e.family_name == "categorical")
          spec = categorical_fisher(e.theta0).spectral();
        else
          spec = finite_diff_fisher(e.family, e.theta0, n).spectral();
      }
      return bound_thm3(log_w0, d, n, spec, e.epsilon);
    }
    case BoundVariant::higher_order: {
      if (e.kind != Experiment::Kind::discrete)
        throw ConfigError("bound: higher-order variant needs a 1-d discrete family");
      double log_w0 = e.prior.log_density(e.theta0);
      auto form = lambda_n(e.family, e.theta0, e.higher_order_k, n);
      return bound_higher_order(log_w0, e.family->dim(), form.order, n, form.lambda);
    }
  }
  throw ConfigError("bound: unresolved variant");
}

// ---------------------------------------------------------------------------
struct RunResult {
  std::vector<RedundancyEstimate> series;
  std::vector<BoundReport> bounds;
  GapReport gap;
  int exit_code = 0;
  std::filesystem::path csv_path;
  std::filesystem::path json_path;
};

inline RunResult run_redundancy(const Experiment& e,
                                const std::filesystem::path& out_dir,
                                int threads = 1) {
  if (e.grid.size() < 3)
    throw ConfigError("n_grid: redundancy runs need at least 3 grid points");
  RunResult res;
  for (long long n : e.grid) {
    res.series.push_back(compute_redundancy(e, n, threads));
    res.bounds.push_back(compute_bound(e, n));
  }
  res.gap = gap_report(res.series, res.bounds, e.tail_points, e.tolerance);
  res.exit_code = res.gap.monotone_tail ? 0 : 2;

  std::filesystem::create_directories(out_dir);
  res.csv_path = out_dir / "redundancy.csv";
  std::ofstream csv(res.csv_path);
  csv << "n,D_n,std_error,method,bound_total,gap\n";
  for (std::size_t i = 0; i < res.series.size(); ++i) {
    const auto& r = res.series[i];
    csv << r.n << ',' << format_g12(r.value) << ',' << format_g12(r.std_error)
        << ',' << method_name(r.method) << ',' << format_g12(res.bounds[i].total)
        << ',' << format_g12(res.gap.gaps[i]) << '\n';
  }
  res.json_path = out_dir / "gap.json";
  std::ofstream js(res.json_path);
  js << to_json(res.gap).dump(2) << '\n';
  return res;
}

struct CounterexampleResult {
  std::vector<RedundancyEstimate> series;
  Vec centered;  // D_n - (1/2) ln(n/2pi)
  bool diverging = false;
  std::filesystem::path csv_path;
};

inline CounterexampleResult run_counterexample(const Experiment& e,
                                               const std::filesystem::path& out_dir) {
  if (e.family_name != "counterexample")
    throw ConfigError("counterexample run: family.kind must be 'counterexample'");
  if (e.grid.size() < 3) throw ConfigError("n_grid: need at least 3 grid points");
  auto factory = predictor_factory(e);
  CounterexampleResult res;
  for (long long n : e.grid) {
    auto est = exact_redundancy_enumeration(*e.family, e.theta0, factory, n);
    res.centered.push_back(est.value - 0.5 * std::log(double(n) / (2.0 * kPi)));
    res.series.push_back(est);
  }
  std::size_t tail = std::min<std::size_t>(4, res.centered.size());
  for (std::size_t i = res.centered.size() - tail; i + 1 < res.centered.size(); ++i)
    if (res.centered[i + 1] > res.centered[i] + e.tolerance) res.diverging = true;

  std::filesystem::create_directories(out_dir);
  res.csv_path = out_dir / "counterexample.csv";
  std::ofstream csv(res.csv_path);
  csv << "n,D_n,centered\n";
  for (std::size_t i = 0; i < res.series.size(); ++i)
    csv << res.series[i].n << ',' << format_g12(res.series[i].value) << ','
        << format_g12(res.centered[i]) << '\n';
  std::ofstream flag(out_dir / "counterexample.json");
  nlohmann::ordered_json j{{"flag", res.diverging ? "diverging" : "converging"}};
  flag << j.dump(2) << '\n';
  return res;
}

}  // namespace mixred
