#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mixred/common.hpp"
#include "mixred/families.hpp"
#include "mixred/mixtures.hpp"

namespace mixred {

enum class RedundancyMethod { enumeration, counts_exact, monte_carlo, closed_form };

inline const char* method_name(RedundancyMethod m) {
  switch (m) {
    case RedundancyMethod::enumeration: return "enumeration";
    case RedundancyMethod::counts_exact: return "counts-exact";
    case RedundancyMethod::monte_carlo: return "monte-carlo";
    case RedundancyMethod::closed_form: return "closed-form";
  }
  return "?";
}

// D(P^n_theta0 || M^n) in nats
struct RedundancyEstimate {
  long long n = 0;
  double value = 0.0;
  double std_error = 0.0;  // 0 for exact methods
  RedundancyMethod method = RedundancyMethod::enumeration;
  long long samples = 0;
};

// chain-rule view: either exact per-step expectations E[d_t] or the
// per-sequence increments ln p(w_t|.) - ln m(w_t|.) for one realization
struct RedundancyTrajectory {
  Vec per_step;
  bool expected = true;

  double total() const {
    KahanSum s;
    for (double x : per_step) s.add(x);
    return s.value();
  }
  Vec cumulative() const {
    Vec c(per_step.size());
    KahanSum s;
    for (std::size_t i = 0; i < per_step.size(); ++i) {
      s.add(per_step[i]);
      c[i] = s.value();
    }
    return c;
  }
};

namespace detail {

inline void check_enumeration_cap(int alphabet, long long n) {
  if (std::pow(double(alphabet), double(n)) > 1e7)
    throw ConfigError("enumeration: |alphabet|^n exceeds the 1e7 cap");
}

// depth-first walk over all length-n sequences; visit(logp, logm) at leaves,
// per_step collects exact E[d_t] along the way
inline void enumerate_walk(const DiscreteFamily& family,
                           std::span<const double> theta0,
                           const Predictor& root, long long n, KahanSum& total,
                           std::vector<KahanSum>* per_step) {
  std::vector<int> prefix;
  prefix.reserve(std::size_t(n));
  std::function<void(const Predictor&, long long, double)> walk =
      [&](const Predictor& pred, long long depth, double logp) {
        if (depth == n) {
          total.add(std::exp(logp) * (logp - pred.log_marginal()));
          return;
        }
        if (per_step) {
          KahanSum step;
          for (int k = 0; k < family.alphabet(); ++k) {
            double lp = family.log_conditional(theta0, prefix, int(depth) + 1, k);
            double lm = pred.log_predict(k);
            step.add(std::exp(lp) * (lp - lm));
          }
          (*per_step)[std::size_t(depth)].add(std::exp(logp) * step.value());
        }
        for (int k = 0; k < family.alphabet(); ++k) {
          double lp = family.log_conditional(theta0, prefix, int(depth) + 1, k);
          auto child = pred.clone();
          child->update(k);
          prefix.push_back(k);
          walk(*child, depth + 1, logp + lp);
          prefix.pop_back();
        }
      };
  walk(root, 0, 0.0);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// full enumeration of Omega^n (finite alphabets, |Omega|^n <= 1e7)
inline RedundancyEstimate exact_redundancy_enumeration(
    const DiscreteFamily& family, std::span<const double> theta0,
    const PredictorFactory& make_predictor, long long n) {
  family.check_theta(theta0);
  detail::check_enumeration_cap(family.alphabet(), n);
  auto root = make_predictor();
  KahanSum total;
  detail::enumerate_walk(family, theta0, *root, n, total, nullptr);
  return {n, total.value(), 0.0, RedundancyMethod::enumeration, 0};
}

// exact per-step expectations E[d_t]; their sum is D_n
inline RedundancyTrajectory chain_rule_decomposition(
    const DiscreteFamily& family, std::span<const double> theta0,
    const PredictorFactory& make_predictor, long long n) {
  family.check_theta(theta0);
  detail::check_enumeration_cap(family.alphabet(), n);
  auto root = make_predictor();
  KahanSum total;
  std::vector<KahanSum> steps(static_cast<std::size_t>(n));
  detail::enumerate_walk(family, theta0, *root, n, total, &steps);
  RedundancyTrajectory traj;
  traj.expected = true;
  traj.per_step.resize(std::size_t(n));
  for (std::size_t t = 0; t < steps.size(); ++t) traj.per_step[t] = steps[t].value();
  return traj;
}

// pointwise redundancy increments along one realization
inline RedundancyTrajectory per_sequence_redundancy(
    const DiscreteFamily& family, std::span<const double> theta0,
    const PredictorFactory& make_predictor, std::span<const int> sequence) {
  family.check_theta(theta0);
  auto pred = make_predictor();
  RedundancyTrajectory traj;
  traj.expected = false;
  traj.per_step.reserve(sequence.size());
  for (std::size_t t = 0; t < sequence.size(); ++t) {
    int sym = sequence[t];
    double lp = family.log_conditional(theta0, sequence.subspan(0, t), int(t) + 1, sym);
    double lm = pred->log_predict(sym);
    pred->update(sym);
    traj.per_step.push_back(lp - lm);
  }
  return traj;
}

// ---------------------------------------------------------------------------
// count-based exact paths

namespace detail {

// i.i.d. families: sum over count vectors with multinomial weights
inline double counts_exact_iid(const DiscreteFamily& family,
                               std::span<const double> theta0,
                               const Predictor& pred, long long n) {
  const int a = family.alphabet();
  Vec logp1(std::size_t(a), 0.0);
  for (int k = 0; k < a; ++k) logp1[std::size_t(k)] = family.log_conditional(theta0, {}, 1, k);

  KahanSum total;
  std::vector<long long> counts(std::size_t(a), 0);
  // binary fast path keeps the loop flat for n up to 1e4
  if (a == 2) {
    for (long long j = 0; j <= n; ++j) {
      counts[0] = n - j;
      counts[1] = j;
      double logw = ln_binomial(n, j) + double(n - j) * logp1[0] + double(j) * logp1[1];
      double logp = double(n - j) * logp1[0] + double(j) * logp1[1];
      double logm = pred.log_marginal_counts(counts);
      total.add(std::exp(logw) * (logp - logm));
    }
    return total.value();
  }
  long long classes = 0;
  std::function<void(int, long long, double)> rec = [&](int sym, long long left,
                                                        double logw_prefix) {
    if (sym == a - 1) {
      counts[std::size_t(sym)] = left;
      double logw = logw_prefix - std::lgamma(double(left) + 1.0) +
                    double(left) * logp1[std::size_t(sym)];
      double logp = 0.0;
      for (int k = 0; k < a; ++k) logp += double(counts[std::size_t(k)]) * logp1[std::size_t(k)];
      double logm = pred.log_marginal_counts(counts);
      total.add(std::exp(logw) * (logp - logm));
      if (++classes > 10000000) throw ConfigError("counts-exact: class count exceeds 1e7");
      return;
    }
    for (long long c = 0; c <= left; ++c) {
      counts[std::size_t(sym)] = c;
      rec(sym + 1, left - c,
          logw_prefix - std::lgamma(double(c) + 1.0) + double(c) * logp1[std::size_t(sym)]);
    }
  };
  rec(0, n, std::lgamma(double(n) + 1.0));
  return total.value();
}

// binary Markov chains: dynamic programming over transition-count classes
inline double counts_exact_markov2(const MarkovFamily& family,
                                   std::span<const double> theta0,
                                   const MarkovKtPredictor& pred, long long n) {
  if (family.alphabet() != 2)
    throw UnsupportedError("counts-exact: Markov path implemented for N = 2 only");
  if (n > 256)
    throw ConfigError("counts-exact: binary Markov path capped at n <= 256");
  double p[2][2];
  std::vector<int> hist(1, 0);
  for (int j = 0; j < 2; ++j) {
    hist[0] = j;
    for (int k = 0; k < 2; ++k)
      p[j][k] = std::exp(family.log_conditional(theta0, hist, 1, k));
  }
  // key packs (state, n00, n01, n10, n11) into 9-bit fields
  auto pack = [](int s, long long a, long long b, long long c, long long d) {
    return (std::uint64_t(s) << 36) | (std::uint64_t(a) << 27) |
           (std::uint64_t(b) << 18) | (std::uint64_t(c) << 9) | std::uint64_t(d);
  };
  std::unordered_map<std::uint64_t, double> cur;
  cur.emplace(pack(family.initial_state(), 0, 0, 0, 0), 1.0);
  for (long long t = 0; t < n; ++t) {
    std::unordered_map<std::uint64_t, double> next;
    next.reserve(cur.size() * 2);
    for (const auto& [key, prob] : cur) {
      int s = int(key >> 36);
      long long cnt[4] = {(long long)(key >> 27) & 0x1FF, (long long)(key >> 18) & 0x1FF,
                          (long long)(key >> 9) & 0x1FF, (long long)key & 0x1FF};
      for (int k = 0; k < 2; ++k) {
        long long c2[4] = {cnt[0], cnt[1], cnt[2], cnt[3]};
        c2[s * 2 + k] += 1;
        next[pack(k, c2[0], c2[1], c2[2], c2[3])] += prob * p[s][k];
      }
    }
    cur = std::move(next);
  }
  // deterministic accumulation order regardless of hashing details
  std::vector<std::pair<std::uint64_t, double>> classes(cur.begin(), cur.end());
  std::sort(classes.begin(), classes.end());
  KahanSum total;
  for (const auto& [key, prob] : classes) {
    long long cnt[4] = {(long long)(key >> 27) & 0x1FF, (long long)(key >> 18) & 0x1FF,
                        (long long)(key >> 9) & 0x1FF, (long long)key & 0x1FF};
    double logp = 0.0;
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k)
        if (cnt[j * 2 + k]) logp += double(cnt[j * 2 + k]) * std::log(p[j][k]);
    double logm = pred.log_marginal_transition_counts(
        std::span<const long long>(cnt, 4));
    total.add(prob * (logp - logm));
  }
  return total.value();
}

}  // namespace detail

// exact D_n through count sufficiency of the mixture; supports i.i.d.
// families with exchangeable mixtures and binary Markov chains with the
// per-row Dirichlet mixture
inline RedundancyEstimate exact_redundancy_counts(
    const DiscreteFamily& family, std::span<const double> theta0,
    const PredictorFactory& make_predictor, long long n) {
  family.check_theta(theta0);
  auto pred = make_predictor();
  double value;
  switch (family.history_kind()) {
    case HistoryKind::none: {
      if (!pred->counts_sufficient())
        throw UnsupportedError("counts-exact: mixture is not count-sufficient");
      value = detail::counts_exact_iid(family, theta0, *pred, n);
      break;
    }
    case HistoryKind::last_state: {
      auto* markov_family = dynamic_cast<const MarkovFamily*>(&family);
      auto* markov_pred = dynamic_cast<const MarkovKtPredictor*>(pred.get());
      if (!markov_family || !markov_pred)
        throw UnsupportedError("counts-exact: Markov path needs the per-row Dirichlet mixture");
      value = detail::counts_exact_markov2(*markov_family, theta0, *markov_pred, n);
      break;
    }
    default:
      throw UnsupportedError("counts-exact: family has no count sufficiency");
  }
  return {n, value, 0.0, RedundancyMethod::counts_exact, 0};
}

// ---------------------------------------------------------------------------
// Monte Carlo estimate over S seeded replicates. Replicate r always draws
// from derive_seed(seed, r) and results land in fixed slots, so any thread
// count reproduces the sequential output bit for bit.
inline RedundancyEstimate mc_redundancy(const DiscreteFamily& family,
                                        std::span<const double> theta0,
                                        const PredictorFactory& make_predictor,
                                        long long n, long long samples,
                                        std::uint64_t seed, int threads = 1) {
  family.check_theta(theta0);
  if (samples < 100) throw ConfigError("mc: need at least 100 samples");
  Vec theta(theta0.begin(), theta0.end());
  Vec values(std::size_t(samples), 0.0);

  auto run_range = [&](long long lo, long long hi) {
    for (long long r = lo; r < hi; ++r) {
      auto [seq, logp] =
          sample_sequence_with_logp(family, theta, int(n), derive_seed(seed, std::uint64_t(r)));
      auto pred = make_predictor();
      for (int sym : seq) pred->update(sym);
      values[std::size_t(r)] = logp - pred->log_marginal();
    }
  };

  threads = std::max(1, threads);
  if (threads == 1) {
    run_range(0, samples);
  } else {
    std::vector<std::thread> pool;
    long long chunk = (samples + threads - 1) / threads;
    for (int w = 0; w < threads; ++w) {
      long long lo = w * chunk;
      long long hi = std::min(samples, lo + chunk);
      if (lo >= hi) break;
      pool.emplace_back(run_range, lo, hi);
    }
    for (auto& th : pool) th.join();
  }

  KahanSum sum;
  for (double v : values) sum.add(v);
  double mean = sum.value() / double(samples);
  KahanSum sq;
  for (double v : values) sq.add((v - mean) * (v - mean));
  double variance = samples > 1 ? sq.value() / double(samples - 1) : 0.0;
  double se = std::sqrt(variance / double(samples));
  return {n, mean, se, RedundancyMethod::monte_carlo, samples};
}

// average of per-sequence trajectories over the same seeded replicates used
// by mc_redundancy; final entry equals the mc mean exactly
inline RedundancyTrajectory mc_mean_trajectory(const DiscreteFamily& family,
                                               std::span<const double> theta0,
                                               const PredictorFactory& make_predictor,
                                               long long n, long long samples,
                                               std::uint64_t seed) {
  family.check_theta(theta0);
  Vec theta(theta0.begin(), theta0.end());
  std::vector<KahanSum> acc(static_cast<std::size_t>(n));
  for (long long r = 0; r < samples; ++r) {
    auto seq = sample_sequence(family, theta, int(n), derive_seed(seed, std::uint64_t(r)));
    auto traj = per_sequence_redundancy(family, theta, make_predictor, seq);
    for (std::size_t t = 0; t < traj.per_step.size(); ++t) acc[t].add(traj.per_step[t]);
  }
  RedundancyTrajectory out;
  out.expected = true;
  out.per_step.resize(std::size_t(n));
  for (std::size_t t = 0; t < acc.size(); ++t) out.per_step[t] = acc[t].value() / double(samples);
  return out;
}

}  // namespace mixred
