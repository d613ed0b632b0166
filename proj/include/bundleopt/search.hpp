#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "bundleopt/model.hpp"
#include "bundleopt/qubo.hpp"
#include "bundleopt/qubo_solve.hpp"

namespace bundleopt {

enum class CompareMode { exact, heuristic_portfolio };

struct SearchConfig {
  double epsilon = 1e-4;  // absolute revenue tolerance
  int max_iters = 0;      // 0 = derived from epsilon and the initial interval
  CompareMode compare_mode = CompareMode::exact;
  bool noisy = false;
  double noise_p = 0.1;       // assumed per-compare error rate of the posterior update
  int grid_size = 1024;       // posterior discretization
  double credible_mass = 0.95;
  std::uint64_t seed = 0;
  double heuristic_deadline_ms = 250.0;  // per compare step, per portfolio member budget
  int threads = 1;                       // portfolio concurrency inside the compare step
  ExactBudget exact_budget;
  /// Diagnostic seam: observes each compare outcome (iteration, kappa,
  /// computed result) and may override it. Used to study robustness to
  /// adversarial comparison errors.
  std::function<std::optional<bool>(int, double, bool)> compare_interceptor;

  void validate() const {
    if (!(epsilon > 0.0)) throw std::domain_error("SearchConfig: epsilon must be positive");
    if (!(noise_p > 0.0 && noise_p < 0.5))
      throw std::domain_error("SearchConfig: noise_p must lie in (0, 0.5)");
    if (grid_size < 2) throw std::domain_error("SearchConfig: grid_size must be >= 2");
    if (!(credible_mass > 0.0 && credible_mass < 1.0))
      throw std::domain_error("SearchConfig: credible_mass must lie in (0, 1)");
  }
};

struct SearchIteration {
  double lower = 0.0;
  double upper = 0.0;
  double kappa = 0.0;
  bool compare_true = false;
  Assortment incumbent;
  double incumbent_revenue = 0.0;
  int qubo_vars = 0;
  double posterior_mass = 1.0;  // total posterior mass after the update (noisy mode)
  double wall_ms = 0.0;
};

struct SearchTrace {
  std::vector<SearchIteration> iterations;
  Assortment pruned_in;   // products forced into every compare step (final state)
  Assortment pruned_out;  // products excluded from every compare step (final state)
  bool truncated = false; // a compare step ran out of budget; best incumbent returned
  int qubo_vars_total = 0;
};

struct SearchResult {
  Assortment assortment;
  double revenue = 0.0;
  SearchTrace trace;
};

namespace detail {

struct SearchEngineOptions {
  bool prune = false;                // structural forced-in/forced-out rules
  std::optional<int> cardinality;    // |C| <= cap via penalty embedding
};

class SearchEngine {
 public:
  SearchEngine(const ModelParams& params, const SearchConfig& config, SearchEngineOptions opt)
      : p_(params), cfg_(config), opt_(opt) {
    cfg_.validate();
    if (p_.n() < 1) throw std::domain_error("search: empty product universe");
    if (opt_.prune && opt_.cardinality)
      throw std::logic_error("search: structural pruning is unsound under a cardinality cap");
    if (opt_.cardinality && *opt_.cardinality < 1)
      throw std::domain_error("search: cardinality cap must be >= 1");
  }

  SearchResult run() {
    const int n = p_.n();
    const int top = p_.item_order[0];
    r_top_ = p_.revenue[static_cast<std::size_t>(top)];
    const bool single = n == 1 || (opt_.cardinality && *opt_.cardinality == 1);
    double upper = single ? r_top_
                          : r_top_ + p_.revenue[static_cast<std::size_t>(p_.item_order[1])];
    double lower = 0.0;

    Assortment incumbent(n);
    incumbent.insert(top);
    double incumbent_rev = expected_revenue_k2(p_, incumbent);

    if (opt_.prune) {
      // Revenue-ordered prefixes have nondecreasing revenue while their last
      // item is priced above the optimum, so the first decrease bounds the
      // optimum below by the next item's revenue.
      Assortment prefix(n);
      double prev = 0.0;
      int l = 0;
      for (int k = 0; k < n; ++k) {
        prefix.insert(p_.item_order[static_cast<std::size_t>(k)]);
        const double rev = expected_revenue_k2(p_, prefix);
        if (k > 0 && rev < prev) break;
        prev = rev;
        l = k + 1;
        if (rev > incumbent_rev) {
          incumbent = prefix;
          incumbent_rev = rev;
        }
      }
      lower = l < n ? p_.revenue[static_cast<std::size_t>(p_.item_order[static_cast<std::size_t>(l)])]
                    : 0.0;
    } else if (opt_.cardinality) {
      // Best revenue-ordered set of size <= cap is a valid lower bound.
      Assortment prefix(n);
      const int cap = std::min(*opt_.cardinality, n);
      for (int k = 0; k < cap; ++k) {
        prefix.insert(p_.item_order[static_cast<std::size_t>(k)]);
        const double rev = expected_revenue_k2(p_, prefix);
        if (rev > incumbent_rev) {
          incumbent = prefix;
          incumbent_rev = rev;
        }
      }
      lower = incumbent_rev;
    }
    lower = std::min(lower, upper);

    SearchResult res;
    res.trace.pruned_in = Assortment(n);
    res.trace.pruned_out = Assortment(n);

    const double range = std::max(upper - lower, 0.0);
    int max_iters = cfg_.max_iters;
    if (max_iters <= 0) {
      const int bisect = range <= cfg_.epsilon
                             ? 0
                             : static_cast<int>(std::ceil(std::log2(range / cfg_.epsilon)));
      max_iters = cfg_.noisy ? std::max(48, 4 * bisect) : bisect + 1;
    }

    // Posterior over R(C*) on a fixed grid of cells spanning [L1, U1].
    // Queries go to cell boundaries (the discretized posterior median), so
    // every cell lies entirely on one side of each compare.
    std::vector<double> post;
    double grid_lo = lower, grid_step = 0.0;
    if (cfg_.noisy) {
      post.assign(static_cast<std::size_t>(cfg_.grid_size), 1.0 / cfg_.grid_size);
      grid_step = range > 0.0 ? range / cfg_.grid_size : 0.0;
      grid_lo = lower;
    }
    auto grid_at = [&](int t) { return grid_lo + (t + 0.5) * grid_step; };
    auto quantile_cell = [&](double q) {
      double acc = 0.0;
      for (int t = 0; t < cfg_.grid_size; ++t) {
        acc += post[static_cast<std::size_t>(t)];
        if (acc >= q) return t;
      }
      return cfg_.grid_size - 1;
    };
    // The posterior median usually falls inside one cell; querying only one of
    // that cell's boundaries would leave the opposite tail untouched forever.
    // Randomizing between the two straddling boundaries (weighted by how the
    // median splits them) keeps both sides informative.
    Rng noisy_rng(Rng(cfg_.seed).fork(7).next_u64());
    auto median_boundary = [&]() {
      int m_lo = 0;
      double f_lo = 0.0, acc = 0.0;
      for (int m = 1; m <= cfg_.grid_size - 1; ++m) {
        acc += post[static_cast<std::size_t>(m - 1)];
        if (acc <= 0.5) {
          m_lo = m;
          f_lo = acc;
        } else {
          break;
        }
      }
      if (m_lo == 0) return 1;
      const int m_hi = std::min(m_lo + 1, cfg_.grid_size - 1);
      if (m_hi == m_lo) return m_lo;
      const double f_hi = f_lo + post[static_cast<std::size_t>(m_lo)];
      const double span = f_hi - f_lo;
      const double q_lo = span > 0.0 ? (f_hi - 0.5) / span : 0.5;
      return noisy_rng.uniform() < q_lo ? m_lo : m_hi;
    };

    int iter = 0;
    double post_mass = 1.0;
    for (;;) {
      double cred_lo = lower, cred_hi = upper;
      if (cfg_.noisy) {
        if (grid_step == 0.0) break;
        cred_lo = grid_at(quantile_cell((1.0 - cfg_.credible_mass) / 2.0));
        cred_hi = grid_at(quantile_cell((1.0 + cfg_.credible_mass) / 2.0));
        if (cred_hi - cred_lo < cfg_.epsilon) break;
      } else {
        if (upper - lower <= cfg_.epsilon) break;
      }
      if (iter >= max_iters) break;

      int boundary = 0;
      if (cfg_.noisy) boundary = median_boundary();
      const double kappa = cfg_.noisy ? grid_lo + boundary * grid_step : (lower + upper) / 2.0;

      Assortment fixed_in(n), fixed_out(n);
      if (opt_.prune) {
        const double u_bound = cfg_.noisy ? cred_hi : upper;
        const double l_bound = cfg_.noisy ? cred_lo : lower;
        for (int i = 0; i < n; ++i) {
          const double r = p_.revenue[static_cast<std::size_t>(i)];
          if (r > u_bound) {
            fixed_in.insert(i);
          } else if (r + r_top_ < l_bound) {
            fixed_out.insert(i);
          }
        }
        res.trace.pruned_in = fixed_in;
        res.trace.pruned_out = fixed_out;
      }

      const auto t_it = std::chrono::steady_clock::now();
      QuboInstance ins = build_compare_qubo(p_, std::max(kappa, 0.0), fixed_in, fixed_out);
      if (opt_.cardinality && *opt_.cardinality < n) {
        ins = embed_cardinality(ins, *opt_.cardinality);
      }
      res.trace.qubo_vars_total += ins.n_vars;

      QuboSolution sol;
      bool compare_true = false;
      try {
        if (cfg_.compare_mode == CompareMode::exact) {
          sol = solve_exact(ins, cfg_.exact_budget);
        } else {
          PortfolioConfig pc;
          pc.deadline_ms = cfg_.heuristic_deadline_ms;
          pc.seed = Rng(cfg_.seed).fork(static_cast<std::uint64_t>(iter) + 101).next_u64();
          pc.threads = cfg_.threads;
          sol = solve_heuristic(ins, pc);
        }
      } catch (const QuboBudgetExceeded&) {
        res.trace.truncated = true;
        break;
      }
      compare_true = sol.objective >= ins.threshold;

      Assortment witness = sol.products(ins, n).unite(fixed_in);
      const bool feasible = !opt_.cardinality || witness.size() <= *opt_.cardinality;
      if (feasible) {
        const double wrev = expected_revenue_k2(p_, witness);
        // A failed heuristic compare refutes itself when its own witness
        // already clears the threshold.
        if (!compare_true && cfg_.compare_mode == CompareMode::heuristic_portfolio &&
            wrev >= kappa) {
          compare_true = true;
        }
        if (wrev > incumbent_rev) {
          incumbent = witness;
          incumbent_rev = wrev;
        }
      }
      if (cfg_.compare_interceptor) {
        if (auto forced = cfg_.compare_interceptor(iter, kappa, compare_true)) {
          compare_true = *forced;
        }
      }

      if (cfg_.noisy) {
        double total = 0.0;
        for (int t = 0; t < cfg_.grid_size; ++t) {
          const bool consistent = compare_true ? t >= boundary : t < boundary;
          post[static_cast<std::size_t>(t)] *= consistent ? (1.0 - cfg_.noise_p) : cfg_.noise_p;
          total += post[static_cast<std::size_t>(t)];
        }
        for (auto& m : post) m /= total;
        post_mass = 0.0;
        for (double m : post) post_mass += m;
        cred_lo = grid_at(quantile_cell((1.0 - cfg_.credible_mass) / 2.0));
        cred_hi = grid_at(quantile_cell((1.0 + cfg_.credible_mass) / 2.0));
      } else {
        if (compare_true) {
          lower = kappa;
        } else {
          upper = kappa;
        }
      }

      if (opt_.prune) {
        repair_incumbent(incumbent, incumbent_rev, cfg_.noisy ? cred_lo : lower, fixed_in);
      }

      SearchIteration rec;
      rec.lower = cfg_.noisy ? cred_lo : lower;
      rec.upper = cfg_.noisy ? cred_hi : upper;
      rec.kappa = kappa;
      rec.compare_true = compare_true;
      rec.incumbent = incumbent;
      rec.incumbent_revenue = incumbent_rev;
      rec.qubo_vars = ins.n_vars;
      rec.posterior_mass = post_mass;
      rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_it)
                        .count();
      res.trace.iterations.push_back(std::move(rec));
      ++iter;
    }

    res.assortment = incumbent;
    res.revenue = incumbent_rev;
    return res;
  }

 private:
  /// Keeps the incumbent consistent with the structural rules. Removing an
  /// item with r_i + r_top below the lower bound raises the revenue (its
  /// marginal term is below the set's revenue); adding a product priced above
  /// the upper bound does too. Both edits are applied only when they improve,
  /// which keeps the incumbent-revenue monotonicity intact.
  void repair_incumbent(Assortment& incumbent, double& incumbent_rev, double l_bound,
                        const Assortment& fixed_in) {
    fixed_in.for_each([&](int i) {
      if (!incumbent.contains(i)) {
        Assortment candidate = incumbent;
        candidate.insert(i);
        const double rev = expected_revenue_k2(p_, candidate);
        if (rev > incumbent_rev) {
          incumbent = candidate;
          incumbent_rev = rev;
        }
      }
    });
    bool changed = true;
    while (changed) {
      changed = false;
      for (int i : incumbent.items()) {
        if (p_.revenue[static_cast<std::size_t>(i)] + r_top_ < l_bound && incumbent.size() > 1) {
          Assortment candidate = incumbent;
          candidate.erase(i);
          const double rev = expected_revenue_k2(p_, candidate);
          if (rev > incumbent_rev) {
            incumbent = candidate;
            incumbent_rev = rev;
            changed = true;
            break;
          }
        }
      }
    }
  }

  const ModelParams& p_;
  SearchConfig cfg_;
  SearchEngineOptions opt_;
  double r_top_ = 0.0;
};

}  // namespace detail

/// Plain bisection on the optimal revenue; every compare step answers
/// "max_C R2(C) >= kappa" through a QUBO solve. With exact compares the
/// result is within epsilon of the unconstrained optimum. An optional
/// cardinality cap routes each compare through the penalty embedding.
inline SearchResult binary_search_ao(const ModelParams& params, const SearchConfig& config,
                                     std::optional<int> cardinality = std::nullopt) {
  detail::SearchEngineOptions opt;
  opt.cardinality = cardinality;
  return detail::SearchEngine(params, config, opt).run();
}

/// Structure-exploiting variant (unconstrained only): the lower bound starts
/// at the end of the monotone revenue-ordered prefix, products priced above
/// the upper bound are forced in, and products that cannot pay their way
/// (r_i + r_1 < L) are forced out of every compare step.
inline SearchResult binary_search_ao_efficient(const ModelParams& params,
                                               const SearchConfig& config) {
  detail::SearchEngineOptions opt;
  opt.prune = true;
  return detail::SearchEngine(params, config, opt).run();
}

/// Bayesian bisection for unreliable compares: keeps a discretized posterior
/// over R(C*), queries the posterior median, and reweights the two sides by
/// (1 - noise_p) / noise_p after each outcome. Pruning (when enabled) uses
/// the credible-interval endpoints in place of the deterministic bounds.
inline SearchResult noisy_binary_search_ao(const ModelParams& params, const SearchConfig& config,
                                           bool prune = true) {
  SearchConfig cfg = config;
  cfg.noisy = true;
  detail::SearchEngineOptions opt;
  opt.prune = prune;
  return detail::SearchEngine(params, cfg, opt).run();
}

/// Capacity-constrained search. Structural pruning is disabled (the rules it
/// relies on only hold unconstrained); the incumbent starts at the best revenue-ordered
/// set of size <= cap and every compare step solves the penalty-embedded QUBO.
inline SearchResult constrained_binary_search_ao(const ModelParams& params,
                                                 const SearchConfig& config, int cap) {
  detail::SearchEngineOptions opt;
  opt.cardinality = cap;
  return detail::SearchEngine(params, config, opt).run();
}

}  // namespace bundleopt
