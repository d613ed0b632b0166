#pragma once

// Shared instance generators and independent oracles for the test suites.
// The oracles here deliberately take different code paths from the library:
// revenue is recomputed from choice probabilities, QUBO objectives by a plain
// mask scan, and optima by direct subset enumeration.

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "bundleopt/model.hpp"
#include "bundleopt/qubo.hpp"
#include "bundleopt/rng.hpp"

namespace testutil {

using namespace bundleopt;

/// Random instance with mixed pair sparsity. Revenues descend with index.
inline ModelParams random_model(Rng& rng, int n, double pair_density = 0.6,
                                double v0 = -1.0) {
  std::vector<double> revenue(static_cast<std::size_t>(n));
  for (auto& r : revenue) r = rng.uniform(0.1, 1.0);
  std::sort(revenue.begin(), revenue.end(), std::greater<double>());
  std::vector<double> weights(static_cast<std::size_t>(n));
  for (auto& w : weights) w = rng.uniform(0.05, 1.0);
  ModelParams p;
  p.revenue = std::move(revenue);
  p.item_weight = std::move(weights);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (rng.uniform() < pair_density) p.pair_weight.set(i, j, rng.uniform(0.0, 1.0));
    }
  }
  p.v0 = v0 > 0.0 ? v0 : rng.uniform(0.5, 2.0);
  p.finalize();
  return p;
}

inline Assortment mask_to_assortment(int n, std::uint32_t mask) {
  Assortment a(n);
  for (int i = 0; i < n; ++i) {
    if ((mask >> i) & 1u) a.insert(i);
  }
  return a;
}

/// Revenue recomputed through choice probabilities: R(C) = sum_S P(S) r_S.
inline double revenue_via_probabilities(const ModelParams& p, const Assortment& offered,
                                         int k_max = 2) {
  const auto items = offered.items();
  double total = 0.0;
  for (std::size_t a = 0; a < items.size(); ++a) {
    total += choice_probability(p, offered, Bundle{items[a]}, k_max) *
             p.revenue[static_cast<std::size_t>(items[a])];
    if (k_max >= 2) {
      for (std::size_t b = a + 1; b < items.size(); ++b) {
        total += choice_probability(p, offered, Bundle{items[a], items[b]}, k_max) *
                 (p.revenue[static_cast<std::size_t>(items[a])] +
                  p.revenue[static_cast<std::size_t>(items[b])]);
      }
    }
  }
  return total;
}

/// Plain subset scan returning the best (revenue, mask); the revenue of each
/// subset is evaluated from scratch.
inline std::pair<double, std::uint32_t> enumerate_best_r2(const ModelParams& p,
                                                          std::optional<int> cap = std::nullopt) {
  const int n = p.n();
  double best = 0.0;
  std::uint32_t best_mask = 0;
  for (std::uint32_t mask = 0; mask < (std::uint32_t{1} << n); ++mask) {
    if (cap && std::popcount(mask) > *cap) continue;
    const double rev = expected_revenue_k2(p, mask_to_assortment(n, mask));
    if (rev > best) {
      best = rev;
      best_mask = mask;
    }
  }
  return {best, best_mask};
}

/// Exhaustive QUBO maximum via direct objective evaluation.
inline double exhaustive_qubo_max(const QuboInstance& ins) {
  double best = -std::numeric_limits<double>::infinity();
  std::vector<std::uint8_t> x(static_cast<std::size_t>(ins.n_vars), 0);
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << ins.n_vars); ++mask) {
    for (int i = 0; i < ins.n_vars; ++i) x[static_cast<std::size_t>(i)] = (mask >> i) & 1u;
    best = std::max(best, ins.evaluate(x));
  }
  return best;
}

/// Value-conscious instance: strictly descending revenues with
/// V_i = c / r_i and V_ij = c' / (r_i + r_j), which satisfies both halves of
/// the value-conscious parameter ordering simultaneously.
inline ModelParams make_value_conscious(Rng& rng, int n) {
  std::vector<double> revenue(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) revenue[static_cast<std::size_t>(i)] = rng.uniform(0.2, 1.0);
  std::sort(revenue.begin(), revenue.end(), std::greater<double>());
  for (int i = 1; i < n; ++i) {
    if (revenue[static_cast<std::size_t>(i)] >= revenue[static_cast<std::size_t>(i - 1)]) {
      revenue[static_cast<std::size_t>(i)] = revenue[static_cast<std::size_t>(i - 1)] * 0.999;
    }
  }
  const double c = rng.uniform(0.05, 0.3);
  const double c2 = rng.uniform(0.05, 0.3);
  ModelParams p;
  p.revenue = revenue;
  p.item_weight.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) p.item_weight[static_cast<std::size_t>(i)] = c / revenue[static_cast<std::size_t>(i)];
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      p.pair_weight.set(i, j, c2 / (revenue[static_cast<std::size_t>(i)] + revenue[static_cast<std::size_t>(j)]));
    }
  }
  p.v0 = rng.uniform(0.5, 1.5);
  p.finalize();
  return p;
}

/// Instance satisfying the small-pair-weight assumption at ratio eps:
/// every V_ij <= eps * min(v0, min_i V_i).
inline ModelParams make_small_pairs(Rng& rng, int n, double eps) {
  ModelParams p;
  p.revenue.resize(static_cast<std::size_t>(n));
  for (auto& r : p.revenue) r = rng.uniform(0.1, 1.0);
  std::sort(p.revenue.begin(), p.revenue.end(), std::greater<double>());
  p.item_weight.resize(static_cast<std::size_t>(n));
  for (auto& w : p.item_weight) w = rng.uniform(0.5, 1.5);
  p.v0 = rng.uniform(0.6, 1.2);
  double min_v = p.v0;
  for (double w : p.item_weight) min_v = std::min(min_v, w);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      p.pair_weight.set(i, j, rng.uniform(0.0, eps * min_v));
    }
  }
  p.finalize();
  return p;
}

}  // namespace testutil
