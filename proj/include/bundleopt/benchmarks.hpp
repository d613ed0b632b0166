#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "bundleopt/model.hpp"

namespace bundleopt {

struct OptResult {
  Assortment assortment;
  double revenue = 0.0;
};

namespace detail {

/// Dense pair-weight matrix for tight enumeration loops.
struct DenseTheta {
  int n;
  std::vector<double> pair;  // n*n, symmetric, zero diagonal

  explicit DenseTheta(const ModelParams& p) : n(p.n()), pair(static_cast<std::size_t>(p.n()) * p.n(), 0.0) {
    for (const auto& e : p.pair_weight.entries()) {
      pair[static_cast<std::size_t>(e.i) * n + e.j] = e.v;
      pair[static_cast<std::size_t>(e.j) * n + e.i] = e.v;
    }
  }
  double at(int i, int j) const { return pair[static_cast<std::size_t>(i) * n + j]; }
};

/// Lexicographic comparison of two assortment masks as sorted index sequences.
inline bool lex_less(std::uint32_t a, std::uint32_t b) {
  while (a != 0 || b != 0) {
    if (a == 0) return true;
    if (b == 0) return false;
    const int ia = std::countr_zero(a), ib = std::countr_zero(b);
    if (ia != ib) return ia < ib;
    a &= a - 1;
    b &= b - 1;
  }
  return false;
}

inline bool better_tied(std::uint32_t cand, std::uint32_t best) {
  const int cc = std::popcount(cand), cb = std::popcount(best);
  if (cc != cb) return cc < cb;
  return lex_less(cand, best);
}

}  // namespace detail

/// Exhaustive optimum: the ground-truth oracle. Ties break toward smaller
/// cardinality, then lexicographically smaller index sets. Guards: n <= 20
/// unconstrained (n <= 15 for k_max = 3); with a cap the subset count must
/// stay below 10^6.
inline OptResult brute_force_opt(const ModelParams& p, int k_max = 2,
                                 std::optional<int> cap = std::nullopt);

namespace detail {

/// Combination enumeration (k = 2 only) for capped instances too wide for the
/// mask walk. Guarded to 1e6 subsets.
inline OptResult brute_force_capped(const ModelParams& p, int cap) {
  const int n = p.n();
  {
    double c = 1.0, total = 1.0;
    for (int s = 1; s <= cap; ++s) {
      c = c * (n - s + 1) / s;
      total += c;
      if (total > 1e6) throw std::length_error("brute_force_opt: more than 1e6 capped subsets");
    }
  }
  const DenseTheta th(p);
  OptResult best;
  best.assortment = Assortment(n);
  best.revenue = 0.0;
  std::vector<int> stack;
  double num = 0.0, den = 0.0;

  auto consider = [&]() {
    const double rev = stack.empty() ? 0.0 : num / (p.v0 + den);
    if (rev > best.revenue ||
        (rev == best.revenue && static_cast<int>(stack.size()) < best.assortment.size())) {
      best.revenue = rev;
      best.assortment = Assortment(n);
      for (int i : stack) best.assortment.insert(i);
    }
  };

  auto rec = [&](auto&& self, int from) -> void {
    consider();
    if (static_cast<int>(stack.size()) == cap) return;
    for (int i = from; i < n; ++i) {
      double dnum = p.revenue[static_cast<std::size_t>(i)] * p.item_weight[static_cast<std::size_t>(i)];
      double dden = p.item_weight[static_cast<std::size_t>(i)];
      for (int j : stack) {
        const double v = th.at(i, j);
        dnum += (p.revenue[static_cast<std::size_t>(i)] + p.revenue[static_cast<std::size_t>(j)]) * v;
        dden += v;
      }
      num += dnum;
      den += dden;
      stack.push_back(i);
      self(self, i + 1);
      stack.pop_back();
      num -= dnum;
      den -= dden;
    }
  };
  rec(rec, 0);
  return best;
}

}  // namespace detail

inline OptResult brute_force_opt(const ModelParams& p, int k_max, std::optional<int> cap) {
  const int n = p.n();
  if (k_max < 1 || k_max > 3) throw std::domain_error("brute_force_opt: k_max must be 1..3");
  if (cap && *cap < 0) throw std::domain_error("brute_force_opt: negative cap");
  if (n > 20 || (k_max == 3 && n > 15)) {
    if (cap && k_max == 2) return detail::brute_force_capped(p, std::min(*cap, n));
    throw std::length_error("brute_force_opt: instance too large for enumeration");
  }

  const detail::DenseTheta th(p);
  const std::uint32_t total = std::uint32_t{1} << n;
  const int max_card = cap ? std::min(*cap, n) : n;

  // Gray-code walk with incremental sums; a fresh recomputation every 4096
  // steps stops drift from accumulating.
  std::uint32_t mask = 0;
  double num = 0.0, den = 0.0;
  std::vector<std::uint8_t> in(static_cast<std::size_t>(n), 0);
  int card = 0;

  std::uint32_t best_mask = 0;
  double best_rev = 0.0;

  auto eval_k13 = [&](std::uint32_t m) {
    Assortment a(n);
    for (int i = 0; i < n; ++i) {
      if ((m >> i) & 1u) a.insert(i);
    }
    return expected_revenue_k(p, a, k_max);
  };

  for (std::uint32_t g = 1; g < total; ++g) {
    const int i = std::countr_zero(g);
    const bool adding = !in[static_cast<std::size_t>(i)];
    double dnum = p.revenue[static_cast<std::size_t>(i)] * p.item_weight[static_cast<std::size_t>(i)];
    double dden = p.item_weight[static_cast<std::size_t>(i)];
    for (int j = 0; j < n; ++j) {
      if (j != i && in[static_cast<std::size_t>(j)]) {
        const double v = th.at(i, j);
        dnum += (p.revenue[static_cast<std::size_t>(i)] + p.revenue[static_cast<std::size_t>(j)]) * v;
        dden += v;
      }
    }
    if (adding) {
      num += dnum;
      den += dden;
      in[static_cast<std::size_t>(i)] = 1;
      mask |= std::uint32_t{1} << i;
      ++card;
    } else {
      in[static_cast<std::size_t>(i)] = 0;
      mask &= ~(std::uint32_t{1} << i);
      --card;
      num -= dnum;
      den -= dden;
    }
    if ((g & 0xFFFu) == 0) {
      num = 0.0;
      den = 0.0;
      for (int a = 0; a < n; ++a) {
        if (!in[static_cast<std::size_t>(a)]) continue;
        num += p.revenue[static_cast<std::size_t>(a)] * p.item_weight[static_cast<std::size_t>(a)];
        den += p.item_weight[static_cast<std::size_t>(a)];
        for (int b = a + 1; b < n; ++b) {
          if (in[static_cast<std::size_t>(b)]) {
            const double v = th.at(a, b);
            num += (p.revenue[static_cast<std::size_t>(a)] + p.revenue[static_cast<std::size_t>(b)]) * v;
            den += v;
          }
        }
      }
    }
    if (card > max_card) continue;
    const double rev = k_max == 2 ? num / (p.v0 + den) : eval_k13(mask);
    if (rev > best_rev || (rev == best_rev && detail::better_tied(mask, best_mask))) {
      best_rev = rev;
      best_mask = mask;
    }
  }

  OptResult out;
  out.assortment = Assortment(n);
  for (int i = 0; i < n; ++i) {
    if ((best_mask >> i) & 1u) out.assortment.insert(i);
  }
  out.revenue = best_rev;
  return out;
}

/// Best revenue-ordered prefix under the pair model (prefixes A_1..A_n, or
/// A_1..A_cap under a cap). Incremental running sums give O(n + nnz) total.
inline OptResult revenue_ordered(const ModelParams& p, std::optional<int> cap = std::nullopt) {
  const int n = p.n();
  std::vector<std::vector<std::pair<int, double>>> adj(static_cast<std::size_t>(n));
  for (const auto& e : p.pair_weight.entries()) {
    adj[static_cast<std::size_t>(e.i)].emplace_back(e.j, e.v);
    adj[static_cast<std::size_t>(e.j)].emplace_back(e.i, e.v);
  }
  std::vector<int> rank(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) rank[static_cast<std::size_t>(p.item_order[static_cast<std::size_t>(k)])] = k;

  const int limit = cap ? std::min(*cap, n) : n;
  double num = 0.0, den = 0.0;
  double best_rev = 0.0;
  int best_len = 0;
  for (int k = 0; k < limit; ++k) {
    const int i = p.item_order[static_cast<std::size_t>(k)];
    num += p.revenue[static_cast<std::size_t>(i)] * p.item_weight[static_cast<std::size_t>(i)];
    den += p.item_weight[static_cast<std::size_t>(i)];
    for (const auto& [j, v] : adj[static_cast<std::size_t>(i)]) {
      if (rank[static_cast<std::size_t>(j)] < k) {
        num += (p.revenue[static_cast<std::size_t>(i)] + p.revenue[static_cast<std::size_t>(j)]) * v;
        den += v;
      }
    }
    const double rev = num / (p.v0 + den);
    if (rev > best_rev) {
      best_rev = rev;
      best_len = k + 1;
    }
  }
  OptResult out;
  out.assortment = Assortment(n);
  for (int k = 0; k < best_len; ++k) out.assortment.insert(p.item_order[static_cast<std::size_t>(k)]);
  out.revenue = best_len == 0 ? 0.0 : best_rev;
  return out;
}

/// Greedy add/delete/exchange local search over move sets of size <= l, with a
/// per-product removal budget b (a removed product may be re-added at most b
/// times). Stops at the first iteration with no strictly improving move.
inline OptResult adxopt_l(const ModelParams& p, int l, int b = 0,
                          std::optional<int> cap = std::nullopt) {
  if (l < 1 || l > 2) throw std::domain_error("adxopt_l: l must be 1 or 2");
  const int n = p.n();
  if (b <= 0) b = l * n;  // generalizes the single-item convention
  const detail::DenseTheta th(p);
  const int max_card = cap ? std::min(*cap, n) : n;

  std::vector<std::uint8_t> in(static_cast<std::size_t>(n), 0);
  std::vector<int> removals(static_cast<std::size_t>(n), 0);
  std::vector<int> members;
  double num = 0.0, den = 0.0, cur_rev = 0.0;

  // Marginal sums of adding/removing item i against the member list `base`.
  auto delta = [&](int i, const std::vector<int>& base, double& dnum, double& dden) {
    dnum = p.revenue[static_cast<std::size_t>(i)] * p.item_weight[static_cast<std::size_t>(i)];
    dden = p.item_weight[static_cast<std::size_t>(i)];
    for (int j : base) {
      if (j != i) {
        const double v = th.at(i, j);
        dnum += (p.revenue[static_cast<std::size_t>(i)] + p.revenue[static_cast<std::size_t>(j)]) * v;
        dden += v;
      }
    }
  };

  struct Move {
    double rev = -1.0;
    std::vector<int> add, del;
  };

  for (;;) {
    Move best;
    best.rev = cur_rev;
    bool found = false;

    auto consider = [&](const std::vector<int>& del, const std::vector<int>& add) {
      if (static_cast<int>(members.size() - del.size() + add.size()) > max_card) return;
      std::vector<int> base = members;
      double tnum = num, tden = den;
      for (int d : del) {
        double dn, dd;
        delta(d, base, dn, dd);
        tnum -= dn;
        tden -= dd;
        base.erase(std::find(base.begin(), base.end(), d));
      }
      for (int a : add) {
        double dn, dd;
        delta(a, base, dn, dd);
        tnum += dn;
        tden += dd;
        base.push_back(a);
      }
      const double rev = tnum / (p.v0 + tden);
      if (rev > best.rev) {
        best.rev = rev;
        best.add = add;
        best.del = del;
        found = true;
      }
    };

    std::vector<int> addable;
    for (int i = 0; i < n; ++i) {
      if (!in[static_cast<std::size_t>(i)] && removals[static_cast<std::size_t>(i)] < b)
        addable.push_back(i);
    }

    auto for_subsets = [&](const std::vector<int>& pool, auto&& fn) {
      for (std::size_t a = 0; a < pool.size(); ++a) {
        fn(std::vector<int>{pool[a]});
        if (l >= 2) {
          for (std::size_t c = a + 1; c < pool.size(); ++c) {
            fn(std::vector<int>{pool[a], pool[c]});
          }
        }
      }
    };

    for_subsets(addable, [&](const std::vector<int>& add) { consider({}, add); });
    for_subsets(members, [&](const std::vector<int>& del) { consider(del, {}); });
    for_subsets(members, [&](const std::vector<int>& del) {
      for_subsets(addable, [&](const std::vector<int>& add) { consider(del, add); });
    });

    if (!found) break;
    for (int d : best.del) {
      in[static_cast<std::size_t>(d)] = 0;
      ++removals[static_cast<std::size_t>(d)];
      members.erase(std::find(members.begin(), members.end(), d));
    }
    for (int a : best.add) {
      in[static_cast<std::size_t>(a)] = 1;
      members.push_back(a);
    }
    num = 0.0;
    den = 0.0;
    for (std::size_t x = 0; x < members.size(); ++x) {
      const int i = members[x];
      num += p.revenue[static_cast<std::size_t>(i)] * p.item_weight[static_cast<std::size_t>(i)];
      den += p.item_weight[static_cast<std::size_t>(i)];
      for (std::size_t y = x + 1; y < members.size(); ++y) {
        const int j = members[y];
        const double v = th.at(i, j);
        num += (p.revenue[static_cast<std::size_t>(i)] + p.revenue[static_cast<std::size_t>(j)]) * v;
        den += v;
      }
    }
    cur_rev = members.empty() ? 0.0 : num / (p.v0 + den);
    bool any_budget = false;
    for (int i = 0; i < n; ++i) any_budget |= removals[static_cast<std::size_t>(i)] < b;
    if (!any_budget) break;
  }

  OptResult out;
  out.assortment = Assortment(n);
  for (int i : members) out.assortment.insert(i);
  out.revenue = cur_rev;
  return out;
}

/// Linear-time optimum under the single-choice (MNL) reduction: scans the
/// revenue-ordered prefixes with pair weights ignored.
inline OptResult mnl_opt(const ModelParams& p) {
  const int n = p.n();
  double num = 0.0, den = 0.0;
  double best_rev = 0.0;
  int best_len = 0;
  for (int k = 0; k < n; ++k) {
    const int i = p.item_order[static_cast<std::size_t>(k)];
    num += p.revenue[static_cast<std::size_t>(i)] * p.item_weight[static_cast<std::size_t>(i)];
    den += p.item_weight[static_cast<std::size_t>(i)];
    const double rev = num / (p.v0 + den);
    if (rev > best_rev) {
      best_rev = rev;
      best_len = k + 1;
    }
  }
  OptResult out;
  out.assortment = Assortment(n);
  for (int k = 0; k < best_len; ++k) out.assortment.insert(p.item_order[static_cast<std::size_t>(k)]);
  out.revenue = best_rev;
  return out;
}

// ---------------------------------------------------------------------------
// MIP export
// ---------------------------------------------------------------------------

namespace detail {

inline std::string lp_num(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace detail

/// Writes the exact linearized formulation in CPLEX-LP text format.
/// Variables (1-based): p_i_j >= 0 for every ordered product pair (diagonal =
/// singletons), p00 for no purchase, binary x_i_j with x_i_i = "product i
/// offered". theta_ii = V_i and theta_ij = V_ij / 2 appear as the v0-scaled
/// coefficients tying p_i_j to p00. Row count: 3n^2 pin/cap rows + 3n(n-1)
/// linking rows + 1 normalization (+1 cardinality row when cap is given).
inline void export_mip(const ModelParams& p, std::optional<int> cap, std::ostream& os) {
  const int n = p.n();
  auto pvar = [](int i, int j) {
    return "p_" + std::to_string(i + 1) + "_" + std::to_string(j + 1);
  };
  auto xvar = [](int i, int j) {
    return "x_" + std::to_string(i + 1) + "_" + std::to_string(j + 1);
  };
  auto theta = [&](int i, int j) {
    return i == j ? p.item_weight[static_cast<std::size_t>(i)] : p.pair_weight.get(i, j) / 2.0;
  };
  auto rhat = [&](int i, int j) {
    return i == j ? p.revenue[static_cast<std::size_t>(i)]
                  : p.revenue[static_cast<std::size_t>(i)] + p.revenue[static_cast<std::size_t>(j)];
  };

  os << "\\ bundle choice assortment optimization, linearized exact formulation\n";
  os << "Maximize\n obj:";
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      os << " + " << detail::lp_num(rhat(i, j)) << " " << pvar(i, j);
    }
  }
  os << "\nSubject To\n";
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double c = theta(i, j) / p.v0;
      os << " px_" << i + 1 << "_" << j + 1 << ": " << pvar(i, j) << " - " << xvar(i, j)
         << " <= 0\n";
      os << " pv_" << i + 1 << "_" << j + 1 << ": " << pvar(i, j) << " - " << detail::lp_num(c)
         << " p00 <= 0\n";
      // p + c(1 - x) >= c p00  rewritten as  p - c x - c p00 >= -c
      os << " pl_" << i + 1 << "_" << j + 1 << ": " << pvar(i, j) << " - " << detail::lp_num(c)
         << " " << xvar(i, j) << " - " << detail::lp_num(c) << " p00 >= -" << detail::lp_num(c)
         << "\n";
    }
  }
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      os << " l1_" << i + 1 << "_" << j + 1 << ": " << xvar(i, i) << " + " << xvar(j, j) << " - "
         << xvar(i, j) << " <= 1\n";
      os << " l2_" << i + 1 << "_" << j + 1 << ": " << xvar(i, j) << " - " << xvar(i, i) << " <= 0\n";
      os << " l3_" << i + 1 << "_" << j + 1 << ": " << xvar(i, j) << " - " << xvar(j, j) << " <= 0\n";
    }
  }
  os << " norm: p00";
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) os << " + " << pvar(i, j);
  }
  os << " = 1\n";
  if (cap) {
    os << " cap:";
    for (int i = 0; i < n; ++i) os << (i == 0 ? " " : " + ") << xvar(i, i);
    os << " <= " << *cap << "\n";
  }
  os << "Bounds\n p00 >= 0\n";
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) os << " " << pvar(i, j) << " >= 0\n";
  }
  os << "Binary\n";
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) os << " " << xvar(i, j) << "\n";
  }
  os << "End\n";
}

inline void export_mip(const ModelParams& p, std::optional<int> cap, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  export_mip(p, cap, f);
}

// ---------------------------------------------------------------------------
// Revenue-ordered guarantee check
// ---------------------------------------------------------------------------

struct SmallPairGuarantee {
  double lhs = 0.0;    // revenue of the best revenue-ordered set
  double rhs = 0.0;    // guarantee bound on the optimum
  bool holds = false;
};

/// Verifies the small-pair-weight guarantee: requires every pair weight to be
/// at most epsilon_ratio times the smallest of {v0, all item weights}, then
/// checks R2(revord) >= (2 - eps |C*_mnl|) / (2 + 4 eps |C*|) * R2(C*), with
/// both optima taken by enumeration.
inline SmallPairGuarantee small_pair_bound_check(const ModelParams& p, double epsilon_ratio) {
  double min_v = p.v0;
  for (double v : p.item_weight) min_v = std::min(min_v, v);
  for (const auto& e : p.pair_weight.entries()) {
    if (e.v > epsilon_ratio * min_v * (1.0 + 1e-12)) {
      throw std::domain_error("small_pair_bound_check: pair (" + std::to_string(e.i) + "," +
                              std::to_string(e.j) + ") violates the small-pair-weight assumption");
    }
  }
  const OptResult star = brute_force_opt(p, 2);
  const OptResult mnl = mnl_opt(p);
  const OptResult revord = revenue_ordered(p);
  const double coeff = (2.0 - epsilon_ratio * mnl.assortment.size()) /
                       (2.0 + 4.0 * epsilon_ratio * star.assortment.size());
  SmallPairGuarantee out;
  out.lhs = revord.revenue;
  out.rhs = coeff * star.revenue;
  out.holds = out.lhs >= out.rhs - 1e-12;
  return out;
}

}  // namespace bundleopt
