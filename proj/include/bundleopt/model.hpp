#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace bundleopt {

/// Subset of the product universe {0, ..., n-1}, packed into 64-bit words.
class Assortment {
 public:
  Assortment() = default;
  explicit Assortment(int universe)
      : n_(universe), words_((static_cast<std::size_t>(universe) + 63) / 64, 0) {
    if (universe < 0) throw std::invalid_argument("Assortment: negative universe");
  }

  static Assortment of(int universe, std::initializer_list<int> items) {
    Assortment a(universe);
    for (int i : items) a.insert(i);
    return a;
  }

  static Assortment full(int universe) {
    Assortment a(universe);
    for (int i = 0; i < universe; ++i) a.insert(i);
    return a;
  }

  int universe() const { return n_; }

  bool contains(int i) const {
    check(i);
    return (words_[static_cast<std::size_t>(i) >> 6] >> (i & 63)) & 1u;
  }

  void insert(int i) {
    check(i);
    words_[static_cast<std::size_t>(i) >> 6] |= std::uint64_t{1} << (i & 63);
  }

  void erase(int i) {
    check(i);
    words_[static_cast<std::size_t>(i) >> 6] &= ~(std::uint64_t{1} << (i & 63));
  }

  int size() const {
    int c = 0;
    for (auto w : words_) c += std::popcount(w);
    return c;
  }

  bool empty() const {
    for (auto w : words_) {
      if (w != 0) return false;
    }
    return true;
  }

  bool subset_of(const Assortment& other) const {
    for (std::size_t k = 0; k < words_.size(); ++k) {
      if (words_[k] & ~other.words_[k]) return false;
    }
    return true;
  }

  bool intersects(const Assortment& other) const {
    for (std::size_t k = 0; k < words_.size(); ++k) {
      if (words_[k] & other.words_[k]) return true;
    }
    return false;
  }

  Assortment unite(const Assortment& other) const {
    Assortment r(*this);
    for (std::size_t k = 0; k < words_.size(); ++k) r.words_[k] |= other.words_[k];
    return r;
  }

  /// Visits members in ascending index order.
  template <typename Fn>
  void for_each(Fn&& fn) const {
    for (std::size_t k = 0; k < words_.size(); ++k) {
      std::uint64_t w = words_[k];
      while (w) {
        const int bit = std::countr_zero(w);
        fn(static_cast<int>(k * 64) + bit);
        w &= w - 1;
      }
    }
  }

  std::vector<int> items() const {
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(size()));
    for_each([&](int i) { out.push_back(i); });
    return out;
  }

  friend bool operator==(const Assortment& a, const Assortment& b) {
    return a.n_ == b.n_ && a.words_ == b.words_;
  }

  std::uint64_t hash() const {
    std::uint64_t h = 0x9e3779b97f4a7c15ULL ^ static_cast<std::uint64_t>(n_);
    for (auto w : words_) {
      h ^= w + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    }
    return h;
  }

 private:
  void check(int i) const {
    if (i < 0 || i >= n_) throw std::domain_error("Assortment: index out of range");
  }

  int n_ = 0;
  std::vector<std::uint64_t> words_;
};

/// A purchased bundle: sorted distinct product indices. Empty = no purchase.
struct Bundle {
  std::vector<int> items;

  Bundle() = default;
  Bundle(std::initializer_list<int> xs) : items(xs) { normalize(); }
  explicit Bundle(std::vector<int> xs) : items(std::move(xs)) { normalize(); }

  int size() const { return static_cast<int>(items.size()); }
  bool empty() const { return items.empty(); }

  bool subset_of(const Assortment& a) const {
    return std::all_of(items.begin(), items.end(), [&](int i) { return a.contains(i); });
  }

  friend bool operator==(const Bundle& a, const Bundle& b) { return a.items == b.items; }
  friend bool operator<(const Bundle& a, const Bundle& b) { return a.items < b.items; }

 private:
  void normalize() {
    std::sort(items.begin(), items.end());
    items.erase(std::unique(items.begin(), items.end()), items.end());
  }
};

/// Sparse symmetric map over unordered product pairs, stored once with i < j.
/// Entries are kept in a sorted vector so that iteration order (and therefore
/// every floating-point reduction over pairs) is deterministic.
class PairMap {
 public:
  struct Entry {
    int i, j;
    double v;
  };

  void set(int i, int j, double v) {
    if (i == j) throw std::domain_error("PairMap: i == j");
    if (i > j) std::swap(i, j);
    auto it = index_.find(key(i, j));
    if (it != index_.end()) {
      entries_[it->second].v = v;
      return;
    }
    index_.emplace(key(i, j), entries_.size());
    entries_.push_back({i, j, v});
    sorted_ = entries_.size() < 2 ||
              (sorted_ && std::tie(entries_[entries_.size() - 2].i, entries_[entries_.size() - 2].j) <
                              std::tie(i, j));
  }

  double get(int i, int j) const {
    if (i > j) std::swap(i, j);
    auto it = index_.find(key(i, j));
    return it == index_.end() ? 0.0 : entries_[it->second].v;
  }

  bool contains(int i, int j) const {
    if (i > j) std::swap(i, j);
    return index_.count(key(i, j)) != 0;
  }

  std::size_t size() const { return entries_.size(); }

  /// Sorts entries by (i, j); must be called after the last set() before
  /// relying on entries() order.
  void finalize() {
    if (sorted_) return;
    std::sort(entries_.begin(), entries_.end(),
              [](const Entry& a, const Entry& b) { return std::tie(a.i, a.j) < std::tie(b.i, b.j); });
    index_.clear();
    for (std::size_t k = 0; k < entries_.size(); ++k) {
      index_.emplace(key(entries_[k].i, entries_[k].j), k);
    }
    sorted_ = true;
  }

  const std::vector<Entry>& entries() const {
    if (!sorted_) throw std::logic_error("PairMap: finalize() before iterating");
    return entries_;
  }

 private:
  static std::uint64_t key(int i, int j) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(i)) << 32) |
           static_cast<std::uint32_t>(j);
  }

  std::vector<Entry> entries_;
  std::unordered_map<std::uint64_t, std::size_t> index_;
  bool sorted_ = true;
};

/// Full parameterization of a bundle choice model over n products: no-purchase
/// weight v0, per-item weights V_i, sparse pairwise weights V_ij and per-item
/// revenues r_i. Pairs absent from `pair_weight` have weight zero. Immutable
/// after finalize(); all operations on it are pure.
struct ModelParams {
  double v0 = 1.0;
  std::vector<double> item_weight;  // V_i, one per product
  PairMap pair_weight;              // V_ij, stored once with i < j
  std::vector<double> revenue;      // r_i > 0
  std::vector<int> item_order;      // permutation sorting revenue descending

  int n() const { return static_cast<int>(item_weight.size()); }

  /// Sorts pairs, computes item_order (revenue descending, ties by ascending
  /// index) and validates all invariants.
  void finalize() {
    pair_weight.finalize();
    if (revenue.size() != item_weight.size())
      throw std::invalid_argument("ModelParams: revenue/item_weight size mismatch");
    if (!(v0 > 0.0)) throw std::invalid_argument("ModelParams: v0 must be positive");
    for (double w : item_weight) {
      if (!(w >= 0.0)) throw std::invalid_argument("ModelParams: negative item weight");
    }
    for (double r : revenue) {
      if (!(r > 0.0)) throw std::invalid_argument("ModelParams: revenue must be positive");
    }
    for (const auto& e : pair_weight.entries()) {
      if (e.i < 0 || e.j >= n() || e.i >= e.j)
        throw std::invalid_argument("ModelParams: bad pair index");
      if (!(e.v >= 0.0)) throw std::invalid_argument("ModelParams: negative pair weight");
    }
    item_order.resize(item_weight.size());
    std::iota(item_order.begin(), item_order.end(), 0);
    std::stable_sort(item_order.begin(), item_order.end(), [&](int a, int b) {
      if (revenue[a] != revenue[b]) return revenue[a] > revenue[b];
      return a < b;
    });
  }
};

inline ModelParams make_model(double v0, std::vector<double> revenue,
                              std::vector<double> item_weight,
                              std::vector<PairMap::Entry> pairs = {}) {
  ModelParams p;
  p.v0 = v0;
  p.revenue = std::move(revenue);
  p.item_weight = std::move(item_weight);
  for (const auto& e : pairs) p.pair_weight.set(e.i, e.j, e.v);
  p.finalize();
  return p;
}

/// Log-space parameterization: per-item alpha and pairwise beta. A pair with
/// zero weight has no finite beta and is simply absent from the map.
struct NaturalParams {
  std::vector<double> alpha;
  PairMap beta;
};

// ---------------------------------------------------------------------------
// Weights and probabilities
// ---------------------------------------------------------------------------

/// Weight of a bundle. The empty bundle returns 1 (the caller scales by v0);
/// singletons return V_i, pairs V_ij (zero when absent). Sizes above two are
/// evaluated through the log-linear form, which reduces to
/// V_abc = V_ab * V_ac * V_bc / (V_a * V_b * V_c) for triples.
inline double bundle_weight(const ModelParams& p, const Bundle& b) {
  for (int i : b.items) {
    if (i < 0 || i >= p.n()) throw std::domain_error("bundle_weight: index out of range");
  }
  const auto k = b.items.size();
  if (k == 0) return 1.0;
  if (k == 1) return p.item_weight[static_cast<std::size_t>(b.items[0])];
  if (k == 2) return p.pair_weight.get(b.items[0], b.items[1]);
  double num = 1.0, den = 1.0;
  for (std::size_t a = 0; a < k; ++a) {
    const double w = p.item_weight[static_cast<std::size_t>(b.items[a])];
    if (w == 0.0) return 0.0;
    den *= w;
    for (std::size_t c = a + 1; c < k; ++c) {
      const double pv = p.pair_weight.get(b.items[a], b.items[c]);
      if (pv == 0.0) return 0.0;
      num *= pv;
    }
  }
  return num / den;
}

namespace detail {

/// Sum of all bundle weights (sizes 1..k_max) within `offered`.
/// k_max = 3 enumerates triples and is guarded by the caller.
inline double total_bundle_weight(const ModelParams& p, const std::vector<int>& items,
                                  int k_max) {
  double total = 0.0;
  for (int i : items) total += p.item_weight[static_cast<std::size_t>(i)];
  if (k_max >= 2) {
    for (std::size_t a = 0; a < items.size(); ++a) {
      for (std::size_t b = a + 1; b < items.size(); ++b) {
        total += p.pair_weight.get(items[a], items[b]);
      }
    }
  }
  if (k_max >= 3) {
    for (std::size_t a = 0; a < items.size(); ++a) {
      for (std::size_t b = a + 1; b < items.size(); ++b) {
        for (std::size_t c = b + 1; c < items.size(); ++c) {
          total += bundle_weight(p, Bundle{items[a], items[b], items[c]});
        }
      }
    }
  }
  return total;
}

}  // namespace detail

/// P(bundle | offered) under the size-capped model. `bundle` must be a subset
/// of `offered` and no larger than k_max; k_max must be 1, 2 or 3.
inline double choice_probability(const ModelParams& p, const Assortment& offered,
                                 const Bundle& bundle, int k_max) {
  if (k_max < 1 || k_max > 3) throw std::domain_error("choice_probability: k_max must be 1..3");
  if (!bundle.subset_of(offered)) throw std::domain_error("choice_probability: bundle not offered");
  if (bundle.size() > k_max) throw std::domain_error("choice_probability: bundle larger than k_max");
  const auto items = offered.items();
  if (k_max >= 3 && items.size() > 25)
    throw std::length_error("choice_probability: k_max=3 limited to 25 offered products");
  const double denom = p.v0 + detail::total_bundle_weight(p, items, k_max);
  const double w = bundle.empty() ? p.v0 : bundle_weight(p, bundle);
  return w / denom;
}

// ---------------------------------------------------------------------------
// Expected revenue
// ---------------------------------------------------------------------------

namespace detail {

struct KahanSum {
  double s = 0.0, c = 0.0;
  void add(double x) {
    const double y = x - c;
    const double t = s + y;
    c = (t - s) - y;
    s = t;
  }
};

}  // namespace detail

/// Expected revenue of an offered set under the pair model (closed form):
/// (sum_i r_i V_i + sum_{i<j} (r_i+r_j) V_ij) / (v0 + sum V_i + sum V_ij).
/// Compensated summation kicks in for large assortments, where the pair sums
/// grow quadratically.
inline double expected_revenue_k2(const ModelParams& p, const Assortment& offered) {
  const auto items = offered.items();
  const std::size_t m = items.size();
  if (m == 0) return 0.0;

  const bool compensate = p.n() > 1000;
  detail::KahanSum knum, kden;
  double num = 0.0, den = 0.0;
  auto add = [&](double rn, double dn) {
    if (compensate) {
      knum.add(rn);
      kden.add(dn);
    } else {
      num += rn;
      den += dn;
    }
  };

  for (int i : items) {
    const double vi = p.item_weight[static_cast<std::size_t>(i)];
    add(p.revenue[static_cast<std::size_t>(i)] * vi, vi);
  }
  // Whichever of (pairs within the set) / (stored pairs) is smaller drives the
  // loop; both orders are deterministic.
  const std::size_t stored = p.pair_weight.size();
  if (m * (m - 1) / 2 <= stored) {
    for (std::size_t a = 0; a < m; ++a) {
      for (std::size_t b = a + 1; b < m; ++b) {
        const double vij = p.pair_weight.get(items[a], items[b]);
        if (vij != 0.0) {
          add((p.revenue[static_cast<std::size_t>(items[a])] +
               p.revenue[static_cast<std::size_t>(items[b])]) *
                  vij,
              vij);
        }
      }
    }
  } else {
    for (const auto& e : p.pair_weight.entries()) {
      if (e.v != 0.0 && offered.contains(e.i) && offered.contains(e.j)) {
        add((p.revenue[static_cast<std::size_t>(e.i)] + p.revenue[static_cast<std::size_t>(e.j)]) * e.v,
            e.v);
      }
    }
  }
  if (compensate) {
    num = knum.s;
    den = kden.s;
  }
  return num / (p.v0 + den);
}

/// Expected revenue by explicit bundle enumeration for k_max in {1,2,3}.
/// Agrees with expected_revenue_k2 at k_max = 2. k_max = 3 is guarded to 25
/// offered products.
inline double expected_revenue_k(const ModelParams& p, const Assortment& offered, int k_max) {
  if (k_max < 1 || k_max > 3) throw std::domain_error("expected_revenue_k: k_max must be 1..3");
  const auto items = offered.items();
  if (k_max >= 3 && items.size() > 25)
    throw std::length_error("expected_revenue_k: k_max=3 limited to 25 offered products");
  double num = 0.0, den = 0.0;
  for (std::size_t a = 0; a < items.size(); ++a) {
    const double vi = p.item_weight[static_cast<std::size_t>(items[a])];
    num += p.revenue[static_cast<std::size_t>(items[a])] * vi;
    den += vi;
  }
  if (k_max >= 2) {
    for (std::size_t a = 0; a < items.size(); ++a) {
      for (std::size_t b = a + 1; b < items.size(); ++b) {
        const double v = p.pair_weight.get(items[a], items[b]);
        num += (p.revenue[static_cast<std::size_t>(items[a])] +
                p.revenue[static_cast<std::size_t>(items[b])]) *
               v;
        den += v;
      }
    }
  }
  if (k_max >= 3) {
    for (std::size_t a = 0; a < items.size(); ++a) {
      for (std::size_t b = a + 1; b < items.size(); ++b) {
        for (std::size_t c = b + 1; c < items.size(); ++c) {
          const double v = bundle_weight(p, Bundle{items[a], items[b], items[c]});
          num += (p.revenue[static_cast<std::size_t>(items[a])] +
                  p.revenue[static_cast<std::size_t>(items[b])] +
                  p.revenue[static_cast<std::size_t>(items[c])]) *
                 v;
          den += v;
        }
      }
    }
  }
  if (den == 0.0 && items.empty()) return 0.0;
  return num / (p.v0 + den);
}

// ---------------------------------------------------------------------------
// Natural parameter conversion
// ---------------------------------------------------------------------------

/// alpha_i = log V_i, beta_ij = log V_ij - alpha_i - alpha_j. Requires all
/// item weights positive; pairs with zero weight are reported as absent
/// rather than beta = -inf.
inline NaturalParams to_natural(const ModelParams& p) {
  NaturalParams nat;
  nat.alpha.resize(static_cast<std::size_t>(p.n()));
  for (int i = 0; i < p.n(); ++i) {
    const double v = p.item_weight[static_cast<std::size_t>(i)];
    if (!(v > 0.0)) throw std::domain_error("to_natural: item weight must be positive");
    nat.alpha[static_cast<std::size_t>(i)] = std::log(v);
  }
  for (const auto& e : p.pair_weight.entries()) {
    if (e.v == 0.0) continue;  // absent-pair convention
    if (!(e.v > 0.0)) throw std::domain_error("to_natural: negative pair weight");
    nat.beta.set(e.i, e.j,
                 std::log(e.v) - nat.alpha[static_cast<std::size_t>(e.i)] -
                     nat.alpha[static_cast<std::size_t>(e.j)]);
  }
  nat.beta.finalize();
  return nat;
}

inline ModelParams from_natural(const NaturalParams& nat, double v0, std::vector<double> revenue) {
  ModelParams p;
  p.v0 = v0;
  p.revenue = std::move(revenue);
  p.item_weight.resize(nat.alpha.size());
  for (std::size_t i = 0; i < nat.alpha.size(); ++i) p.item_weight[i] = std::exp(nat.alpha[i]);
  for (const auto& e : nat.beta.entries()) {
    p.pair_weight.set(e.i, e.j,
                      std::exp(e.v + nat.alpha[static_cast<std::size_t>(e.i)] +
                               nat.alpha[static_cast<std::size_t>(e.j)]));
  }
  p.finalize();
  return p;
}

// ---------------------------------------------------------------------------
// Revenue decomposition
// ---------------------------------------------------------------------------

struct RevenueDecomposition {
  double alpha;  // weight share of C, in [0, 1]
  double t;      // marginal-term value T(C, C')
};

/// Splits R2(C u C') = alpha R2(C) + (1-alpha) T(C, C') for disjoint C, C'.
/// alpha is the denominator share carried by C (and v0).
inline RevenueDecomposition revenue_decomposition(const ModelParams& p, const Assortment& c,
                                                  const Assortment& c_prime) {
  if (c.intersects(c_prime)) throw std::domain_error("revenue_decomposition: sets overlap");
  const auto ci = c.items();
  const auto pi = c_prime.items();

  auto theta_sum = [&](const std::vector<int>& xs, const std::vector<int>& ys, bool cross,
                       double& num, double& den) {
    // theta double-sum over ordered pairs: diagonal theta_ii = V_i, off-diagonal
    // theta_ij = V_ij / 2 counted twice, i.e. V_ij once per unordered pair.
    if (!cross) {
      for (int i : xs) {
        const double vi = p.item_weight[static_cast<std::size_t>(i)];
        num += p.revenue[static_cast<std::size_t>(i)] * vi;
        den += vi;
      }
      for (std::size_t a = 0; a < xs.size(); ++a) {
        for (std::size_t b = a + 1; b < xs.size(); ++b) {
          const double v = p.pair_weight.get(xs[a], xs[b]);
          num += (p.revenue[static_cast<std::size_t>(xs[a])] +
                  p.revenue[static_cast<std::size_t>(xs[b])]) *
                 v;
          den += v;
        }
      }
    } else {
      for (int i : xs) {
        for (int j : ys) {
          const double v = p.pair_weight.get(i, j);
          num += (p.revenue[static_cast<std::size_t>(i)] + p.revenue[static_cast<std::size_t>(j)]) * v;
          den += v;
        }
      }
    }
  };

  double num_c = 0.0, den_c = 0.0;
  theta_sum(ci, ci, false, num_c, den_c);
  double num_cp = 0.0, den_cp = 0.0;
  theta_sum(pi, pi, false, num_cp, den_cp);
  double num_x = 0.0, den_x = 0.0;
  theta_sum(ci, pi, true, num_x, den_x);

  const double alpha = (p.v0 + den_c) / (p.v0 + den_c + den_cp + den_x);
  const double t_den = den_cp + den_x;
  const double t = t_den == 0.0 ? 0.0 : (num_cp + num_x) / t_den;
  return {alpha, t};
}

}  // namespace bundleopt
