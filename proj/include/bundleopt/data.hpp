#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "bundleopt/errors.hpp"
#include "bundleopt/model.hpp"
#include "bundleopt/rng.hpp"

namespace bundleopt {

// ---------------------------------------------------------------------------
// Ingestion
// ---------------------------------------------------------------------------

struct RawTransaction {
  std::string order_id;
  std::string item_id;
  double price = 0.0;
};

/// One preprocessed data point: the set shown, the bundle bought (possibly
/// empty = no purchase) and an importance weight in (0, 1].
struct Observation {
  Assortment offered;
  Bundle purchased;
  double weight = 1.0;
};

struct TransactionLog {
  std::vector<RawTransaction> rows;        // raw ingestion records
  std::vector<std::string> item_ids;       // index -> external id, first-appearance order
  std::vector<double> price;               // index -> last seen price
  std::vector<Bundle> orders;              // one purchased bundle per order
  int price_warnings = 0;                  // rows whose price disagreed with an earlier one

  int n_items() const { return static_cast<int>(item_ids.size()); }
};

namespace detail {

/// Splits one CSV line; supports double-quoted fields with "" escapes.
inline std::vector<std::string> split_csv_line(const std::string& line, std::size_t line_no) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t k = 0; k < line.size(); ++k) {
    const char c = line[k];
    if (quoted) {
      if (c == '"') {
        if (k + 1 < line.size() && line[k + 1] == '"') {
          cur.push_back('"');
          ++k;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  if (quoted) throw ParseError("line " + std::to_string(line_no) + ": unterminated quote");
  out.push_back(std::move(cur));
  return out;
}

}  // namespace detail

/// Reads a `order_id,item_id,price` CSV (header required, columns located by
/// name). Items are indexed by first appearance; duplicate (order, item) rows
/// collapse; repeated prices for one item must agree within 1e-9 or the last
/// one wins with a warning count.
inline TransactionLog ingest_csv(std::istream& in) {
  TransactionLog log;
  std::string line;
  if (!std::getline(in, line)) throw ParseError("line 1: missing header row");
  const auto header = detail::split_csv_line(line, 1);
  int col_order = -1, col_item = -1, col_price = -1;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == "order_id") col_order = static_cast<int>(c);
    if (header[c] == "item_id") col_item = static_cast<int>(c);
    if (header[c] == "price") col_price = static_cast<int>(c);
  }
  if (col_order < 0 || col_item < 0 || col_price < 0)
    throw ParseError("line 1: header must contain order_id, item_id and price");

  std::unordered_map<std::string, int> item_index;
  std::unordered_map<std::string, int> order_index;
  std::vector<std::vector<int>> order_items;
  std::vector<std::vector<std::uint8_t>> order_seen;  // per order: item membership flags

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
    const auto fields = detail::split_csv_line(line, line_no);
    if (fields.size() < header.size())
      throw ParseError("line " + std::to_string(line_no) + ": expected " +
                       std::to_string(header.size()) + " fields, got " +
                       std::to_string(fields.size()));
    RawTransaction row;
    row.order_id = fields[static_cast<std::size_t>(col_order)];
    row.item_id = fields[static_cast<std::size_t>(col_item)];
    try {
      std::size_t pos = 0;
      row.price = std::stod(fields[static_cast<std::size_t>(col_price)], &pos);
      if (pos != fields[static_cast<std::size_t>(col_price)].size()) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw ParseError("line " + std::to_string(line_no) + ": malformed price '" +
                       fields[static_cast<std::size_t>(col_price)] + "'");
    }
    if (!(row.price > 0.0))
      throw ParseError("line " + std::to_string(line_no) + ": price must be positive");

    auto [it, inserted] = item_index.emplace(row.item_id, log.n_items());
    const int idx = it->second;
    if (inserted) {
      log.item_ids.push_back(row.item_id);
      log.price.push_back(row.price);
    } else if (std::abs(log.price[static_cast<std::size_t>(idx)] - row.price) > 1e-9) {
      ++log.price_warnings;
      log.price[static_cast<std::size_t>(idx)] = row.price;  // last wins
    }

    auto [oit, onew] = order_index.emplace(row.order_id, static_cast<int>(order_items.size()));
    if (onew) {
      order_items.emplace_back();
      order_seen.emplace_back();
    }
    auto& seen = order_seen[static_cast<std::size_t>(oit->second)];
    if (static_cast<std::size_t>(idx) >= seen.size()) seen.resize(static_cast<std::size_t>(idx) + 1, 0);
    if (!seen[static_cast<std::size_t>(idx)]) {
      seen[static_cast<std::size_t>(idx)] = 1;
      order_items[static_cast<std::size_t>(oit->second)].push_back(idx);
    }
    log.rows.push_back(std::move(row));
  }
  log.orders.reserve(order_items.size());
  for (auto& xs : order_items) log.orders.emplace_back(std::move(xs));
  return log;
}

inline TransactionLog ingest_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ParseError("cannot open transactions file: " + path);
  return ingest_csv(f);
}

/// Drops products present in fewer than min_support orders, then drops orders
/// emptied by the filter. Surviving products are re-indexed compactly in
/// their original order.
inline TransactionLog filter_infrequent(const TransactionLog& log, int min_support) {
  if (min_support < 0) throw std::invalid_argument("filter_infrequent: negative min_support");
  std::vector<int> support(static_cast<std::size_t>(log.n_items()), 0);
  for (const auto& order : log.orders) {
    for (int i : order.items) ++support[static_cast<std::size_t>(i)];
  }
  std::vector<int> remap(static_cast<std::size_t>(log.n_items()), -1);
  TransactionLog out;
  out.rows = log.rows;
  out.price_warnings = log.price_warnings;
  for (int i = 0; i < log.n_items(); ++i) {
    if (support[static_cast<std::size_t>(i)] >= min_support) {
      remap[static_cast<std::size_t>(i)] = out.n_items();
      out.item_ids.push_back(log.item_ids[static_cast<std::size_t>(i)]);
      out.price.push_back(log.price[static_cast<std::size_t>(i)]);
    }
  }
  for (const auto& order : log.orders) {
    std::vector<int> kept;
    for (int i : order.items) {
      if (remap[static_cast<std::size_t>(i)] >= 0) kept.push_back(remap[static_cast<std::size_t>(i)]);
    }
    if (!kept.empty()) out.orders.emplace_back(std::move(kept));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Partition augmentation
// ---------------------------------------------------------------------------

struct BundleTooLarge : std::length_error {
  using std::length_error::length_error;
};

/// One way of splitting an oversized bundle into blocks of size <= k. All
/// partitions of a bundle share the uniform weight 1 / partition_count, so
/// the weights over a bundle's partitions sum to exactly one.
struct Partition {
  std::vector<Bundle> blocks;
  int partition_count = 1;  // |Q| for the source bundle
  double weight = 1.0;      // 1 / partition_count
};

/// All set partitions of `bundle` into blocks of size <= k. Bundles of size
/// <= k pass through as a single partition of weight 1. Bundles larger than 8
/// are rejected (partition counts grow combinatorially).
inline std::vector<Partition> augment_bundle(const Bundle& bundle, int k) {
  if (k < 1) throw std::invalid_argument("augment_bundle: k must be >= 1");
  if (bundle.size() > 8)
    throw BundleTooLarge("augment_bundle: bundle of size " + std::to_string(bundle.size()) +
                         " exceeds the partition guard (8)");
  std::vector<Partition> out;
  if (bundle.size() <= k) {
    out.push_back({{bundle}, 1, 1.0});
    return out;
  }
  std::vector<Bundle> blocks;
  std::vector<int> rest = bundle.items;
  auto rec = [&](auto&& self, std::vector<int> remaining) -> void {
    if (remaining.empty()) {
      out.push_back({blocks, 0, 0.0});
      return;
    }
    // The smallest remaining element anchors its block; choose its companions.
    const int head = remaining.front();
    std::vector<int> pool(remaining.begin() + 1, remaining.end());
    const int max_extra = std::min<int>(k - 1, static_cast<int>(pool.size()));
    std::vector<int> choice;
    auto pick = [&](auto&& pickself, std::size_t from) -> void {
      {
        std::vector<int> block{head};
        block.insert(block.end(), choice.begin(), choice.end());
        std::vector<int> next;
        for (int x : pool) {
          if (std::find(choice.begin(), choice.end(), x) == choice.end()) next.push_back(x);
        }
        blocks.emplace_back(block);
        self(self, std::move(next));
        blocks.pop_back();
      }
      if (static_cast<int>(choice.size()) < max_extra) {
        for (std::size_t t = from; t < pool.size(); ++t) {
          choice.push_back(pool[t]);
          pickself(pickself, t + 1);
          choice.pop_back();
        }
      }
    };
    pick(pick, 0);
  };
  rec(rec, rest);
  const int q = static_cast<int>(out.size());
  for (auto& part : out) {
    part.partition_count = q;
    part.weight = 1.0 / q;
  }
  return out;
}

struct AugmentResult {
  std::vector<Observation> observations;
  int rejected_bundles = 0;
  int total_bundles = 0;
};

/// Expands every order into weighted observations: each partition contributes
/// its blocks as separate observations carrying the partition weight. Bundles
/// over the size guard are rejected with a count; the run aborts when more
/// than 10% of bundles are rejected.
inline AugmentResult make_observations(const TransactionLog& log, int k) {
  AugmentResult res;
  const Assortment offered = Assortment::full(log.n_items());
  res.total_bundles = static_cast<int>(log.orders.size());
  for (const auto& order : log.orders) {
    try {
      for (const auto& part : augment_bundle(order, k)) {
        for (const auto& block : part.blocks) {
          res.observations.push_back({offered, block, part.weight});
        }
      }
    } catch (const BundleTooLarge&) {
      ++res.rejected_bundles;
    }
  }
  if (res.total_bundles > 0 && res.rejected_bundles * 10 > res.total_bundles) {
    throw EstimationError("make_observations: more than 10% of bundles exceed the size guard (" +
                          std::to_string(res.rejected_bundles) + "/" +
                          std::to_string(res.total_bundles) + ")");
  }
  return res;
}

// ---------------------------------------------------------------------------
// Estimators
// ---------------------------------------------------------------------------

namespace detail {

inline void require_single_offered(const std::vector<Observation>& obs) {
  for (std::size_t i = 1; i < obs.size(); ++i) {
    if (!(obs[i].offered == obs[0].offered))
      throw EstimationError("estimator requires a single fixed offered set");
  }
}

}  // namespace detail

struct CountingEstimate {
  ModelParams params;
  bool v0_from_data = false;  // false: v0 is a placeholder, calibrate before use
};

/// Closed-form estimator for a single fixed offered set: V_S is the weighted
/// count of S over the weighted count of no-purchase (v0 = 1). Without
/// no-purchase observations the weights are relative frequencies and v0 must
/// be calibrated afterwards.
inline CountingEstimate estimate_counting(const std::vector<Observation>& obs,
                                          std::vector<double> revenue) {
  if (obs.empty()) throw EstimationError("estimate_counting: no observations");
  detail::require_single_offered(obs);
  const int n = static_cast<int>(revenue.size());
  double phi_count = 0.0, total = 0.0;
  std::vector<double> single(static_cast<std::size_t>(n), 0.0);
  std::map<std::pair<int, int>, double> pairs;
  for (const auto& o : obs) {
    total += o.weight;
    if (o.purchased.empty()) {
      phi_count += o.weight;
    } else if (o.purchased.size() == 1) {
      single[static_cast<std::size_t>(o.purchased.items[0])] += o.weight;
    } else if (o.purchased.size() == 2) {
      pairs[{o.purchased.items[0], o.purchased.items[1]}] += o.weight;
    } else {
      throw EstimationError("estimate_counting: bundle larger than 2; augment first");
    }
  }
  const double denom = phi_count > 0.0 ? phi_count : total;
  CountingEstimate out;
  out.v0_from_data = phi_count > 0.0;
  ModelParams p;
  p.v0 = 1.0;
  p.revenue = std::move(revenue);
  p.item_weight.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) p.item_weight[static_cast<std::size_t>(i)] = single[static_cast<std::size_t>(i)] / denom;
  for (const auto& [ij, w] : pairs) p.pair_weight.set(ij.first, ij.second, w / denom);
  p.finalize();
  out.params = std::move(p);
  return out;
}

struct MleConfig {
  double tol = 1e-6;       // infinity norm of the gradient at termination
  int max_iters = 2000;
  std::uint64_t seed = 0;  // used by the mini-batch mode only
  bool minibatch = false;
  int batch_size = 256;
  double sgd_step = 0.05;
  int sgd_epochs = 30;
};

struct MleResult {
  NaturalParams natural;
  double log_likelihood = 0.0;
  double grad_inf_norm = 0.0;
  int iterations = 0;
};

namespace detail {

/// Observations grouped by offered set, with purchased bundles aggregated.
struct MleData {
  int n = 0;
  int k = 1;
  struct Group {
    std::vector<int> offered;
    double total_weight = 0.0;
    std::vector<std::pair<int, double>> singles;               // item -> weight
    std::vector<std::pair<std::pair<int, int>, double>> pairs; // (i<j) -> weight
    double phi_weight = 0.0;
  };
  std::vector<Group> groups;
  std::vector<int> alpha_param;                    // item -> parameter slot or -1
  std::vector<std::pair<int, int>> beta_pairs;     // slot order of free betas
  std::map<std::pair<int, int>, int> beta_param;   // pair -> slot
  int n_alpha = 0;

  int dim() const { return n_alpha + static_cast<int>(beta_pairs.size()); }
};

inline MleData prepare_mle(const std::vector<Observation>& obs, int n, int k) {
  MleData d;
  d.n = n;
  d.k = k;
  std::map<std::vector<int>, std::size_t> group_of;
  std::vector<std::map<Bundle, double>> agg;
  std::vector<Assortment> offered_sets;
  for (const auto& o : obs) {
    if (o.purchased.size() > k) {
      std::string items;
      for (int i : o.purchased.items) items += (items.empty() ? "" : ",") + std::to_string(i);
      throw EstimationError("estimate_mle: purchased bundle {" + items + "} larger than k=" +
                            std::to_string(k) + "; run the partition augmentation first");
    }
    if (!o.purchased.subset_of(o.offered))
      throw EstimationError("estimate_mle: purchased bundle not within the offered set");
    auto [it, fresh] = group_of.emplace(o.offered.items(), agg.size());
    if (fresh) {
      agg.emplace_back();
      offered_sets.push_back(o.offered);
    }
    agg[it->second][o.purchased] += o.weight;
  }
  std::vector<double> item_mass(static_cast<std::size_t>(n), 0.0);
  std::map<std::pair<int, int>, double> pair_mass;
  for (std::size_t g = 0; g < agg.size(); ++g) {
    MleData::Group grp;
    grp.offered = offered_sets[g].items();
    for (const auto& [bundle, w] : agg[g]) {
      grp.total_weight += w;
      if (bundle.empty()) {
        grp.phi_weight += w;
      } else if (bundle.size() == 1) {
        grp.singles.emplace_back(bundle.items[0], w);
        item_mass[static_cast<std::size_t>(bundle.items[0])] += w;
      } else {
        grp.pairs.push_back({{bundle.items[0], bundle.items[1]}, w});
        pair_mass[{bundle.items[0], bundle.items[1]}] += w;
        item_mass[static_cast<std::size_t>(bundle.items[0])] += w;
        item_mass[static_cast<std::size_t>(bundle.items[1])] += w;
      }
    }
    d.groups.push_back(std::move(grp));
  }
  // Items never purchased (and pairs never co-purchased) have their weights
  // pinned at zero: that is where the likelihood drives them anyway, and it
  // keeps the gradient norm criterion attainable.
  d.alpha_param.assign(static_cast<std::size_t>(n), -1);
  for (int i = 0; i < n; ++i) {
    if (item_mass[static_cast<std::size_t>(i)] > 0.0) d.alpha_param[static_cast<std::size_t>(i)] = d.n_alpha++;
  }
  if (k >= 2) {
    for (const auto& [ij, w] : pair_mass) {
      if (w > 0.0) {
        d.beta_param.emplace(ij, d.n_alpha + static_cast<int>(d.beta_pairs.size()));
        d.beta_pairs.push_back(ij);
      }
    }
  }
  return d;
}

/// Weighted log-likelihood, gradient and (optionally) the negative Hessian at
/// parameter vector theta (alphas then betas); v0 is fixed at 1. The negative
/// Hessian is sum_g W_g Cov_g(A), where A is the 0/1 feature vector of the
/// purchased bundle.
inline double mle_value_grad_hess(const MleData& d, const std::vector<double>& theta,
                                  std::vector<double>* grad, std::vector<double>* neg_hess) {
  const int dim = d.dim();
  if (neg_hess) std::fill(neg_hess->begin(), neg_hess->end(), 0.0);
  if (grad) std::fill(grad->begin(), grad->end(), 0.0);
  double ll = 0.0;
  std::vector<double> vi(static_cast<std::size_t>(d.n), 0.0);
  for (int i = 0; i < d.n; ++i) {
    const int s = d.alpha_param[static_cast<std::size_t>(i)];
    vi[static_cast<std::size_t>(i)] = s >= 0 ? std::exp(theta[static_cast<std::size_t>(s)]) : 0.0;
  }
  auto pair_v = [&](int i, int j) {
    auto it = d.beta_param.find({std::min(i, j), std::max(i, j)});
    if (it == d.beta_param.end()) return 0.0;
    const int ai = d.alpha_param[static_cast<std::size_t>(i)];
    const int aj = d.alpha_param[static_cast<std::size_t>(j)];
    return std::exp(theta[static_cast<std::size_t>(it->second)] + theta[static_cast<std::size_t>(ai)] +
                    theta[static_cast<std::size_t>(aj)]);
  };

  std::vector<double> mu(static_cast<std::size_t>(dim));
  for (const auto& g : d.groups) {
    double denom = 1.0;  // v0 = 1
    for (int i : g.offered) denom += vi[static_cast<std::size_t>(i)];
    // enumerate every bundle with positive weight within the offered set
    std::vector<std::pair<std::array<int, 3>, double>> support;  // feature slots, weight
    for (int i : g.offered) {
      const int s = d.alpha_param[static_cast<std::size_t>(i)];
      if (s >= 0 && vi[static_cast<std::size_t>(i)] > 0.0) {
        support.push_back({{s, -1, -1}, vi[static_cast<std::size_t>(i)]});
      }
    }
    if (d.k >= 2) {
      for (std::size_t a = 0; a < g.offered.size(); ++a) {
        for (std::size_t b = a + 1; b < g.offered.size(); ++b) {
          const double v = pair_v(g.offered[a], g.offered[b]);
          if (v > 0.0) {
            const auto key = std::make_pair(std::min(g.offered[a], g.offered[b]),
                                            std::max(g.offered[a], g.offered[b]));
            support.push_back({{d.alpha_param[static_cast<std::size_t>(g.offered[a])],
                                d.alpha_param[static_cast<std::size_t>(g.offered[b])],
                                d.beta_param.at(key)},
                               v});
            denom += v;
          }
        }
      }
    }
    const double log_denom = std::log(denom);
    for (const auto& [i, w] : g.singles) {
      const int s = d.alpha_param[static_cast<std::size_t>(i)];
      ll += w * (theta[static_cast<std::size_t>(s)] - log_denom);
      if (grad) (*grad)[static_cast<std::size_t>(s)] += w;
    }
    for (const auto& [ij, w] : g.pairs) {
      const int bp = d.beta_param.at(ij);
      const int ai = d.alpha_param[static_cast<std::size_t>(ij.first)];
      const int aj = d.alpha_param[static_cast<std::size_t>(ij.second)];
      ll += w * (theta[static_cast<std::size_t>(bp)] + theta[static_cast<std::size_t>(ai)] +
                 theta[static_cast<std::size_t>(aj)] - log_denom);
      if (grad) {
        (*grad)[static_cast<std::size_t>(bp)] += w;
        (*grad)[static_cast<std::size_t>(ai)] += w;
        (*grad)[static_cast<std::size_t>(aj)] += w;
      }
    }
    ll += g.phi_weight * (0.0 - log_denom);
    if (grad || neg_hess) {
      std::fill(mu.begin(), mu.end(), 0.0);
      for (const auto& [slots, v] : support) {
        const double prob = v / denom;
        for (int s : slots) {
          if (s >= 0) mu[static_cast<std::size_t>(s)] += prob;
        }
      }
      if (grad) {
        for (int t = 0; t < dim; ++t) (*grad)[static_cast<std::size_t>(t)] -= g.total_weight * mu[static_cast<std::size_t>(t)];
      }
      if (neg_hess) {
        auto& H = *neg_hess;
        // E[A A'] accumulated bundle by bundle, then -mu mu'
        for (const auto& [slots, v] : support) {
          const double prob = v / denom;
          for (int a : slots) {
            if (a < 0) continue;
            for (int b : slots) {
              if (b >= 0) H[static_cast<std::size_t>(a) * dim + b] += g.total_weight * prob;
            }
          }
        }
        for (int a = 0; a < dim; ++a) {
          for (int b = 0; b < dim; ++b) {
            H[static_cast<std::size_t>(a) * dim + b] -=
                g.total_weight * mu[static_cast<std::size_t>(a)] * mu[static_cast<std::size_t>(b)];
          }
        }
      }
    }
  }
  return ll;
}

/// Weighted log-likelihood and gradient at parameter vector theta
/// (alphas then betas); v0 is fixed at 1.
inline double mle_value_grad(const MleData& d, const std::vector<double>& theta,
                             std::vector<double>* grad) {
  return mle_value_grad_hess(d, theta, grad, nullptr);
}

/// In-place Cholesky solve of (A + ridge I) x = b for symmetric PSD A.
/// Returns false when the factorization breaks down.
inline bool cholesky_solve(std::vector<double> a, int dim, double ridge, std::vector<double> b,
                           std::vector<double>& x) {
  for (int i = 0; i < dim; ++i) a[static_cast<std::size_t>(i) * dim + i] += ridge;
  for (int c = 0; c < dim; ++c) {
    double diag = a[static_cast<std::size_t>(c) * dim + c];
    for (int k = 0; k < c; ++k) {
      const double l = a[static_cast<std::size_t>(c) * dim + k];
      diag -= l * l;
    }
    if (!(diag > 0.0)) return false;
    const double root = std::sqrt(diag);
    a[static_cast<std::size_t>(c) * dim + c] = root;
    for (int r = c + 1; r < dim; ++r) {
      double v = a[static_cast<std::size_t>(r) * dim + c];
      for (int k = 0; k < c; ++k) {
        v -= a[static_cast<std::size_t>(r) * dim + k] * a[static_cast<std::size_t>(c) * dim + k];
      }
      a[static_cast<std::size_t>(r) * dim + c] = v / root;
    }
  }
  // forward then backward substitution
  for (int r = 0; r < dim; ++r) {
    double v = b[static_cast<std::size_t>(r)];
    for (int k = 0; k < r; ++k) v -= a[static_cast<std::size_t>(r) * dim + k] * b[static_cast<std::size_t>(k)];
    b[static_cast<std::size_t>(r)] = v / a[static_cast<std::size_t>(r) * dim + r];
  }
  x.assign(static_cast<std::size_t>(dim), 0.0);
  for (int r = dim - 1; r >= 0; --r) {
    double v = b[static_cast<std::size_t>(r)];
    for (int k = r + 1; k < dim; ++k) v -= a[static_cast<std::size_t>(k) * dim + r] * x[static_cast<std::size_t>(k)];
    x[static_cast<std::size_t>(r)] = v / a[static_cast<std::size_t>(r) * dim + r];
  }
  return true;
}

}  // namespace detail

/// Maximum-likelihood fit of the natural parameters with v0 fixed at 1.
/// Deterministic full-batch ascent with Armijo backtracking: damped Newton on
/// the exact (PSD) Hessian up to 400 parameters, Barzilai-Borwein gradient
/// steps beyond. A mini-batch SGD warm start sits behind config.minibatch.
/// Items never purchased come back with alpha = -inf and never-co-purchased
/// pairs stay absent; that is where the likelihood drives them anyway.
inline MleResult estimate_mle(const std::vector<Observation>& obs, int n, int k,
                              const MleConfig& config = {}) {
  if (k < 1 || k > 2) throw EstimationError("estimate_mle: k must be 1 or 2");
  if (obs.empty()) throw EstimationError("estimate_mle: no observations");
  detail::MleData d = detail::prepare_mle(obs, n, k);

  std::vector<double> theta(static_cast<std::size_t>(d.dim()), 0.0);
  std::vector<double> grad(theta.size(), 0.0);

  if (config.minibatch && !theta.empty()) {
    // Optional stochastic warm start: epochs of shuffled single-observation
    // steps with a decaying step size. Deterministic given the seed.
    Rng rng(config.seed);
    std::vector<Observation> shuffled = obs;
    for (int epoch = 0; epoch < config.sgd_epochs; ++epoch) {
      for (std::size_t i = shuffled.size(); i > 1; --i) {
        std::swap(shuffled[i - 1], shuffled[rng.uniform_index(i)]);
      }
      const double step = config.sgd_step / (1.0 + epoch);
      for (std::size_t from = 0; from < shuffled.size();
           from += static_cast<std::size_t>(config.batch_size)) {
        const std::size_t to = std::min(shuffled.size(), from + static_cast<std::size_t>(config.batch_size));
        std::vector<Observation> batch(shuffled.begin() + static_cast<std::ptrdiff_t>(from),
                                       shuffled.begin() + static_cast<std::ptrdiff_t>(to));
        detail::MleData bd = d;
        bd.groups = detail::prepare_mle(batch, n, k).groups;
        detail::mle_value_grad(bd, theta, &grad);
        for (std::size_t t = 0; t < theta.size(); ++t) theta[t] += step * grad[t];
      }
    }
  }

  const int dim = d.dim();
  const bool use_newton = dim <= 400;
  std::vector<double> neg_hess;
  if (use_newton) neg_hess.assign(static_cast<std::size_t>(dim) * dim, 0.0);

  double ll = detail::mle_value_grad_hess(d, theta, &grad, use_newton ? &neg_hess : nullptr);
  int iters = 0;
  double gnorm = 0.0;
  for (auto g : grad) gnorm = std::max(gnorm, std::abs(g));
  std::vector<double> prev_theta, prev_grad, dir;
  double bb_step = 1.0;
  while (iters < config.max_iters && gnorm > config.tol && !theta.empty()) {
    double step = 1.0;
    if (use_newton) {
      // Damped Newton: the negative Hessian is PSD (log-sum-exp), a small
      // growing ridge covers rank deficiency.
      double trace = 0.0;
      for (int t = 0; t < dim; ++t) trace += neg_hess[static_cast<std::size_t>(t) * dim + t];
      double ridge = 1e-10 * std::max(trace / dim, 1.0);
      while (!detail::cholesky_solve(neg_hess, dim, ridge, grad, dir)) ridge *= 100.0;
    } else {
      // Barzilai-Borwein step on the raw gradient.
      if (!prev_theta.empty()) {
        double num = 0.0, den = 0.0;
        for (std::size_t t = 0; t < theta.size(); ++t) {
          const double ds = theta[t] - prev_theta[t];
          const double dg = grad[t] - prev_grad[t];
          num += ds * ds;
          den += -ds * dg;  // ascent: curvature along the step
        }
        if (den > 0.0) bb_step = num / den;
      }
      dir.resize(theta.size());
      for (std::size_t t = 0; t < theta.size(); ++t) dir[t] = bb_step * grad[t];
    }
    double slope = 0.0;
    for (std::size_t t = 0; t < theta.size(); ++t) slope += dir[t] * grad[t];
    if (!(slope > 0.0)) break;
    std::vector<double> trial(theta.size());
    double trial_ll = -std::numeric_limits<double>::infinity();
    while (step > 1e-14) {
      for (std::size_t t = 0; t < theta.size(); ++t) trial[t] = theta[t] + step * dir[t];
      trial_ll = detail::mle_value_grad(d, trial, nullptr);
      if (trial_ll >= ll + 1e-4 * step * slope) break;
      step *= 0.5;
    }
    if (!(trial_ll > ll)) break;  // no ascent progress left
    prev_theta = theta;
    prev_grad = grad;
    theta.swap(trial);
    ll = detail::mle_value_grad_hess(d, theta, &grad, use_newton ? &neg_hess : nullptr);
    gnorm = 0.0;
    for (auto g : grad) gnorm = std::max(gnorm, std::abs(g));
    ++iters;
  }

  MleResult out;
  out.log_likelihood = ll;
  out.grad_inf_norm = gnorm;
  out.iterations = iters;
  out.natural.alpha.assign(static_cast<std::size_t>(n), -std::numeric_limits<double>::infinity());
  for (int i = 0; i < n; ++i) {
    const int s = d.alpha_param[static_cast<std::size_t>(i)];
    if (s >= 0) out.natural.alpha[static_cast<std::size_t>(i)] = theta[static_cast<std::size_t>(s)];
  }
  for (std::size_t b = 0; b < d.beta_pairs.size(); ++b) {
    out.natural.beta.set(d.beta_pairs[b].first, d.beta_pairs[b].second,
                         theta[static_cast<std::size_t>(d.n_alpha) + b]);
  }
  out.natural.beta.finalize();
  return out;
}

/// Weighted log-likelihood of observations under a fully specified model.
/// Returns -inf if any observation has probability zero; `zero_prob_count`
/// (when given) receives the number of such observations and they are then
/// excluded from the sum instead.
inline double log_likelihood(const ModelParams& p, const std::vector<Observation>& obs, int k,
                             int* zero_prob_count = nullptr) {
  double ll = 0.0;
  if (zero_prob_count) *zero_prob_count = 0;
  std::map<std::vector<int>, double> denom_cache;
  for (const auto& o : obs) {
    auto items = o.offered.items();
    auto it = denom_cache.find(items);
    if (it == denom_cache.end()) {
      const double denom = p.v0 + detail::total_bundle_weight(p, items, k);
      it = denom_cache.emplace(std::move(items), denom).first;
    }
    const double w = (o.purchased.empty() || o.purchased.size() > k)
                         ? (o.purchased.empty() ? p.v0 : 0.0)
                         : bundle_weight(p, o.purchased);
    if (w <= 0.0 && !o.purchased.empty()) {
      if (zero_prob_count) {
        ++(*zero_prob_count);
        continue;
      }
      return -std::numeric_limits<double>::infinity();
    }
    ll += o.weight * (std::log(w) - std::log(it->second));
  }
  return ll;
}

// ---------------------------------------------------------------------------
// Calibration, subsampling, synthesis
// ---------------------------------------------------------------------------

/// Sets v0 so that P(no purchase | everything offered) equals
/// no_purchase_prob exactly: v0 = p/(1-p) * sum of all bundle weights.
inline ModelParams calibrate_v0(ModelParams params, double no_purchase_prob, int k_max = 2) {
  if (!(no_purchase_prob > 0.0 && no_purchase_prob < 1.0))
    throw std::domain_error("calibrate_v0: probability must lie in (0,1)");
  params.pair_weight.finalize();
  double total = 0.0;
  for (double v : params.item_weight) total += v;
  if (k_max >= 2) {
    for (const auto& e : params.pair_weight.entries()) total += e.v;
  }
  if (total <= 0.0) throw std::domain_error("calibrate_v0: all bundle weights are zero");
  params.v0 = no_purchase_prob / (1.0 - no_purchase_prob) * total;
  params.finalize();
  return params;
}

/// Induced sub-model on a random subset of products (without replacement),
/// keeping their weights and revenues; v0 is re-calibrated.
inline ModelParams subsample_instance(const ModelParams& p, int n_sub, std::uint64_t seed,
                                      double no_purchase_prob = 0.30) {
  if (n_sub < 1 || n_sub > p.n()) throw std::domain_error("subsample_instance: bad n_sub");
  Rng rng(seed);
  std::vector<int> idx(static_cast<std::size_t>(p.n()));
  for (int i = 0; i < p.n(); ++i) idx[static_cast<std::size_t>(i)] = i;
  for (std::size_t i = idx.size(); i > 1; --i) {
    std::swap(idx[i - 1], idx[rng.uniform_index(i)]);
  }
  idx.resize(static_cast<std::size_t>(n_sub));
  std::sort(idx.begin(), idx.end());
  std::vector<int> remap(static_cast<std::size_t>(p.n()), -1);
  ModelParams out;
  out.v0 = 1.0;
  for (int t = 0; t < n_sub; ++t) {
    remap[static_cast<std::size_t>(idx[static_cast<std::size_t>(t)])] = t;
    out.item_weight.push_back(p.item_weight[static_cast<std::size_t>(idx[static_cast<std::size_t>(t)])]);
    out.revenue.push_back(p.revenue[static_cast<std::size_t>(idx[static_cast<std::size_t>(t)])]);
  }
  for (const auto& e : p.pair_weight.entries()) {
    const int a = remap[static_cast<std::size_t>(e.i)];
    const int b = remap[static_cast<std::size_t>(e.j)];
    if (a >= 0 && b >= 0) out.pair_weight.set(a, b, e.v);
  }
  return calibrate_v0(std::move(out), no_purchase_prob);
}

enum class Generator { two_group, uniform };

struct SyntheticSpec {
  int n = 10;
  std::uint64_t seed = 0;
  Generator generator = Generator::two_group;
  double no_purchase_prob = 0.30;
};

/// Synthetic instance generators. two_group sorts Beta(2,10) prices
/// descending and splits the products into a high-priced and a low-priced
/// half: pair weights are Beta(1,10) inside the high-priced half (two
/// expensive products rarely sell together) and Beta(10,1) elsewhere; item
/// weights are Beta(1,1). uniform draws everything from plain uniforms with
/// each pair present with probability 1/2. Both calibrate v0 afterwards.
inline ModelParams generate_synthetic(const SyntheticSpec& spec) {
  if (spec.n < 2) throw std::domain_error("generate_synthetic: n must be >= 2");
  Rng rng(spec.seed);
  ModelParams p;
  p.v0 = 1.0;
  p.revenue.resize(static_cast<std::size_t>(spec.n));
  p.item_weight.resize(static_cast<std::size_t>(spec.n));
  if (spec.generator == Generator::two_group) {
    for (auto& r : p.revenue) r = std::max(rng.beta(2.0, 10.0), 1e-9);
    std::sort(p.revenue.begin(), p.revenue.end(), std::greater<double>());
    for (auto& v : p.item_weight) v = std::max(rng.beta(1.0, 1.0), 1e-12);
    const int high = (spec.n + 1) / 2;
    for (int i = 0; i < spec.n; ++i) {
      for (int j = i + 1; j < spec.n; ++j) {
        const bool both_high = i < high && j < high;
        const double v = both_high ? rng.beta(1.0, 10.0) : rng.beta(10.0, 1.0);
        p.pair_weight.set(i, j, v);
      }
    }
  } else {
    for (auto& r : p.revenue) r = rng.uniform(0.1, 1.0);
    std::sort(p.revenue.begin(), p.revenue.end(), std::greater<double>());
    for (auto& v : p.item_weight) v = rng.uniform(0.05, 1.0);
    for (int i = 0; i < spec.n; ++i) {
      for (int j = i + 1; j < spec.n; ++j) {
        if (rng.uniform() < 0.5) p.pair_weight.set(i, j, rng.uniform(0.0, 1.0));
      }
    }
  }
  return calibrate_v0(std::move(p), spec.no_purchase_prob);
}

// ---------------------------------------------------------------------------
// Simulation and splitting
// ---------------------------------------------------------------------------

/// Draws `count` choices from the closed-form distribution over bundles of
/// size <= k within `offered` (plus no purchase). Weight-1 observations.
inline std::vector<Observation> simulate_choices(const ModelParams& p, const Assortment& offered,
                                                 int k, int count, std::uint64_t seed) {
  const auto items = offered.items();
  std::vector<Bundle> bundles{Bundle{}};
  for (std::size_t a = 0; a < items.size(); ++a) bundles.push_back(Bundle{items[a]});
  if (k >= 2) {
    for (std::size_t a = 0; a < items.size(); ++a) {
      for (std::size_t b = a + 1; b < items.size(); ++b) {
        bundles.push_back(Bundle{items[a], items[b]});
      }
    }
  }
  std::vector<double> cdf(bundles.size());
  double acc = 0.0;
  for (std::size_t t = 0; t < bundles.size(); ++t) {
    acc += bundles[t].empty() ? p.v0 : bundle_weight(p, bundles[t]);
    cdf[t] = acc;
  }
  Rng rng(seed);
  std::vector<Observation> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int c = 0; c < count; ++c) {
    const double u = rng.uniform() * acc;
    const auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
    const std::size_t t = std::min(static_cast<std::size_t>(it - cdf.begin()), bundles.size() - 1);
    out.push_back({offered, bundles[t], 1.0});
  }
  return out;
}

/// Seed-deterministic partition into train/test (ratio = train share).
inline std::pair<std::vector<Observation>, std::vector<Observation>> train_test_split(
    const std::vector<Observation>& obs, double ratio, std::uint64_t seed) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw std::domain_error("train_test_split: bad ratio");
  std::vector<std::size_t> idx(obs.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(seed);
  for (std::size_t i = idx.size(); i > 1; --i) {
    std::swap(idx[i - 1], idx[rng.uniform_index(i)]);
  }
  const std::size_t cut = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(obs.size())));
  std::pair<std::vector<Observation>, std::vector<Observation>> out;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    (i < cut ? out.first : out.second).push_back(obs[idx[i]]);
  }
  return out;
}

}  // namespace bundleopt
