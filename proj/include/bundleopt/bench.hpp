#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "bundleopt/benchmarks.hpp"
#include "bundleopt/data.hpp"
#include "bundleopt/errors.hpp"
#include "bundleopt/model.hpp"
#include "bundleopt/search.hpp"

namespace bundleopt {

/// One benchmark row. gap_pct is 100 (R* - R) / R* against the reference
/// named by gap_ref ("brute" at oracle-sized instances, otherwise
/// "best_found"), or NaN when no reference exists.
struct BenchmarkRecord {
  std::string algorithm;
  int n = 0;
  std::uint64_t seed = 0;
  double revenue = 0.0;
  double gap_pct = std::numeric_limits<double>::quiet_NaN();
  std::string gap_ref;
  double wall_ms = 0.0;
  nlohmann::ordered_json extra = nlohmann::ordered_json::object();
};

inline nlohmann::ordered_json record_to_json(const BenchmarkRecord& r) {
  nlohmann::ordered_json j;
  j["algorithm"] = r.algorithm;
  j["n"] = r.n;
  j["seed"] = r.seed;
  j["revenue"] = r.revenue;
  if (std::isnan(r.gap_pct)) {
    j["gap_pct"] = nullptr;
  } else {
    j["gap_pct"] = r.gap_pct;
  }
  if (!r.gap_ref.empty()) j["gap_ref"] = r.gap_ref;
  j["wall_ms"] = r.wall_ms;
  if (!r.extra.empty()) j["extra"] = r.extra;
  return j;
}

struct AlgoOutput {
  Assortment assortment;
  double revenue = 0.0;
  nlohmann::ordered_json extra = nlohmann::ordered_json::object();
};

/// Shared knobs for running one named algorithm on one instance.
struct AlgoOptions {
  double epsilon = 1e-4;
  std::optional<int> cap;
  std::uint64_t seed = 0;
  double deadline_ms = 250.0;
  int threads = 1;
  // auto: exact compares while the QUBO stays small enough for the exact
  // solver, heuristic portfolio beyond.
  enum class Compare { automatic, exact, portfolio } compare = Compare::automatic;
};

inline const std::vector<std::string>& known_algorithms() {
  static const std::vector<std::string> algos = {"brute",   "revord",    "mnl",  "adxopt1",
                                                 "adxopt2", "bsao",      "bsao-eff",
                                                 "noisy-bsao"};
  return algos;
}

inline AlgoOutput run_algorithm(const std::string& name, const ModelParams& p,
                                const AlgoOptions& opt) {
  AlgoOutput out;
  auto search_config = [&](bool noisy) {
    SearchConfig cfg;
    cfg.epsilon = opt.epsilon;
    cfg.seed = opt.seed;
    cfg.heuristic_deadline_ms = opt.deadline_ms;
    cfg.threads = opt.threads;
    const int qubo_vars = p.n() + (opt.cap ? *opt.cap : 0);
    const bool exact_ok = qubo_vars <= 30;
    switch (opt.compare) {
      case AlgoOptions::Compare::exact: cfg.compare_mode = CompareMode::exact; break;
      case AlgoOptions::Compare::portfolio: cfg.compare_mode = CompareMode::heuristic_portfolio; break;
      case AlgoOptions::Compare::automatic:
        cfg.compare_mode = (exact_ok && !noisy) ? CompareMode::exact : CompareMode::heuristic_portfolio;
        break;
    }
    return cfg;
  };
  auto fill_trace = [&](const SearchResult& res) {
    out.assortment = res.assortment;
    out.revenue = res.revenue;
    out.extra["iterations"] = res.trace.iterations.size();
    out.extra["qubo_vars"] = res.trace.qubo_vars_total;
    if (res.trace.truncated) out.extra["truncated"] = true;
  };

  if (name == "brute") {
    const OptResult r = brute_force_opt(p, 2, opt.cap);
    out.assortment = r.assortment;
    out.revenue = r.revenue;
  } else if (name == "revord") {
    const OptResult r = revenue_ordered(p, opt.cap);
    out.assortment = r.assortment;
    out.revenue = r.revenue;
  } else if (name == "mnl") {
    const OptResult r = mnl_opt(p);
    out.assortment = r.assortment;
    out.revenue = expected_revenue_k2(p, r.assortment);  // evaluated under the pair model
  } else if (name == "adxopt1" || name == "adxopt2") {
    const int l = name == "adxopt1" ? 1 : 2;
    const OptResult r = adxopt_l(p, l, 0, opt.cap);
    out.assortment = r.assortment;
    out.revenue = r.revenue;
  } else if (name == "bsao") {
    fill_trace(binary_search_ao(p, search_config(false), opt.cap));
  } else if (name == "bsao-eff") {
    if (opt.cap)
      throw UsageError(
          "bsao-eff cannot honor --capacity: its forced-in/forced-out pruning relies on "
          "structural properties of the unconstrained optimum, which fail under a cardinality "
          "constraint; use bsao or noisy-bsao instead");
    fill_trace(binary_search_ao_efficient(p, search_config(false)));
  } else if (name == "noisy-bsao") {
    SearchConfig cfg = search_config(true);
    if (opt.cap) {
      cfg.noisy = true;
      fill_trace(constrained_binary_search_ao(p, cfg, *opt.cap));
    } else {
      fill_trace(noisy_binary_search_ao(p, cfg, /*prune=*/true));
    }
  } else {
    throw UsageError("unknown algorithm '" + name + "'");
  }
  if (opt.cap) out.extra["cap"] = *opt.cap;
  return out;
}

// ---------------------------------------------------------------------------
// Monte-Carlo benchmark harness
// ---------------------------------------------------------------------------

struct BenchSpec {
  std::vector<int> n_list;
  int runs = 50;
  std::vector<std::string> algorithms;
  std::optional<ModelParams> base_model;  // subsample source; generator used otherwise
  Generator generator = Generator::two_group;
  double no_purchase_prob = 0.30;
  std::optional<int> cap;
  std::uint64_t seed = 0;
  double epsilon = 1e-4;
  double deadline_ms = 250.0;
  int threads = 1;
};

namespace detail {

inline std::uint64_t instance_seed(std::uint64_t base, int n, int run) {
  return Rng(base).fork(static_cast<std::uint64_t>(n) * 1000003ULL +
                        static_cast<std::uint64_t>(run))
      .next_u64();
}

}  // namespace detail

inline ModelParams build_bench_instance(const BenchSpec& spec, int n, std::uint64_t inst_seed) {
  if (spec.base_model) {
    if (n > spec.base_model->n())
      throw UsageError("requested n exceeds the model's product count");
    return subsample_instance(*spec.base_model, n, inst_seed, spec.no_purchase_prob);
  }
  SyntheticSpec s;
  s.n = n;
  s.seed = inst_seed;
  s.generator = spec.generator;
  s.no_purchase_prob = spec.no_purchase_prob;
  return generate_synthetic(s);
}

/// Runs every algorithm on runs-many seeded instances per n. Tasks execute on
/// a small worker pool; records land in deterministic (n, run, algorithm)
/// order regardless of scheduling.
inline std::vector<BenchmarkRecord> run_benchmark(const BenchSpec& spec) {
  struct Task {
    int n;
    int run;
  };
  std::vector<Task> tasks;
  for (int n : spec.n_list) {
    for (int r = 0; r < spec.runs; ++r) tasks.push_back({n, r});
  }
  std::vector<std::vector<BenchmarkRecord>> slots(tasks.size());

  auto work = [&](std::size_t t) {
    const Task& task = tasks[t];
    const std::uint64_t inst_seed = detail::instance_seed(spec.seed, task.n, task.run);
    std::vector<BenchmarkRecord>& recs = slots[t];
    try {
      const ModelParams inst = build_bench_instance(spec, task.n, inst_seed);
      AlgoOptions opt;
      opt.epsilon = spec.epsilon;
      opt.cap = spec.cap;
      opt.seed = inst_seed;
      opt.deadline_ms = spec.deadline_ms;
      opt.threads = 1;  // parallelism lives in the task pool here

      std::vector<AlgoOutput> outs(spec.algorithms.size());
      for (std::size_t a = 0; a < spec.algorithms.size(); ++a) {
        BenchmarkRecord rec;
        rec.algorithm = spec.algorithms[a];
        rec.n = task.n;
        rec.seed = inst_seed;
        const auto t0 = std::chrono::steady_clock::now();
        outs[a] = run_algorithm(spec.algorithms[a], inst, opt);
        rec.wall_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        rec.revenue = outs[a].revenue;
        rec.extra = outs[a].extra;
        recs.push_back(std::move(rec));
      }
      double ref = std::numeric_limits<double>::quiet_NaN();
      std::string ref_tag;
      if (task.n <= 20) {
        ref = brute_force_opt(inst, 2, spec.cap).revenue;
        ref_tag = "brute";
      } else {
        for (const auto& o : outs) ref = std::isnan(ref) ? o.revenue : std::max(ref, o.revenue);
        ref_tag = "best_found";
      }
      for (auto& rec : recs) {
        if (ref > 0.0) {
          rec.gap_pct = 100.0 * (ref - rec.revenue) / ref;
          rec.gap_ref = ref_tag;
        }
      }
    } catch (const std::exception& e) {
      BenchmarkRecord rec;
      rec.algorithm = "error";
      rec.n = task.n;
      rec.seed = inst_seed;
      rec.extra["error"] = e.what();
      recs.push_back(std::move(rec));
    }
  };

  const int workers = std::max(1, spec.threads);
  if (workers == 1) {
    for (std::size_t t = 0; t < tasks.size(); ++t) work(t);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (;;) {
          const std::size_t t = next.fetch_add(1);
          if (t >= tasks.size()) return;
          work(t);
        }
      });
    }
    for (auto& th : pool) th.join();
  }

  std::vector<BenchmarkRecord> records;
  for (auto& s : slots) {
    for (auto& r : s) records.push_back(std::move(r));
  }
  return records;
}

// ---------------------------------------------------------------------------
// Summaries
// ---------------------------------------------------------------------------

/// Linear-interpolation quantile of a sorted copy of xs.
inline double quantile(std::vector<double> xs, double q) {
  if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(xs.begin(), xs.end());
  const double pos = q * static_cast<double>(xs.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, xs.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return xs[lo] * (1.0 - frac) + xs[hi] * frac;
}

inline std::string summary_table(const std::vector<BenchmarkRecord>& records) {
  struct Key {
    std::string algo;
    int n;
    bool operator<(const Key& o) const { return std::tie(algo, n) < std::tie(o.algo, o.n); }
  };
  std::map<Key, std::pair<std::vector<double>, std::vector<double>>> cells;  // gaps, walls
  std::vector<Key> order;
  for (const auto& r : records) {
    if (r.algorithm == "error") continue;
    Key k{r.algorithm, r.n};
    if (!cells.count(k)) order.push_back(k);
    auto& cell = cells[k];
    if (!std::isnan(r.gap_pct)) cell.first.push_back(r.gap_pct);
    cell.second.push_back(r.wall_ms);
  }
  std::sort(order.begin(), order.end());
  std::ostringstream os;
  os << "algorithm        n   runs  gap% p25     median  p75     wall_ms p25  median  p75\n";
  char buf[256];
  for (const auto& k : order) {
    const auto& cell = cells[k];
    std::snprintf(buf, sizeof(buf), "%-15s %4d %5zu  %-10.4g %-7.4g %-7.4g %-12.4g %-7.4g %-6.4g\n",
                  k.algo.c_str(), k.n, cell.second.size(), quantile(cell.first, 0.25),
                  quantile(cell.first, 0.5), quantile(cell.first, 0.75),
                  quantile(cell.second, 0.25), quantile(cell.second, 0.5),
                  quantile(cell.second, 0.75));
    os << buf;
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// MNL-gap experiment
// ---------------------------------------------------------------------------

/// For each seeded instance: the pair-blind optimum (single-choice reduction)
/// is evaluated under the pair model and compared against the pair-aware
/// optimum (enumeration at oracle sizes; pruned binary search with the
/// heuristic portfolio beyond).
inline std::vector<BenchmarkRecord> run_mnl_gap(const BenchSpec& spec) {
  BenchSpec s = spec;
  s.algorithms = {"mnl"};
  struct Task {
    int n;
    int run;
  };
  std::vector<Task> tasks;
  for (int n : s.n_list) {
    for (int r = 0; r < s.runs; ++r) tasks.push_back({n, r});
  }
  std::vector<BenchmarkRecord> slots(tasks.size());

  auto work = [&](std::size_t t) {
    const Task& task = tasks[t];
    const std::uint64_t inst_seed = detail::instance_seed(s.seed, task.n, task.run);
    BenchmarkRecord rec;
    rec.n = task.n;
    rec.seed = inst_seed;
    rec.algorithm = "mnl";
    try {
      const ModelParams inst = build_bench_instance(s, task.n, inst_seed);
      const auto t0 = std::chrono::steady_clock::now();
      const OptResult mnl = mnl_opt(inst);
      const double mnl_rev = expected_revenue_k2(inst, mnl.assortment);
      double ref;
      if (task.n <= 20) {
        ref = brute_force_opt(inst, 2).revenue;
        rec.gap_ref = "brute";
      } else {
        SearchConfig cfg;
        cfg.epsilon = s.epsilon;
        cfg.seed = inst_seed;
        cfg.compare_mode = CompareMode::heuristic_portfolio;
        cfg.heuristic_deadline_ms = s.deadline_ms;
        // the raw search result is the reference; a negative gap would mean
        // the search lost to the pair-blind set and is worth seeing
        ref = binary_search_ao_efficient(inst, cfg).revenue;
        rec.gap_ref = "bsao-eff";
      }
      rec.wall_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      rec.revenue = mnl_rev;
      if (ref > 0.0) rec.gap_pct = 100.0 * (ref - mnl_rev) / ref;
      rec.extra["mnl_set_size"] = mnl.assortment.size();
    } catch (const std::exception& e) {
      rec.algorithm = "error";
      rec.extra["error"] = e.what();
    }
    slots[t] = std::move(rec);
  };

  const int workers = std::max(1, s.threads);
  if (workers == 1) {
    for (std::size_t t = 0; t < tasks.size(); ++t) work(t);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (;;) {
          const std::size_t t = next.fetch_add(1);
          if (t >= tasks.size()) return;
          work(t);
        }
      });
    }
    for (auto& th : pool) th.join();
  }
  return slots;
}

}  // namespace bundleopt
