#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "bundleopt/qubo.hpp"
#include "bundleopt/rng.hpp"

namespace bundleopt {

struct QuboSizeError : std::length_error {
  using std::length_error::length_error;
};

struct QuboBudgetExceeded : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ExactBudget {
  std::uint64_t max_nodes = 200'000'000;
};

namespace detail {

inline double wall_ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

/// Exhaustive scan in Gray-code order with incremental linear terms.
/// First optimum found wins ties, so the empty assignment is preferred when
/// everything else is equal.
inline QuboSolution exact_enumerate(const QuboInstance& ins, const ExactBudget& budget) {
  const int n = ins.n_vars;
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::uint8_t> x(static_cast<std::size_t>(n), 0);
  std::vector<double> lin(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) lin[static_cast<std::size_t>(i)] = ins.at(i, i);

  double value = ins.offset;
  std::vector<std::uint8_t> best_x = x;
  double best = value;

  const std::uint64_t total = std::uint64_t{1} << n;
  if (total > budget.max_nodes) throw QuboBudgetExceeded("exact_enumerate: node budget");
  for (std::uint64_t m = 1; m < total; ++m) {
    const int i = std::countr_zero(m);  // bit flipped between gray(m-1) and gray(m)
    const bool now_one = !x[static_cast<std::size_t>(i)];
    value += now_one ? lin[static_cast<std::size_t>(i)] : -lin[static_cast<std::size_t>(i)];
    x[static_cast<std::size_t>(i)] = now_one;
    const double sgn = now_one ? 2.0 : -2.0;
    for (int j = 0; j < n; ++j) {
      if (j != i) lin[static_cast<std::size_t>(j)] += sgn * ins.at(i, j);
    }
    if (value > best) {
      best = value;
      best_x = x;
    }
  }
  QuboSolution sol;
  sol.assignment = std::move(best_x);
  sol.objective = ins.evaluate(sol.assignment);
  sol.solver_tag = "exact_enum";
  sol.wall_ms = wall_ms_since(t0);
  return sol;
}

class BranchAndBound {
 public:
  BranchAndBound(const QuboInstance& ins, const ExactBudget& budget)
      : ins_(ins), budget_(budget), n_(ins.n_vars) {}

  QuboSolution run() {
    const auto t0 = std::chrono::steady_clock::now();
    x_.assign(static_cast<std::size_t>(n_), 0);
    fixed_.assign(static_cast<std::size_t>(n_), false);
    lin_.resize(static_cast<std::size_t>(n_));
    pos_free_.assign(static_cast<std::size_t>(n_), 0.0);
    for (int i = 0; i < n_; ++i) {
      lin_[static_cast<std::size_t>(i)] = ins_.at(i, i);
      for (int j = 0; j < n_; ++j) {
        if (j != i) pos_free_[static_cast<std::size_t>(i)] += std::max(0.0, ins_.at(i, j));
      }
    }
    best_x_.assign(static_cast<std::size_t>(n_), 0);
    best_ = ins_.offset;  // empty assignment
    value_ = ins_.offset;
    dfs(0);
    QuboSolution sol;
    sol.assignment = best_x_;
    sol.objective = ins_.evaluate(sol.assignment);
    sol.solver_tag = "exact_bnb";
    sol.wall_ms = wall_ms_since(t0);
    return sol;
  }

 private:
  double bound() const {
    double b = value_;
    for (int i = 0; i < n_; ++i) {
      if (!fixed_[static_cast<std::size_t>(i)]) {
        b += std::max(0.0, lin_[static_cast<std::size_t>(i)] + pos_free_[static_cast<std::size_t>(i)]);
      }
    }
    return b;
  }

  void dfs(int depth) {
    if (++nodes_ > budget_.max_nodes) throw QuboBudgetExceeded("branch and bound: node budget");
    if (depth == n_) {
      if (value_ > best_) {
        best_ = value_;
        best_x_ = x_;
      }
      return;
    }
    if (bound() <= best_) return;
    const int i = depth;  // fixed branching order keeps the result deterministic

    fixed_[static_cast<std::size_t>(i)] = true;
    for (int j = 0; j < n_; ++j) {
      if (j != i && !fixed_[static_cast<std::size_t>(j)]) {
        pos_free_[static_cast<std::size_t>(j)] -= std::max(0.0, ins_.at(i, j));
      }
    }

    // x_i = 0 first, so the first optimum found has the fewest ones.
    dfs(depth + 1);

    x_[static_cast<std::size_t>(i)] = 1;
    value_ += lin_[static_cast<std::size_t>(i)];
    for (int j = 0; j < n_; ++j) {
      if (j != i) lin_[static_cast<std::size_t>(j)] += 2.0 * ins_.at(i, j);
    }
    dfs(depth + 1);
    x_[static_cast<std::size_t>(i)] = 0;
    value_ -= lin_[static_cast<std::size_t>(i)];
    for (int j = 0; j < n_; ++j) {
      if (j != i) lin_[static_cast<std::size_t>(j)] -= 2.0 * ins_.at(i, j);
    }

    fixed_[static_cast<std::size_t>(i)] = false;
    for (int j = 0; j < n_; ++j) {
      if (j != i && !fixed_[static_cast<std::size_t>(j)]) {
        pos_free_[static_cast<std::size_t>(j)] += std::max(0.0, ins_.at(i, j));
      }
    }
  }

  const QuboInstance& ins_;
  ExactBudget budget_;
  int n_;
  std::vector<std::uint8_t> x_, best_x_;
  std::vector<bool> fixed_;
  std::vector<double> lin_, pos_free_;
  double value_ = 0.0, best_ = 0.0;
  std::uint64_t nodes_ = 0;
};

}  // namespace detail

/// Globally optimal solve. Plain enumeration up to 20 variables, interval
/// branch-and-bound up to 60. Deterministic; first optimum in exploration
/// order wins ties (the empty assignment when everything is non-positive).
inline QuboSolution solve_exact(const QuboInstance& ins, const ExactBudget& budget = {}) {
  if (ins.n_vars > 60) throw QuboSizeError("solve_exact: more than 60 variables");
  if (ins.n_vars == 0) {
    QuboSolution sol;
    sol.objective = ins.offset;
    sol.solver_tag = "exact_enum";
    return sol;
  }
  if (ins.n_vars <= 20) return detail::exact_enumerate(ins, budget);
  return detail::BranchAndBound(ins, budget).run();
}

// ---------------------------------------------------------------------------
// Heuristic portfolio
// ---------------------------------------------------------------------------

enum class HeuristicKind { descent_restart, tabu, anneal };

inline const char* heuristic_name(HeuristicKind k) {
  switch (k) {
    case HeuristicKind::descent_restart: return "descent_restart";
    case HeuristicKind::tabu: return "tabu";
    case HeuristicKind::anneal: return "anneal";
  }
  return "?";
}

struct PortfolioConfig {
  std::vector<HeuristicKind> members = {HeuristicKind::descent_restart, HeuristicKind::tabu,
                                        HeuristicKind::anneal};
  double deadline_ms = 250.0;
  std::uint64_t seed = 0;
  int threads = 1;  // >1 runs members on their own threads; results identical either way
};

namespace detail {

/// The per-member work budget is a deterministic operation count derived from
/// the wall deadline (`kOpsPerMs` is a conservative laptop calibration), so a
/// run's result depends only on (instance, seed) and never on load or thread
/// count. One charged op is roughly one coefficient touch.
constexpr std::uint64_t kOpsPerMs = 150'000;

class HeurWork {
 public:
  HeurWork(const QuboInstance& ins, std::uint64_t ops) : ins_(ins), n_(ins.n_vars), ops_left_(ops) {
    x_.assign(static_cast<std::size_t>(n_), 0);
    lin_.resize(static_cast<std::size_t>(n_));
    best_x_ = x_;
    best_ = ins.offset;  // the empty assignment is always a valid incumbent
    reset_empty();
  }

  bool spend(std::uint64_t c) {
    if (ops_left_ < c) {
      ops_left_ = 0;
      return false;
    }
    ops_left_ -= c;
    return true;
  }
  bool exhausted() const { return ops_left_ == 0; }

  void reset_empty() {
    std::fill(x_.begin(), x_.end(), 0);
    for (int i = 0; i < n_; ++i) lin_[static_cast<std::size_t>(i)] = ins_.at(i, i);
    value_ = ins_.offset;
  }

  void randomize(Rng& rng) {
    spend(static_cast<std::uint64_t>(n_) * n_ / 2 + n_);
    reset_empty();
    for (int i = 0; i < n_; ++i) {
      if (rng.next_u64() & 1u) flip(i);
    }
  }

  double gain(int i) const {
    const double d = lin_[static_cast<std::size_t>(i)];
    return x_[static_cast<std::size_t>(i)] ? -d : d;
  }

  void flip(int i) {
    const bool now_one = !x_[static_cast<std::size_t>(i)];
    value_ += now_one ? lin_[static_cast<std::size_t>(i)] : -lin_[static_cast<std::size_t>(i)];
    x_[static_cast<std::size_t>(i)] = now_one;
    const double sgn = now_one ? 2.0 : -2.0;
    for (int j = 0; j < n_; ++j) {
      if (j != i) lin_[static_cast<std::size_t>(j)] += sgn * ins_.at(i, j);
    }
    if (value_ > best_) {
      best_ = value_;
      best_x_ = x_;
    }
  }

  /// Steepest-ascent to a 1-flip local optimum. Always completes even if the
  /// budget runs dry mid-descent, so recorded incumbents are local optima.
  void descend() {
    for (;;) {
      spend(static_cast<std::uint64_t>(n_));
      int arg = -1;
      double bestg = 0.0;
      for (int i = 0; i < n_; ++i) {
        const double g = gain(i);
        if (g > bestg) {
          bestg = g;
          arg = i;
        }
      }
      if (arg < 0) return;
      spend(static_cast<std::uint64_t>(n_));
      flip(arg);
    }
  }

  int n() const { return n_; }
  double value() const { return value_; }
  double best() const { return best_; }
  const std::vector<std::uint8_t>& best_x() const { return best_x_; }

 private:
  const QuboInstance& ins_;
  int n_;
  std::uint64_t ops_left_;
  std::vector<std::uint8_t> x_, best_x_;
  std::vector<double> lin_;
  double value_ = 0.0, best_ = 0.0;
};

inline void run_descent_restart(HeurWork& w, Rng rng) {
  if (w.n() == 0) return;
  w.descend();  // from the empty assignment first
  while (!w.exhausted()) {
    w.randomize(rng);
    w.descend();
  }
}

inline void run_tabu(HeurWork& w, Rng rng) {
  const int n = w.n();
  if (n == 0) return;
  const int tenure = std::max(7, n / 10);
  std::vector<std::int64_t> tabu_until(static_cast<std::size_t>(n), -1);
  w.randomize(rng);
  double local_best = w.best();
  std::int64_t iter = 0;
  while (w.spend(static_cast<std::uint64_t>(2 * n))) {
    int arg = -1;
    double bestg = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
      const double g = w.gain(i);
      const bool admissible =
          iter >= tabu_until[static_cast<std::size_t>(i)] || w.value() + g > local_best;
      if (admissible && g > bestg) {
        bestg = g;
        arg = i;
      }
    }
    if (arg < 0) arg = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(n)));
    w.flip(arg);
    tabu_until[static_cast<std::size_t>(arg)] = iter + tenure;
    local_best = std::max(local_best, w.value());
    ++iter;
  }
}

inline void run_anneal(HeurWork& w, Rng rng) {
  const int n = w.n();
  if (n == 0) return;
  w.randomize(rng);
  double t0 = 1e-9;
  for (int i = 0; i < n; ++i) t0 = std::max(t0, std::abs(w.gain(i)));
  double temp = t0;
  const double cooling = std::pow(0.01, 1.0 / (50.0 * n));  // ~50n steps per sweep of T
  while (!w.exhausted()) {
    const int i = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(n)));
    const double g = w.gain(i);
    bool accept = g >= 0.0;
    if (!accept) {
      w.spend(1);
      accept = rng.uniform() < std::exp(g / temp);
    }
    if (accept) {
      w.spend(static_cast<std::uint64_t>(n));
      w.flip(i);
    } else {
      w.spend(1);
    }
    temp *= cooling;
    if (temp < t0 * 1e-2) {
      temp = t0;
      w.randomize(rng);
    }
  }
}

}  // namespace detail

/// Runs the portfolio members (each with its own RNG stream and deterministic
/// operation budget) and returns the best incumbent. With threads > 1 the
/// members run concurrently; the merged result is identical in both modes.
inline QuboSolution solve_heuristic(const QuboInstance& ins, const PortfolioConfig& cfg = {}) {
  if (cfg.deadline_ms <= 0.0) throw std::domain_error("solve_heuristic: deadline must be positive");
  if (cfg.members.empty()) throw std::domain_error("solve_heuristic: empty portfolio");
  const auto t0 = std::chrono::steady_clock::now();
  const std::uint64_t ops = static_cast<std::uint64_t>(cfg.deadline_ms * detail::kOpsPerMs);

  const Rng base(cfg.seed);
  std::vector<QuboSolution> results(cfg.members.size());
  auto run_member = [&](std::size_t m) {
    detail::HeurWork w(ins, ops);
    Rng rng = base.fork(static_cast<std::uint64_t>(cfg.members[m]) + 1);
    switch (cfg.members[m]) {
      case HeuristicKind::descent_restart: detail::run_descent_restart(w, rng); break;
      case HeuristicKind::tabu: detail::run_tabu(w, rng); break;
      case HeuristicKind::anneal: detail::run_anneal(w, rng); break;
    }
    QuboSolution sol;
    sol.assignment = w.best_x();
    sol.objective = ins.evaluate(sol.assignment);
    sol.solver_tag = heuristic_name(cfg.members[m]);
    results[m] = std::move(sol);
  };

  if (cfg.threads > 1 && cfg.members.size() > 1) {
    std::vector<std::thread> pool;
    pool.reserve(cfg.members.size());
    for (std::size_t m = 0; m < cfg.members.size(); ++m) pool.emplace_back(run_member, m);
    for (auto& th : pool) th.join();
  } else {
    for (std::size_t m = 0; m < cfg.members.size(); ++m) run_member(m);
  }

  std::size_t arg = 0;
  for (std::size_t m = 1; m < results.size(); ++m) {
    if (results[m].objective > results[arg].objective) arg = m;  // ties keep member order
  }
  QuboSolution out = std::move(results[arg]);
  out.wall_ms = detail::wall_ms_since(t0);
  return out;
}

}  // namespace bundleopt
