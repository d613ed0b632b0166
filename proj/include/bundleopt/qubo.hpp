#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "bundleopt/model.hpp"

namespace bundleopt {

/// What a QUBO variable stands for.
struct VarTag {
  enum Kind { product, slack } kind = product;
  int index = 0;  // product index, or slack ordinal
};

/// Symmetric quadratic form over binary variables:
///   objective(x) = x' Q x + offset,
/// where Q is dense symmetric with linear terms on the diagonal (off-diagonal
/// entries are counted twice by the quadratic form). Compare-step instances
/// carry the decision threshold: max objective >= threshold answers
/// "max_C R(C) >= kappa".
struct QuboInstance {
  int n_vars = 0;
  std::vector<double> q;  // row-major n_vars * n_vars, symmetric
  double offset = 0.0;
  double threshold = 0.0;
  std::vector<VarTag> var_map;

  double& at(int i, int j) { return q[static_cast<std::size_t>(i) * n_vars + j]; }
  double at(int i, int j) const { return q[static_cast<std::size_t>(i) * n_vars + j]; }

  double evaluate(const std::vector<std::uint8_t>& x) const {
    double v = offset;
    for (int i = 0; i < n_vars; ++i) {
      if (!x[static_cast<std::size_t>(i)]) continue;
      v += at(i, i);
      for (int j = i + 1; j < n_vars; ++j) {
        if (x[static_cast<std::size_t>(j)]) v += 2.0 * at(i, j);
      }
    }
    return v;
  }

  int product_count() const {
    int c = 0;
    for (const auto& t : var_map) c += (t.kind == VarTag::product);
    return c;
  }
};

struct QuboSolution {
  std::vector<std::uint8_t> assignment;
  double objective = 0.0;
  std::string solver_tag;
  double wall_ms = 0.0;

  /// Product indices selected by the assignment (slack variables ignored).
  Assortment products(const QuboInstance& ins, int universe) const {
    Assortment a(universe);
    for (int v = 0; v < ins.n_vars; ++v) {
      if (assignment[static_cast<std::size_t>(v)] && ins.var_map[static_cast<std::size_t>(v)].kind == VarTag::product) {
        a.insert(ins.var_map[static_cast<std::size_t>(v)].index);
      }
    }
    return a;
  }
};

/// Builds the compare-step instance for threshold kappa:
///   max_C R2(C) >= kappa  <=>  max_x x'Qx + offset >= kappa * v0,
/// with Q[i][i] = V_i (r_i - kappa) and Q[i][j] = V_ij (r_i + r_j - kappa)/2.
/// Products in fixed_in are folded into the linear terms and the offset;
/// products in fixed_out (and in fixed_in) are removed from the variable set.
inline QuboInstance build_compare_qubo(const ModelParams& p, double kappa,
                                       const Assortment& fixed_in, const Assortment& fixed_out) {
  if (kappa < 0.0) throw std::domain_error("build_compare_qubo: kappa must be nonnegative");
  if (fixed_in.intersects(fixed_out))
    throw std::domain_error("build_compare_qubo: fixed sets overlap");

  const int n = p.n();
  std::vector<int> free_items;
  std::vector<int> var_of(static_cast<std::size_t>(n), -1);
  for (int i = 0; i < n; ++i) {
    if (!fixed_in.contains(i) && !fixed_out.contains(i)) {
      var_of[static_cast<std::size_t>(i)] = static_cast<int>(free_items.size());
      free_items.push_back(i);
    }
  }

  QuboInstance ins;
  ins.n_vars = static_cast<int>(free_items.size());
  ins.q.assign(static_cast<std::size_t>(ins.n_vars) * ins.n_vars, 0.0);
  ins.var_map.reserve(free_items.size());
  for (int i : free_items) ins.var_map.push_back({VarTag::product, i});

  for (int a = 0; a < ins.n_vars; ++a) {
    const int i = free_items[static_cast<std::size_t>(a)];
    ins.at(a, a) = p.item_weight[static_cast<std::size_t>(i)] *
                   (p.revenue[static_cast<std::size_t>(i)] - kappa);
  }
  double fold = 0.0;
  fixed_in.for_each([&](int i) {
    fold += p.item_weight[static_cast<std::size_t>(i)] *
            (p.revenue[static_cast<std::size_t>(i)] - kappa);
  });
  for (const auto& e : p.pair_weight.entries()) {
    if (e.v == 0.0) continue;
    const bool i_in = fixed_in.contains(e.i), j_in = fixed_in.contains(e.j);
    const bool i_out = fixed_out.contains(e.i), j_out = fixed_out.contains(e.j);
    if (i_out || j_out) continue;
    const double coeff = e.v * (p.revenue[static_cast<std::size_t>(e.i)] +
                                p.revenue[static_cast<std::size_t>(e.j)] - kappa);
    if (i_in && j_in) {
      fold += coeff;
    } else if (i_in || j_in) {
      const int fr = i_in ? e.j : e.i;
      ins.at(var_of[static_cast<std::size_t>(fr)], var_of[static_cast<std::size_t>(fr)]) += coeff;
    } else {
      const int a = var_of[static_cast<std::size_t>(e.i)];
      const int b = var_of[static_cast<std::size_t>(e.j)];
      ins.at(a, b) += coeff / 2.0;
      ins.at(b, a) += coeff / 2.0;
    }
  }
  ins.offset = fold;
  ins.threshold = kappa * p.v0;
  return ins;
}

/// Embeds |products| <= cap via unary slack variables and the penalty
/// lambda (1'x + sum s - cap)^2 with lambda < 0. `lambda_auto` picks
/// -(1 + sum |q_ij|), which dominates any objective gain from violating the
/// constraint. Returns the input unchanged when the constraint is vacuous.
inline QuboInstance embed_cardinality(const QuboInstance& in, int cap, double lambda = 0.0) {
  if (cap < 1) throw std::domain_error("embed_cardinality: cap must be >= 1");
  if (cap >= in.product_count()) return in;

  if (lambda == 0.0) {
    double abs_sum = 0.0;
    for (double v : in.q) abs_sum += std::abs(v);
    lambda = -(1.0 + abs_sum);
  }
  if (lambda >= 0.0) throw std::domain_error("embed_cardinality: lambda must be negative");

  QuboInstance out;
  out.n_vars = in.n_vars + cap;
  out.q.assign(static_cast<std::size_t>(out.n_vars) * out.n_vars, 0.0);
  out.offset = in.offset + lambda * static_cast<double>(cap) * cap;
  out.threshold = in.threshold;
  out.var_map = in.var_map;
  for (int s = 0; s < cap; ++s) out.var_map.push_back({VarTag::slack, s});

  for (int i = 0; i < in.n_vars; ++i) {
    for (int j = 0; j < in.n_vars; ++j) out.at(i, j) = in.at(i, j);
  }
  // (sum z)^2 = sum z + 2 sum_{i<j} z_i z_j over binaries; z covers products
  // and slacks alike.
  for (int i = 0; i < out.n_vars; ++i) {
    out.at(i, i) += lambda * (1.0 - 2.0 * cap);
    for (int j = i + 1; j < out.n_vars; ++j) {
      out.at(i, j) += lambda;
      out.at(j, i) += lambda;
    }
  }
  return out;
}

/// Text dump for external cross-checks. Header line `# nvars offset threshold`
/// followed by the nonzero upper-triangle entries of Q as `i j coeff`
/// (objective = x'Qx + offset, off-diagonal entries counted twice).
inline void dump_qubo(const QuboInstance& ins, std::ostream& os) {
  os << "# " << ins.n_vars << " " << ins.offset << " " << ins.threshold << "\n";
  os.precision(17);
  for (int i = 0; i < ins.n_vars; ++i) {
    for (int j = i; j < ins.n_vars; ++j) {
      const double v = ins.at(i, j);
      if (v != 0.0) os << i << " " << j << " " << v << "\n";
    }
  }
}

inline void dump_qubo(const QuboInstance& ins, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  dump_qubo(ins, f);
}

}  // namespace bundleopt
