#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "bundleopt/benchmarks.hpp"
#include "bundleopt/data.hpp"
#include "test_util.hpp"

using namespace bundleopt;

namespace {

ModelParams two_product_fixture() {
  return make_model(1.0, {4.0, 2.0}, {1.0, 1.0}, {{0, 1, 2.0}});
}

double mnl_revenue(const ModelParams& p, const Assortment& a) {
  double num = 0.0, den = 0.0;
  a.for_each([&](int i) {
    num += p.revenue[static_cast<std::size_t>(i)] * p.item_weight[static_cast<std::size_t>(i)];
    den += p.item_weight[static_cast<std::size_t>(i)];
  });
  return a.empty() ? 0.0 : num / (p.v0 + den);
}

}  // namespace

TEST_CASE("brute_force_opt") {
  SUBCASE("two-product fixture") {
    const OptResult r = brute_force_opt(two_product_fixture());
    CHECK(r.assortment == Assortment::of(2, {0, 1}));
    CHECK(r.revenue == doctest::Approx(3.6));
  }
  SUBCASE("single product vs empty set") {
    ModelParams p = make_model(1.0, {10.0}, {1.0});
    const OptResult r = brute_force_opt(p);
    CHECK(r.revenue == doctest::Approx(5.0));
    CHECK(r.assortment.size() == 1);
  }
  SUBCASE("cap = 0 returns the empty set") {
    const OptResult r = brute_force_opt(two_product_fixture(), 2, 0);
    CHECK(r.assortment.empty());
    CHECK(r.revenue == 0.0);
  }
  SUBCASE("matches an independent subset scan") {
    Rng rng(7);
    for (int t = 0; t < 25; ++t) {
      ModelParams p = testutil::random_model(rng, 10);
      const auto [best, mask] = testutil::enumerate_best_r2(p);
      const OptResult r = brute_force_opt(p);
      CHECK(r.revenue == doctest::Approx(best).epsilon(1e-12));
      CHECK(r.assortment == testutil::mask_to_assortment(10, mask));
      const auto [cbest, cmask] = testutil::enumerate_best_r2(p, 3);
      (void)cmask;
      const OptResult rc = brute_force_opt(p, 2, 3);
      CHECK(rc.revenue == doctest::Approx(cbest).epsilon(1e-12));
      CHECK(rc.assortment.size() <= 3);
    }
  }
  SUBCASE("capped combination path (n > 20) agrees with the mask walk") {
    Rng rng(8);
    ModelParams p = testutil::random_model(rng, 23);
    ModelParams sub = subsample_instance(p, 12, 3);
    const OptResult wide = brute_force_opt(p, 2, 2);  // combination enumeration
    double best = 0.0;
    for (int i = 0; i < 23; ++i) {
      for (int j = i; j < 23; ++j) {
        Assortment a(23);
        a.insert(i);
        a.insert(j);
        best = std::max(best, expected_revenue_k2(p, a));
      }
    }
    CHECK(wide.revenue == doctest::Approx(best).epsilon(1e-12));
    (void)sub;
  }
  SUBCASE("ties break toward the smaller set") {
    // item 1 carries zero weight: {0} and {0,1} tie exactly
    ModelParams p = make_model(1.0, {5.0, 3.0}, {1.0, 0.0});
    const OptResult r = brute_force_opt(p);
    CHECK(r.assortment == Assortment::of(2, {0}));
  }
  SUBCASE("size guard") {
    Rng rng(9);
    ModelParams p = testutil::random_model(rng, 21);
    CHECK_THROWS_AS(brute_force_opt(p), std::length_error);
  }
}

TEST_CASE("revenue_ordered") {
  SUBCASE("prefix revenues match direct evaluation") {
    Rng rng(17);
    ModelParams p = testutil::random_model(rng, 12);
    const OptResult r = revenue_ordered(p);
    double best = 0.0;
    Assortment prefix(12);
    for (int k = 0; k < 12; ++k) {
      prefix.insert(p.item_order[static_cast<std::size_t>(k)]);
      best = std::max(best, expected_revenue_k2(p, prefix));
    }
    CHECK(r.revenue == doctest::Approx(best).epsilon(1e-12));
  }
  SUBCASE("optimal for pair-free instances") {
    Rng rng(18);
    for (int t = 0; t < 20; ++t) {
      ModelParams p = testutil::random_model(rng, 11, 0.0);
      const auto [best, mask] = testutil::enumerate_best_r2(p);
      (void)mask;
      const OptResult r = revenue_ordered(p);
      CHECK(r.revenue == doctest::Approx(best).epsilon(1e-9));
    }
  }
  SUBCASE("optimal for value-conscious instances at every cap") {
    Rng rng(19);
    for (int t = 0; t < 20; ++t) {
      ModelParams p = testutil::make_value_conscious(rng, 8);
      for (int cap = 1; cap <= 8; ++cap) {
        const auto [best, mask] = testutil::enumerate_best_r2(p, cap);
        (void)mask;
        const OptResult r = revenue_ordered(p, cap);
        CHECK(r.revenue == doctest::Approx(best).epsilon(1e-9));
      }
    }
  }
  SUBCASE("positive gap on some two-group instances") {
    int strictly_suboptimal = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      SyntheticSpec spec;
      spec.n = 12;
      spec.seed = seed;
      ModelParams p = generate_synthetic(spec);
      const OptResult r = revenue_ordered(p);
      const OptResult b = brute_force_opt(p);
      CHECK(r.revenue <= b.revenue + 1e-12);
      if (r.revenue < b.revenue - 1e-9) ++strictly_suboptimal;
    }
    CHECK(strictly_suboptimal >= 1);
  }
}

TEST_CASE("adxopt_l") {
  SUBCASE("l = 1 is optimal for pair-free instances") {
    Rng rng(27);
    for (int t = 0; t < 15; ++t) {
      ModelParams p = testutil::random_model(rng, 10, 0.0);
      const auto [best, mask] = testutil::enumerate_best_r2(p);
      (void)mask;
      const OptResult r = adxopt_l(p, 1);
      CHECK(r.revenue == doctest::Approx(best).epsilon(1e-9));
    }
  }
  SUBCASE("l = 2 output contains every product priced above the optimum") {
    Rng rng(28);
    for (int t = 0; t < 30; ++t) {
      const int n = 6 + static_cast<int>(rng.uniform_index(7));
      ModelParams p = testutil::random_model(rng, n);
      const auto [best, mask] = testutil::enumerate_best_r2(p);
      (void)mask;
      const OptResult r = adxopt_l(p, 2);
      CHECK(r.revenue <= best + 1e-12);
      for (int i = 0; i < n; ++i) {
        if (p.revenue[static_cast<std::size_t>(i)] > best + 1e-9) {
          CHECK(r.assortment.contains(i));
        }
      }
    }
  }
  SUBCASE("single product: one add move") {
    ModelParams p = make_model(1.0, {10.0}, {1.0});
    const OptResult r = adxopt_l(p, 1);
    CHECK(r.assortment == Assortment::of(1, {0}));
    CHECK(r.revenue == doctest::Approx(5.0));
  }
  SUBCASE("capacity respected") {
    Rng rng(29);
    ModelParams p = testutil::random_model(rng, 10);
    const OptResult r = adxopt_l(p, 2, 0, 3);
    CHECK(r.assortment.size() <= 3);
  }
}

TEST_CASE("mnl_opt") {
  SUBCASE("two evaluations on the classic fixture") {
    ModelParams p = make_model(1.0, {10.0, 6.0}, {1.0, 1.0});
    const OptResult r = mnl_opt(p);
    CHECK(r.assortment == Assortment::of(2, {0, 1}));
    CHECK(r.revenue == doctest::Approx(16.0 / 3.0));
  }
  SUBCASE("single product included iff its revenue term is positive") {
    ModelParams keep = make_model(1.0, {10.0}, {1.0});
    CHECK(mnl_opt(keep).assortment.size() == 1);
    ModelParams drop = make_model(1.0, {10.0}, {0.0});
    CHECK(mnl_opt(drop).assortment.empty());
  }
  SUBCASE("matches enumeration under the single-choice objective") {
    Rng rng(37);
    for (int t = 0; t < 15; ++t) {
      ModelParams p = testutil::random_model(rng, 12);
      const OptResult r = mnl_opt(p);
      double best = 0.0;
      for (std::uint32_t mask = 0; mask < (1u << 12); ++mask) {
        best = std::max(best, mnl_revenue(p, testutil::mask_to_assortment(12, mask)));
      }
      CHECK(r.revenue == doctest::Approx(best).epsilon(1e-9));
    }
  }
}

TEST_CASE("export_mip") {
  ModelParams p = two_product_fixture();
  std::ostringstream os;
  export_mip(p, std::nullopt, os);
  const std::string lp = os.str();

  SUBCASE("variable counts: n^2 p-vars, n^2 x-vars, p00") {
    // binary section lists all x variables
    int x_vars = 0;
    std::istringstream in(lp);
    std::string line;
    bool in_binary = false;
    while (std::getline(in, line)) {
      if (line == "Binary") in_binary = true;
      else if (line == "End") in_binary = false;
      else if (in_binary) ++x_vars;
    }
    CHECK(x_vars == 4);
    for (const char* v : {"p_1_1", "p_1_2", "p_2_1", "p_2_2", "p00"}) {
      CHECK(lp.find(v) != std::string::npos);
    }
  }
  SUBCASE("row count follows the documented family formulas") {
    // 3 n^2 pin rows + 3 n(n-1) linking rows + 1 normalization
    int rows = 0;
    std::istringstream in(lp);
    std::string line;
    bool in_st = false;
    while (std::getline(in, line)) {
      if (line == "Subject To") in_st = true;
      else if (line == "Bounds") in_st = false;
      else if (in_st) ++rows;
    }
    CHECK(rows == 3 * 4 + 3 * 2 + 1);
  }
  SUBCASE("normalization row carries p00") {
    CHECK(lp.find(" norm: p00") != std::string::npos);
  }
  SUBCASE("objective uses the revenue sums") {
    CHECK(lp.find("4 p_1_1") != std::string::npos);
    CHECK(lp.find("6 p_1_2") != std::string::npos);
    CHECK(lp.find("6 p_2_1") != std::string::npos);
    CHECK(lp.find("2 p_2_2") != std::string::npos);
  }
  SUBCASE("cap row lists the diagonal x variables") {
    std::ostringstream capped;
    export_mip(p, 1, capped);
    CHECK(capped.str().find("cap: x_1_1 + x_2_2 <= 1") != std::string::npos);
  }
  SUBCASE("pinned p values reproduce the optimum by hand") {
    // offered = {1,2}: p00 = 1/5 and every p_i_j = theta_ij / v0 * p00;
    // objective = (4 + 2 + 6 + 6) / 5 = 3.6
    const double p00 = 1.0 / 5.0;
    const double obj = 4.0 * (1.0 * p00) + 2.0 * (1.0 * p00) + 6.0 * (1.0 * p00) + 6.0 * (1.0 * p00);
    CHECK(obj == doctest::Approx(3.6));
  }
}

TEST_CASE("small_pair_bound_check") {
  SUBCASE("zero pair weights: bound is tight and holds") {
    Rng rng(47);
    ModelParams p = testutil::random_model(rng, 8, 0.0);
    const SmallPairGuarantee chk = small_pair_bound_check(p, 0.0);
    CHECK(chk.holds);
    CHECK(chk.lhs == doctest::Approx(chk.rhs).epsilon(1e-9));
  }
  SUBCASE("random small-pair instances satisfy the bound") {
    Rng rng(48);
    for (int t = 0; t < 25; ++t) {
      ModelParams p = testutil::make_small_pairs(rng, 8, 0.05);
      const SmallPairGuarantee chk = small_pair_bound_check(p, 0.05);
      CHECK(chk.holds);
    }
  }
  SUBCASE("assumption violation reported with the offending pair") {
    ModelParams p = make_model(1.0, {4.0, 2.0}, {1.0, 1.0}, {{0, 1, 2.0}});
    CHECK_THROWS_AS(small_pair_bound_check(p, 0.05), std::domain_error);
  }
}

TEST_CASE("oracle dominance") {
  Rng rng(57);
  for (int t = 0; t < 20; ++t) {
    ModelParams p = testutil::random_model(rng, 10);
    const double best = brute_force_opt(p).revenue;
    CHECK(revenue_ordered(p).revenue <= best + 1e-12);
    CHECK(adxopt_l(p, 1).revenue <= best + 1e-12);
    CHECK(adxopt_l(p, 2).revenue <= best + 1e-12);
    CHECK(expected_revenue_k2(p, mnl_opt(p).assortment) <= best + 1e-12);
  }
}

TEST_CASE("structural facts at the enumerated optimum") {
  Rng rng(67);
  int singleton_optima = 0;
  for (int t = 0; t < 40; ++t) {
    const int n = 6 + static_cast<int>(rng.uniform_index(7));
    ModelParams p = testutil::random_model(rng, n);
    const OptResult star = brute_force_opt(p);
    const double r_star = star.revenue;

    // products outside the optimum are priced at or below the optimal revenue
    for (int i = 0; i < n; ++i) {
      if (!star.assortment.contains(i)) {
        CHECK(p.revenue[static_cast<std::size_t>(i)] <= r_star + 1e-9);
      }
    }
    // every member has a partner paying their joint way (skip singleton optima)
    if (star.assortment.size() >= 2) {
      star.assortment.for_each([&](int i) {
        bool has_partner = false;
        star.assortment.for_each([&](int j) {
          if (j != i &&
              p.revenue[static_cast<std::size_t>(i)] + p.revenue[static_cast<std::size_t>(j)] >=
                  r_star - 1e-9) {
            has_partner = true;
          }
        });
        CHECK(has_partner);
      });
    } else {
      ++singleton_optima;
    }
    // prefix revenues rise while the last added product is priced above R*
    Assortment prefix(n);
    double prev = 0.0;
    for (int k = 0; k < n; ++k) {
      const int item = p.item_order[static_cast<std::size_t>(k)];
      if (p.revenue[static_cast<std::size_t>(item)] <= r_star) break;
      prefix.insert(item);
      const double rev = expected_revenue_k2(p, prefix);
      CHECK(rev >= prev - 1e-9);
      prev = rev;
    }
  }
  CHECK(singleton_optima <= 40);  // recorded, not forbidden
}
