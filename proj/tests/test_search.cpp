#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "bundleopt/benchmarks.hpp"
#include "bundleopt/search.hpp"
#include "test_util.hpp"

using namespace bundleopt;

namespace {

ModelParams two_product_fixture() {
  return make_model(1.0, {4.0, 2.0}, {1.0, 1.0}, {{0, 1, 2.0}});
}

SearchConfig exact_config(double eps = 1e-6) {
  SearchConfig cfg;
  cfg.epsilon = eps;
  cfg.compare_mode = CompareMode::exact;
  return cfg;
}

}  // namespace

TEST_CASE("binary search on the two-product fixture") {
  const SearchResult res = binary_search_ao(two_product_fixture(), exact_config());
  CHECK(res.revenue == doctest::Approx(3.6).epsilon(1e-6));
  CHECK(res.assortment == Assortment::of(2, {0, 1}));
}

TEST_CASE("single product instance") {
  ModelParams p = make_model(1.0, {10.0}, {1.0});
  const SearchResult res = binary_search_ao(p, exact_config());
  CHECK(res.assortment == Assortment::of(1, {0}));
  CHECK(res.revenue == doctest::Approx(5.0).epsilon(1e-6));
}

TEST_CASE("pair-free instances match the single-choice optimum") {
  Rng rng(21);
  for (int t = 0; t < 20; ++t) {
    ModelParams p = testutil::random_model(rng, 10, 0.0);
    const SearchResult res = binary_search_ao(p, exact_config(1e-7));
    const OptResult oracle = mnl_opt(p);
    CHECK(res.revenue == doctest::Approx(oracle.revenue).epsilon(1e-6));
  }
}

TEST_CASE("interval correctness, halving and the iteration bound") {
  Rng rng(31);
  for (int t = 0; t < 25; ++t) {
    const int n = 6 + static_cast<int>(rng.uniform_index(7));
    ModelParams p = testutil::random_model(rng, n);
    const auto [best, best_mask] = testutil::enumerate_best_r2(p);
    (void)best_mask;
    SearchConfig cfg = exact_config(1e-5);
    const SearchResult res = binary_search_ao(p, cfg);

    const double r1 = p.revenue[static_cast<std::size_t>(p.item_order[0])];
    const double r2 = p.revenue[static_cast<std::size_t>(p.item_order[1])];
    const double range = r1 + r2;
    const int bound = static_cast<int>(std::ceil(std::log2(range / cfg.epsilon))) + 1;
    CHECK(static_cast<int>(res.trace.iterations.size()) <= bound);

    double prev_width = range;
    for (const auto& it : res.trace.iterations) {
      CHECK(it.lower <= best + 1e-9);
      CHECK(it.upper >= best - 1e-9);
      const double width = it.upper - it.lower;
      CHECK(width == doctest::Approx(prev_width / 2.0).epsilon(1e-9));
      prev_width = width;
    }
    CHECK(res.revenue >= best - cfg.epsilon);
    CHECK(res.revenue <= best + 1e-9);
  }
}

TEST_CASE("incumbent revenue is nondecreasing in every mode") {
  Rng rng(41);
  for (int t = 0; t < 10; ++t) {
    ModelParams p = testutil::random_model(rng, 10);
    for (int mode = 0; mode < 3; ++mode) {
      SearchConfig cfg = exact_config(1e-5);
      cfg.seed = static_cast<std::uint64_t>(t);
      SearchResult res;
      if (mode == 0) {
        res = binary_search_ao(p, cfg);
      } else if (mode == 1) {
        res = binary_search_ao_efficient(p, cfg);
      } else {
        cfg.epsilon = 0.01;
        res = noisy_binary_search_ao(p, cfg);
      }
      double prev = 0.0;
      for (const auto& it : res.trace.iterations) {
        CHECK(it.incumbent_revenue >= prev - 1e-12);
        prev = it.incumbent_revenue;
      }
    }
  }
}

TEST_CASE("efficient variant") {
  SUBCASE("agrees with the plain search and never uses more QUBO variables") {
    Rng rng(51);
    for (int t = 0; t < 50; ++t) {
      ModelParams p = testutil::random_model(rng, 12);
      SearchConfig cfg = exact_config(1e-6);
      const SearchResult plain = binary_search_ao(p, cfg);
      const SearchResult eff = binary_search_ao_efficient(p, cfg);
      CHECK(std::abs(plain.revenue - eff.revenue) <= 2e-6);
      // paired per-iteration variable counts: the pruned search never builds
      // a larger compare QUBO
      const std::size_t common = std::min(plain.trace.iterations.size(), eff.trace.iterations.size());
      for (std::size_t i = 0; i < common; ++i) {
        CHECK(eff.trace.iterations[i].qubo_vars <= plain.trace.iterations[i].qubo_vars);
      }
    }
  }
  SUBCASE("lower bound starts at the monotone prefix boundary") {
    // Prefix revenues rise then fall; L1 = r_{l+1}.
    ModelParams p = make_model(1.0, {5.0, 4.0, 3.4, 0.5}, {1.0, 1.0, 1.0, 5.0});
    Assortment a1 = Assortment::of(4, {0});
    Assortment a2 = Assortment::of(4, {0, 1});
    Assortment a3 = Assortment::of(4, {0, 1, 2});
    REQUIRE(expected_revenue_k2(p, a1) < expected_revenue_k2(p, a2));
    REQUIRE(expected_revenue_k2(p, a2) < expected_revenue_k2(p, a3));
    REQUIRE(expected_revenue_k2(p, Assortment::full(4)) < expected_revenue_k2(p, a3));
    SearchConfig cfg = exact_config(1e-6);
    const SearchResult res = binary_search_ao_efficient(p, cfg);
    REQUIRE(!res.trace.iterations.empty());
    // first recorded interval derives from [r_4, r_1 + r_2] after one halving
    const double l1 = 0.5, u1 = 9.0;
    const auto& first = res.trace.iterations.front();
    const double kappa1 = (l1 + u1) / 2.0;
    CHECK(first.kappa == doctest::Approx(kappa1));
  }
  SUBCASE("a product priced above every achievable revenue gets forced in") {
    // item 0 is expensive but faintly weighted: no assortment earns r_1, so
    // once the upper bound tightens below r_1 the item is pinned into every
    // compare step
    ModelParams p = make_model(1.0, {10.0, 1.0, 0.9, 0.8, 0.7},
                               {0.05, 1.0, 1.0, 1.0, 1.0},
                               {{1, 2, 0.5}, {2, 3, 0.4}, {1, 4, 0.3}});
    const auto [best, mask] = testutil::enumerate_best_r2(p);
    REQUIRE(best < 10.0);
    REQUIRE(((mask >> 0) & 1u) == 1u);  // it still belongs to the optimum
    const SearchResult res = binary_search_ao_efficient(p, exact_config(1e-6));
    CHECK(res.trace.pruned_in.contains(0));
    CHECK(res.assortment.contains(0));
  }
  SUBCASE("interval brackets the optimum at every iteration") {
    Rng rng(54);
    for (int t = 0; t < 20; ++t) {
      ModelParams p = testutil::random_model(rng, 10);
      const auto [best, mask] = testutil::enumerate_best_r2(p);
      (void)mask;
      const SearchResult res = binary_search_ao_efficient(p, exact_config(1e-5));
      for (const auto& it : res.trace.iterations) {
        CHECK(it.lower <= best + 1e-9);
        CHECK(it.upper >= best - 1e-9);
      }
    }
  }
  SUBCASE("pruning soundness against the enumerated optimum") {
    Rng rng(52);
    for (int t = 0; t < 40; ++t) {
      ModelParams p = testutil::random_model(rng, 11);
      SearchConfig cfg = exact_config(1e-6);
      const SearchResult res = binary_search_ao_efficient(p, cfg);
      CHECK(res.trace.pruned_in.subset_of(res.assortment));
      CHECK_FALSE(res.trace.pruned_out.intersects(res.assortment));
      // forced-in products belong to the enumerated optimum; forced-out
      // products are missing from it
      const auto [best, mask] = testutil::enumerate_best_r2(p);
      (void)best;
      const Assortment opt = testutil::mask_to_assortment(11, mask);
      res.trace.pruned_in.for_each([&](int i) { CHECK(opt.contains(i)); });
      res.trace.pruned_out.for_each([&](int i) { CHECK_FALSE(opt.contains(i)); });
    }
  }
  SUBCASE("matches the enumerated optimum within epsilon") {
    Rng rng(53);
    for (int t = 0; t < 60; ++t) {
      const int n = 6 + static_cast<int>(rng.uniform_index(7));
      ModelParams p = testutil::random_model(rng, n);
      const auto [best, mask] = testutil::enumerate_best_r2(p);
      (void)mask;
      const SearchResult res = binary_search_ao_efficient(p, exact_config(1e-6));
      CHECK(res.revenue >= best - 1e-6);
      CHECK(res.revenue <= best + 1e-9);
    }
  }
}

TEST_CASE("compare-step truncation yields a partial result") {
  Rng rng(61);
  ModelParams p = testutil::random_model(rng, 16);
  SearchConfig cfg = exact_config(1e-6);
  cfg.exact_budget.max_nodes = 50;  // starve the exact solver
  const SearchResult res = binary_search_ao(p, cfg);
  CHECK(res.trace.truncated);
  CHECK(res.assortment.size() >= 1);  // best incumbent still returned
}

TEST_CASE("constrained search") {
  SUBCASE("cap = 1 returns the best single product") {
    Rng rng(71);
    for (int t = 0; t < 15; ++t) {
      ModelParams p = testutil::random_model(rng, 9);
      const SearchResult res = constrained_binary_search_ao(p, exact_config(1e-9), 1);
      int arg = 0;
      double best = -1.0;
      for (int i = 0; i < 9; ++i) {
        const double rev = p.revenue[static_cast<std::size_t>(i)] * p.item_weight[static_cast<std::size_t>(i)] /
                           (p.v0 + p.item_weight[static_cast<std::size_t>(i)]);
        if (rev > best) {
          best = rev;
          arg = i;
        }
      }
      CHECK(res.revenue == doctest::Approx(best).epsilon(1e-7));
      CHECK(res.assortment == Assortment::of(9, {arg}));
    }
  }
  SUBCASE("cap = n equals the unconstrained result") {
    Rng rng(72);
    for (int t = 0; t < 10; ++t) {
      ModelParams p = testutil::random_model(rng, 8);
      const SearchResult capped = constrained_binary_search_ao(p, exact_config(1e-6), 8);
      const SearchResult plain = binary_search_ao(p, exact_config(1e-6));
      CHECK(std::abs(capped.revenue - plain.revenue) <= 2e-6);
    }
  }
  SUBCASE("matches constrained enumeration") {
    Rng rng(73);
    for (int t = 0; t < 30; ++t) {
      ModelParams p = testutil::random_model(rng, 10);
      const int cap = 3;
      const auto [best, mask] = testutil::enumerate_best_r2(p, cap);
      (void)mask;
      const SearchResult res = constrained_binary_search_ao(p, exact_config(1e-6), cap);
      CHECK(res.assortment.size() <= cap);
      CHECK(res.revenue >= best - 1e-6);
      CHECK(res.revenue <= best + 1e-9);
    }
  }
}

TEST_CASE("noisy search") {
  SUBCASE("posterior mass stays normalized after every update") {
    Rng rng(81);
    ModelParams p = testutil::random_model(rng, 10);
    SearchConfig cfg = exact_config(0.01);
    cfg.seed = 3;
    const SearchResult res = noisy_binary_search_ao(p, cfg);
    REQUIRE(!res.trace.iterations.empty());
    for (const auto& it : res.trace.iterations) {
      CHECK(it.posterior_mass == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  SUBCASE("noise-free compares converge near the plain search interval") {
    Rng rng(82);
    int total_iters = 0, total_bound = 0;
    for (int t = 0; t < 15; ++t) {
      ModelParams p = testutil::random_model(rng, 10);
      SearchConfig cfg = exact_config(0.02);  // a few grid cells wide
      cfg.seed = static_cast<std::uint64_t>(t);
      const SearchResult noisy = noisy_binary_search_ao(p, cfg);
      const SearchResult plain = binary_search_ao(p, cfg);
      const auto [best, mask] = testutil::enumerate_best_r2(p);
      (void)mask;
      // both land within epsilon of the optimum
      CHECK(noisy.revenue >= best - cfg.epsilon - 1e-9);
      CHECK(plain.revenue >= best - cfg.epsilon - 1e-9);
      const double r1 = p.revenue[static_cast<std::size_t>(p.item_order[0])];
      const double r2 = p.revenue[static_cast<std::size_t>(p.item_order[1])];
      total_bound += static_cast<int>(std::ceil(std::log2((r1 + r2) / cfg.epsilon)));
      total_iters += static_cast<int>(noisy.trace.iterations.size());
      // final credible interval brackets the optimum up to grid resolution
      const auto& last = noisy.trace.iterations.back();
      const double step = (r1 + r2) / cfg.grid_size;
      CHECK(last.lower <= best + step + 1e-9);
      CHECK(last.upper >= best - step - 1e-9);
    }
    CHECK(total_iters <= 3 * total_bound);
  }
  SUBCASE("a single adversarial compare at iteration 1 rarely derails the search") {
    Rng rng(83);
    int contained = 0;
    for (int t = 0; t < 100; ++t) {
      ModelParams p = testutil::random_model(rng, 10);
      const auto [best, mask] = testutil::enumerate_best_r2(p);
      (void)mask;
      SearchConfig cfg = exact_config(0.02);
      cfg.seed = static_cast<std::uint64_t>(t);
      cfg.compare_interceptor = [](int iter, double, bool computed) -> std::optional<bool> {
        if (iter == 0) return !computed;  // flip the first outcome
        return std::nullopt;
      };
      const SearchResult res = noisy_binary_search_ao(p, cfg);
      REQUIRE(!res.trace.iterations.empty());
      const auto& last = res.trace.iterations.back();
      const double step = (p.revenue[static_cast<std::size_t>(p.item_order[0])] +
                           p.revenue[static_cast<std::size_t>(p.item_order[1])]) /
                          cfg.grid_size;
      if (last.lower - step <= best && best <= last.upper + step) ++contained;
    }
    CHECK(contained >= 95);
  }
  SUBCASE("portfolio compares still reach the optimum on small instances") {
    Rng rng(84);
    for (int t = 0; t < 10; ++t) {
      ModelParams p = testutil::random_model(rng, 10);
      const auto [best, mask] = testutil::enumerate_best_r2(p);
      (void)mask;
      SearchConfig cfg;
      cfg.epsilon = 0.01;
      cfg.compare_mode = CompareMode::heuristic_portfolio;
      cfg.heuristic_deadline_ms = 5.0;
      cfg.seed = static_cast<std::uint64_t>(t);
      const SearchResult res = noisy_binary_search_ao(p, cfg);
      CHECK(res.revenue >= best - 0.02);
    }
  }
}

TEST_CASE("search configuration validation") {
  ModelParams p = two_product_fixture();
  SearchConfig bad = exact_config();
  bad.epsilon = 0.0;
  CHECK_THROWS_AS(binary_search_ao(p, bad), std::domain_error);
  SearchConfig bad2 = exact_config();
  bad2.noise_p = 0.7;
  CHECK_THROWS_AS(binary_search_ao(p, bad2), std::domain_error);
  CHECK_THROWS_AS(constrained_binary_search_ao(p, exact_config(), 0), std::domain_error);
}
