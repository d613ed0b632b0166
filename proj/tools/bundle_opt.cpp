// bundle_opt: estimate bundle choice models from transactions and compute
// (near-)revenue-optimal recommendation sets.
//
// Subcommands: estimate, optimize, benchmark, mnl-gap, synth, export-mip,
// export-qubo. Every command is deterministic given --seed (wall_ms fields
// excluded). Exit codes: 0 ok, 1 algorithm failure, 2 usage/input error.

#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bundleopt/bench.hpp"
#include "bundleopt/benchmarks.hpp"
#include "bundleopt/data.hpp"
#include "bundleopt/model.hpp"
#include "bundleopt/model_io.hpp"
#include "bundleopt/qubo.hpp"
#include "bundleopt/search.hpp"

namespace {

using nlohmann::ordered_json;

struct GlobalOpts {
  std::uint64_t seed = 0;
  int threads = 1;
  bool quiet = false;
};

void write_trace(const bundleopt::SearchTrace& trace, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open trace file for writing: " + path);
  for (const auto& it : trace.iterations) {
    ordered_json j;
    j["L"] = it.lower;
    j["U"] = it.upper;
    j["kappa"] = it.kappa;
    j["compare"] = it.compare_true;
    j["incumbent"] = it.incumbent.items();
    j["revenue"] = it.incumbent_revenue;
    j["wall_ms"] = it.wall_ms;
    f << j.dump() << "\n";
  }
}

std::vector<int> parse_n_list(const std::string& csv) {
  std::vector<int> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(std::stoi(tok));
  }
  if (out.empty()) throw bundleopt::UsageError("--n-list must name at least one size");
  return out;
}

std::vector<std::string> parse_algo_list(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    const auto& known = bundleopt::known_algorithms();
    if (std::find(known.begin(), known.end(), tok) == known.end())
      throw bundleopt::UsageError("unknown algorithm '" + tok + "'");
    out.push_back(tok);
  }
  if (out.empty()) throw bundleopt::UsageError("--algorithms must name at least one algorithm");
  return out;
}

/// Re-throws pipeline failures with the failing stage named, preserving the
/// exception type (it drives the exit code).
template <typename Fn>
auto estimate_stage(const char* name, Fn&& fn) {
  try {
    return fn();
  } catch (const bundleopt::ParseError& e) {
    throw bundleopt::ParseError(std::string("stage ") + name + ": " + e.what());
  } catch (const bundleopt::EstimationError& e) {
    throw bundleopt::EstimationError(std::string("stage ") + name + ": " + e.what());
  } catch (const std::domain_error& e) {
    throw std::domain_error(std::string("stage ") + name + ": " + e.what());
  }
}

int cmd_estimate(const GlobalOpts& g, const std::string& csv_path, int k, int min_support,
                 double no_purchase_prob, const std::string& estimator, double tol, int max_iters,
                 double train_ratio, const std::string& out_path) {
  using namespace bundleopt;
  TransactionLog log = estimate_stage("ingest", [&] { return ingest_csv(csv_path); });
  log = estimate_stage("filter", [&] { return filter_infrequent(log, min_support); });
  if (log.n_items() == 0)
    throw EstimationError("stage filter: no products survive the support filter");
  AugmentResult aug = estimate_stage("augment", [&] { return make_observations(log, k); });
  auto [train, test] = train_test_split(aug.observations, train_ratio, g.seed);
  if (train.empty()) throw EstimationError("stage split: empty training split");

  ModelParams params;
  bool v0_from_data = false;
  std::string used = estimator;
  if (used == "auto") used = "counting";  // fixed-offered-set data has a closed-form fit
  if (used == "counting") {
    CountingEstimate est = estimate_stage("fit", [&] { return estimate_counting(train, log.price); });
    params = std::move(est.params);
    v0_from_data = est.v0_from_data;
  } else if (used == "mle") {
    MleConfig cfg;
    cfg.tol = tol;
    cfg.max_iters = max_iters;
    cfg.seed = g.seed;
    MleResult res = estimate_stage("fit", [&] { return estimate_mle(train, log.n_items(), k, cfg); });
    params = from_natural(res.natural, 1.0, log.price);
  } else {
    throw UsageError("--estimator must be auto, counting or mle");
  }
  if (!v0_from_data) {
    params = estimate_stage("calibrate", [&] {
      return calibrate_v0(std::move(params), no_purchase_prob, k);
    });
  }

  save_model(params, out_path, log.item_ids);

  int train_zero = 0, test_zero = 0;
  const double train_ll = log_likelihood(params, train, k, &train_zero);
  const double test_ll = log_likelihood(params, test, k, &test_zero);
  ordered_json j;
  j["model_path"] = out_path;
  j["estimator"] = used;
  j["items"] = params.n();
  j["pairs"] = params.pair_weight.size();
  j["observations"] = aug.observations.size();
  j["rejected_bundles"] = aug.rejected_bundles;
  j["price_warnings"] = log.price_warnings;
  j["train_ll"] = train_ll;
  j["test_ll"] = test_ll;
  j["train_zero_prob"] = train_zero;
  j["test_zero_prob"] = test_zero;
  std::cout << j.dump() << "\n";
  return 0;
}

int cmd_optimize(const GlobalOpts& g, const std::string& model_path, const std::string& algorithm,
                 double epsilon, std::optional<int> capacity, double time_limit_ms,
                 const std::string& compare, const std::string& trace_path) {
  using namespace bundleopt;
  const ModelFile mf = load_model(model_path);
  const ModelParams& p = mf.params;
  if (algorithm == "brute" && p.n() > 20)
    throw UsageError("brute enumerates at most 20 products (got " + std::to_string(p.n()) + ")");

  AlgoOptions opt;
  opt.epsilon = epsilon;
  opt.cap = capacity;
  opt.seed = g.seed;
  opt.deadline_ms = time_limit_ms;
  opt.threads = g.threads;
  if (compare == "exact") {
    opt.compare = AlgoOptions::Compare::exact;
  } else if (compare == "portfolio") {
    opt.compare = AlgoOptions::Compare::portfolio;
  } else if (compare != "auto") {
    throw UsageError("--compare must be auto, exact or portfolio");
  }

  const auto t0 = std::chrono::steady_clock::now();
  AlgoOutput out;
  SearchResult search_result;
  const bool is_search = algorithm == "bsao" || algorithm == "bsao-eff" || algorithm == "noisy-bsao";
  out = run_algorithm(algorithm, p, opt);
  const double wall =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

  if (is_search && !trace_path.empty()) {
    // Re-run to capture the full trace deterministically (cheap relative to
    // asking users to pre-commit to a trace path).
    SearchConfig cfg;
    cfg.epsilon = epsilon;
    cfg.seed = g.seed;
    cfg.heuristic_deadline_ms = time_limit_ms;
    cfg.threads = g.threads;
    cfg.compare_mode = opt.compare == AlgoOptions::Compare::portfolio
                           ? CompareMode::heuristic_portfolio
                           : CompareMode::exact;
    if (algorithm == "bsao") {
      search_result = binary_search_ao(p, cfg, capacity);
    } else if (algorithm == "bsao-eff") {
      search_result = binary_search_ao_efficient(p, cfg);
    } else {
      search_result = capacity ? constrained_binary_search_ao(p, cfg, *capacity)
                               : noisy_binary_search_ao(p, cfg);
    }
    write_trace(search_result.trace, trace_path);
  }

  ordered_json j;
  j["assortment"] = out.assortment.items();
  j["revenue"] = out.revenue;
  j["algorithm"] = algorithm;
  j["wall_ms"] = wall;
  for (auto& [key, val] : out.extra.items()) j[key] = val;
  if (!trace_path.empty()) j["trace_path"] = trace_path;
  std::cout << j.dump() << "\n";
  return 0;
}

int cmd_benchmark(const GlobalOpts& g, bundleopt::BenchSpec spec, const std::string& model_path) {
  using namespace bundleopt;
  if (!model_path.empty()) spec.base_model = load_model(model_path).params;
  spec.seed = g.seed;
  spec.threads = g.threads;
  const auto records = run_benchmark(spec);
  for (const auto& r : records) std::cout << record_to_json(r).dump() << "\n";
  if (!g.quiet) std::cerr << summary_table(records);
  return 0;
}

int cmd_mnl_gap(const GlobalOpts& g, bundleopt::BenchSpec spec, const std::string& model_path) {
  using namespace bundleopt;
  if (!model_path.empty()) {
    spec.base_model = load_model(model_path).params;
    if (spec.base_model->pair_weight.size() == 0 && !g.quiet) {
      std::cerr << "note: model has no pair weights; the gap is identically zero\n";
    }
  }
  spec.seed = g.seed;
  spec.threads = g.threads;
  const auto records = run_mnl_gap(spec);
  for (const auto& r : records) std::cout << record_to_json(r).dump() << "\n";
  if (!g.quiet) std::cerr << summary_table(records);
  return 0;
}

int cmd_synth(const GlobalOpts& g, int n, const std::string& generator, double no_purchase_prob,
              const std::string& out_path) {
  using namespace bundleopt;
  SyntheticSpec spec;
  spec.n = n;
  spec.seed = g.seed;
  spec.no_purchase_prob = no_purchase_prob;
  if (generator == "two_group") {
    spec.generator = Generator::two_group;
  } else if (generator == "uniform") {
    spec.generator = Generator::uniform;
  } else {
    throw UsageError("--generator must be two_group or uniform");
  }
  const ModelParams p = generate_synthetic(spec);
  save_model(p, out_path);
  ordered_json j;
  j["model_path"] = out_path;
  j["n"] = n;
  j["seed"] = g.seed;
  j["generator"] = generator;
  std::cout << j.dump() << "\n";
  return 0;
}

int cmd_export_mip(const std::string& model_path, std::optional<int> cap,
                   const std::string& out_path) {
  using namespace bundleopt;
  const ModelFile mf = load_model(model_path);
  export_mip(mf.params, cap, out_path);
  return 0;
}

int cmd_export_qubo(const std::string& model_path, double kappa, std::optional<int> cap,
                    const std::string& out_path) {
  using namespace bundleopt;
  const ModelFile mf = load_model(model_path);
  const int n = mf.params.n();
  QuboInstance ins =
      build_compare_qubo(mf.params, kappa, bundleopt::Assortment(n), bundleopt::Assortment(n));
  if (cap) ins = embed_cardinality(ins, *cap);
  dump_qubo(ins, out_path);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bundle choice model estimation and assortment optimization"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--seed", g.seed, "global random seed");
  app.add_option("--threads", g.threads, "worker threads")
      ->envname("BUNDLE_OPT_THREADS")
      ->check(CLI::Range(1, 256));
  app.add_flag("--quiet", g.quiet, "suppress the human-readable summary on stderr");
  app.fallthrough();  // global flags may follow the subcommand

  // estimate
  auto* est = app.add_subcommand("estimate", "fit a model from a transactions CSV");
  est->fallthrough();
  std::string est_csv, est_out = "model.json", est_estimator = "auto";
  std::string est_config;
  int est_k = 2, est_min_support = 5, est_max_iters = 2000;
  double est_p0 = 0.30, est_tol = 1e-6, est_train_ratio = 0.8;
  est->add_option("--csv", est_csv, "transactions CSV (order_id,item_id,price)")->required();
  est->add_option("--out", est_out, "output model JSON path");
  est->add_option("--k", est_k, "maximum bundle size")->check(CLI::Range(1, 2));
  est->add_option("--min-support", est_min_support, "drop products in fewer orders than this");
  est->add_option("--no-purchase-prob", est_p0, "calibrated P(no purchase | full assortment)");
  est->add_option("--estimator", est_estimator, "auto | counting | mle");
  est->add_option("--tol", est_tol, "MLE gradient tolerance");
  est->add_option("--max-iters", est_max_iters, "MLE iteration limit");
  est->add_option("--train-ratio", est_train_ratio, "training share of the 80:20-style split");
  est->add_option("--config", est_config,
                  "JSON config file (tol, max_iters, seed, min_support, no_purchase_prob, k); "
                  "explicit flags win");

  // optimize
  auto* opt = app.add_subcommand("optimize", "compute a (near-)optimal recommendation set");
  opt->fallthrough();
  std::string opt_model, opt_algorithm = "bsao-eff", opt_compare = "auto", opt_trace;
  double opt_epsilon = 1e-4, opt_deadline = 250.0;
  int opt_capacity = 0;
  opt->add_option("--model", opt_model, "model JSON path")->required();
  opt->add_option("--algorithm", opt_algorithm,
                  "brute | revord | mnl | adxopt1 | adxopt2 | bsao | bsao-eff | noisy-bsao");
  opt->add_option("--epsilon", opt_epsilon, "revenue tolerance of the binary search");
  opt->add_option("--capacity", opt_capacity, "cardinality cap (0 = unconstrained)");
  opt->add_option("--time-limit-ms", opt_deadline, "per-compare-step heuristic deadline");
  opt->add_option("--compare", opt_compare, "compare-step solver: auto | exact | portfolio");
  opt->add_option("--trace", opt_trace, "write a JSON-lines search trace here");

  // benchmark
  auto* ben = app.add_subcommand("benchmark", "Monte-Carlo comparison of algorithms");
  ben->fallthrough();
  std::string ben_nlist = "8", ben_algos = "brute,revord,bsao-eff", ben_model,
              ben_generator = "two_group";
  int ben_runs = 50, ben_cap = 0;
  double ben_eps = 1e-4, ben_deadline = 250.0, ben_p0 = 0.30;
  ben->add_option("--n-list", ben_nlist, "comma-separated instance sizes");
  ben->add_option("--runs", ben_runs, "Monte-Carlo runs per size");
  ben->add_option("--algorithms", ben_algos, "comma-separated algorithm tags");
  ben->add_option("--model", ben_model, "subsample instances from this model JSON");
  ben->add_option("--generator", ben_generator, "two_group | uniform (ignored with --model)");
  ben->add_option("--cap", ben_cap, "cardinality cap (0 = unconstrained)");
  ben->add_option("--epsilon", ben_eps, "binary-search tolerance");
  ben->add_option("--time-limit-ms", ben_deadline, "per-compare-step heuristic deadline");
  ben->add_option("--no-purchase-prob", ben_p0, "generator calibration");

  // mnl-gap
  auto* mg = app.add_subcommand("mnl-gap", "revenue lost by ignoring pair effects");
  mg->fallthrough();
  std::string mg_nlist = "12", mg_model, mg_generator = "two_group";
  int mg_runs = 50;
  double mg_eps = 1e-4, mg_deadline = 250.0, mg_p0 = 0.30;
  mg->add_option("--n-list", mg_nlist, "comma-separated instance sizes");
  mg->add_option("--runs", mg_runs, "Monte-Carlo runs per size");
  mg->add_option("--model", mg_model, "subsample instances from this model JSON");
  mg->add_option("--generator", mg_generator, "two_group | uniform (ignored with --model)");
  mg->add_option("--epsilon", mg_eps, "binary-search tolerance");
  mg->add_option("--time-limit-ms", mg_deadline, "per-compare-step heuristic deadline");
  mg->add_option("--no-purchase-prob", mg_p0, "generator calibration");

  // synth
  auto* sy = app.add_subcommand("synth", "write a synthetic model instance");
  sy->fallthrough();
  std::string sy_out = "synth_model.json", sy_generator = "two_group";
  int sy_n = 10;
  double sy_p0 = 0.30;
  sy->add_option("--n", sy_n, "product count")->required();
  sy->add_option("--generator", sy_generator, "two_group | uniform");
  sy->add_option("--no-purchase-prob", sy_p0, "calibrated no-purchase probability");
  sy->add_option("--out", sy_out, "output model JSON path");

  // export-mip
  auto* em = app.add_subcommand("export-mip", "write the exact MIP formulation (LP format)");
  em->fallthrough();
  std::string em_model, em_out = "model.lp";
  int em_cap = 0;
  em->add_option("--model", em_model, "model JSON path")->required();
  em->add_option("--cap", em_cap, "cardinality cap row (0 = none)");
  em->add_option("--out", em_out, "output LP path");

  // export-qubo
  auto* eq = app.add_subcommand("export-qubo", "write a compare-step QUBO dump");
  eq->fallthrough();
  std::string eq_model, eq_out = "compare.qubo";
  double eq_kappa = 0.0;
  int eq_cap = 0;
  eq->add_option("--model", eq_model, "model JSON path")->required();
  eq->add_option("--kappa", eq_kappa, "compare threshold")->required();
  eq->add_option("--cap", eq_cap, "embed a cardinality cap (0 = none)");
  eq->add_option("--out", eq_out, "output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    if (est->parsed()) {
      if (!est_config.empty()) {
        std::ifstream cf(est_config);
        if (!cf) throw bundleopt::ParseError("cannot open config file: " + est_config);
        nlohmann::json c;
        try {
          cf >> c;
        } catch (const nlohmann::json::exception& e) {
          throw bundleopt::ParseError("config file " + est_config + ": " + e.what());
        }
        auto merge = [&](const char* key, const char* flag, auto& var) {
          if (c.contains(key) && est->count(flag) == 0) {
            var = c.at(key).get<std::decay_t<decltype(var)>>();
          }
        };
        merge("tol", "--tol", est_tol);
        merge("max_iters", "--max-iters", est_max_iters);
        merge("min_support", "--min-support", est_min_support);
        merge("no_purchase_prob", "--no-purchase-prob", est_p0);
        merge("k", "--k", est_k);
        if (c.contains("seed") && app.count("--seed") == 0) g.seed = c.at("seed").get<std::uint64_t>();
      }
      return cmd_estimate(g, est_csv, est_k, est_min_support, est_p0, est_estimator, est_tol,
                          est_max_iters, est_train_ratio, est_out);
    }
    if (opt->parsed()) {
      return cmd_optimize(g, opt_model, opt_algorithm, opt_epsilon,
                          opt_capacity > 0 ? std::optional<int>(opt_capacity) : std::nullopt,
                          opt_deadline, opt_compare, opt_trace);
    }
    if (ben->parsed()) {
      bundleopt::BenchSpec spec;
      spec.n_list = parse_n_list(ben_nlist);
      spec.runs = ben_runs;
      spec.algorithms = parse_algo_list(ben_algos);
      spec.generator = ben_generator == "uniform" ? bundleopt::Generator::uniform
                                                  : bundleopt::Generator::two_group;
      if (ben_generator != "uniform" && ben_generator != "two_group")
        throw bundleopt::UsageError("--generator must be two_group or uniform");
      spec.no_purchase_prob = ben_p0;
      if (ben_cap > 0) spec.cap = ben_cap;
      spec.epsilon = ben_eps;
      spec.deadline_ms = ben_deadline;
      return cmd_benchmark(g, std::move(spec), ben_model);
    }
    if (mg->parsed()) {
      bundleopt::BenchSpec spec;
      spec.n_list = parse_n_list(mg_nlist);
      spec.runs = mg_runs;
      spec.generator = mg_generator == "uniform" ? bundleopt::Generator::uniform
                                                 : bundleopt::Generator::two_group;
      if (mg_generator != "uniform" && mg_generator != "two_group")
        throw bundleopt::UsageError("--generator must be two_group or uniform");
      spec.no_purchase_prob = mg_p0;
      spec.epsilon = mg_eps;
      spec.deadline_ms = mg_deadline;
      return cmd_mnl_gap(g, std::move(spec), mg_model);
    }
    if (sy->parsed()) return cmd_synth(g, sy_n, sy_generator, sy_p0, sy_out);
    if (em->parsed())
      return cmd_export_mip(em_model, em_cap > 0 ? std::optional<int>(em_cap) : std::nullopt,
                            em_out);
    if (eq->parsed())
      return cmd_export_qubo(eq_model, eq_kappa,
                             eq_cap > 0 ? std::optional<int>(eq_cap) : std::nullopt, eq_out);
  } catch (const bundleopt::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const bundleopt::ParseError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const std::length_error& e) {
    std::cerr << "size error: " << e.what() << "\n";
    return 2;
  } catch (const std::domain_error& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
