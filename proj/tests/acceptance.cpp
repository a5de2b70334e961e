// Acceptance runner: one PASS/FAIL line per criterion.
//
//   ets_acceptance [--known-unattainable N,...] [--output FILE]
//
// Criteria listed as known-unattainable still print FAIL when they fail but
// do not affect the exit status.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "ets/backend.hpp"
#include "ets/engine.hpp"
#include "ets/metrics.hpp"
#include "ets/pruner.hpp"
#include "ets/rebase.hpp"
#include "ets/report.hpp"
#include "ets/semantics.hpp"
#include "ets/simenv.hpp"
#include "support.hpp"

using namespace ets;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::set<std::uint32_t> as_set(const std::vector<NodeId>& v) {
  std::set<std::uint32_t> s;
  for (NodeId n : v) s.insert(index_of(n));
  return s;
}

Outcome solver_correctness() {
  std::mt19937_64 rng(20240601);
  const auto start = Clock::now();
  int mismatches = 0;
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    const double lb = std::uniform_real_distribution<double>(0.0, 3.0)(rng);
    const double ld = std::bernoulli_distribution(0.5)(rng) ? 1.0 : 0.0;
    auto inst = oracle::random_instance(rng, 12, 4, lb, ld);
    auto got = solve(inst);
    auto ref = brute_force(inst);
    auto independent = oracle::exhaustive(inst);
    const double delta = std::abs(got.objective_value - ref.objective_value);
    worst = std::max(worst, delta);
    if (got.retained_leaves != ref.retained_leaves || delta > 1e-9 || as_set(got.retained_leaves) != independent.leaves ||
        std::abs(got.objective_value - independent.eval.value) > 1e-9)
      ++mismatches;
  }
  const double elapsed = seconds_since(start);
  return {mismatches == 0 && elapsed < 10.0,
          fmt("200 instances, %d mismatches, max |dobj| %.2e, %.2f s", mismatches, worst, elapsed)};
}

PruneInstance three_leaf(double lambda_b, double lambda_d, bool two_clusters) {
  auto id = make_node_id;
  PruneInstance inst;
  inst.internal_nodes = {id(0), id(1), id(2)};
  inst.leaves = {{id(3), 3.0, {id(0), id(1)}, 0},
                 {id(4), 1.0, {id(0), id(1)}, two_clusters ? 1 : 0},
                 {id(5), 2.0, {id(0), id(2)}, 0}};
  inst.cluster_count = two_clusters ? 2 : 1;
  inst.lambda_b = lambda_b;
  inst.lambda_d = lambda_d;
  return inst;
}

Outcome worked_examples() {
  auto budget = solve(three_leaf(1.5, 0.0, false));
  auto coverage = solve(three_leaf(1.5, 1.0, true));
  auto ref_budget = oracle::exhaustive(three_leaf(1.5, 0.0, false));
  auto ref_coverage = oracle::exhaustive(three_leaf(1.5, 1.0, true));
  const bool ok = as_set(budget.retained_leaves) == std::set<std::uint32_t>{3} &&
                  std::abs(budget.objective_value + 0.25) <= 1e-9 &&
                  as_set(coverage.retained_leaves) == std::set<std::uint32_t>{3, 4} &&
                  std::abs(coverage.objective_value - 2.0 / 3.0) <= 1e-9 && ref_budget.leaves == std::set<std::uint32_t>{3} &&
                  ref_coverage.leaves == std::set<std::uint32_t>{3, 4};
  return {ok, fmt("{a1} at %.4f, {a1,a2} at %.4f", budget.objective_value, coverage.objective_value)};
}

Outcome monotonicity() {
  std::mt19937_64 rng(77);
  int violations = 0;
  for (int i = 0; i < 100; ++i) {
    const double ld = i % 2 ? 1.0 : 0.5;
    auto inst = oracle::random_instance(rng, 12, 4, 0.0, ld);
    int prev = 1 << 30;
    for (double lb : {0.0, 0.5, 1.0, 1.5, 2.0, 3.0}) {
      inst.lambda_b = lb;
      const int n = solve(inst).nodes_retained;
      if (n > prev) ++violations;
      prev = n;
    }
    inst.lambda_b = 1.0;
    int covered = -1;
    for (double d : {0.0, 0.5, 1.0, 2.0}) {
      inst.lambda_d = d;
      const int c = solve(inst).clusters_covered;
      if (c < covered) ++violations;
      covered = c;
    }
  }
  return {violations == 0, fmt("100 instances, %d violations", violations)};
}

Outcome conservation() {
  std::mt19937_64 rng(4242);
  int broken = 0, mismatched = 0;
  for (int i = 0; i < 1000; ++i) {
    const int n = std::uniform_int_distribution<int>(1, 64)(rng);
    const int budget = std::uniform_int_distribution<int>(1, 256)(rng);
    const double t = std::uniform_real_distribution<double>(0.01, 2.0)(rng);
    std::vector<ScoredLeaf> leaves;
    std::vector<std::pair<std::uint32_t, double>> ref;
    for (int k = 0; k < n; ++k) {
      const double r = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
      leaves.push_back({make_node_id(static_cast<std::uint32_t>(k)), r});
      ref.emplace_back(static_cast<std::uint32_t>(k), r);
    }
    auto a = i % 2 ? allocate(leaves, budget, t) : reallocate(leaves, budget, t);
    if (a.total() != budget) ++broken;
    for (const auto& [id, w] : oracle::rebase(ref, budget, t))
      if (a.weight_of(make_node_id(id)) != w) {
        ++mismatched;
        break;
      }
  }
  std::vector<ScoredLeaf> distinct{{make_node_id(0), 0.2}, {make_node_id(1), 0.9}, {make_node_id(2), 0.89}};
  auto limit = allocate(distinct, 64, 1e-6);
  const bool argmax = limit.weight_of(make_node_id(1)) == 64;
  return {broken == 0 && mismatched == 0 && argmax,
          fmt("1000 instances, %d sum violations, %d reference mismatches, T=1e-6 argmax %s", broken, mismatched,
              argmax ? "yes" : "no")};
}

Outcome clustering_recovery() {
  SimEnv env(SimConfig{});
  std::mt19937_64 rng(606);
  double total = 0.0;
  bool invariant = true;
  for (int batch = 0; batch < 100; ++batch) {
    const int d = batch % env.config().depth;
    std::vector<std::vector<double>> raw;
    std::vector<int> truth;
    for (int i = 0; i < 32; ++i) {
      const int m = std::uniform_int_distribution<int>(0, env.config().moves_per_depth - 1)(rng);
      const int v = std::uniform_int_distribution<int>(0, env.config().variants_per_move - 1)(rng);
      raw.push_back(env.embed(fmt("d%d:m%d:v%d", d, m, v)));
      truth.push_back(m);
    }
    std::vector<Embedding> pts(raw.begin(), raw.end());
    auto labels = agglomerative_cluster(pts, 0.3).labels;
    total += rand_index(labels, truth);

    std::vector<int> order(pts.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<Embedding> shuffled;
    for (int i : order) shuffled.push_back(pts[static_cast<std::size_t>(i)]);
    auto got = agglomerative_cluster(shuffled, 0.3).labels;
    std::vector<int> back(pts.size());
    for (std::size_t i = 0; i < order.size(); ++i) back[static_cast<std::size_t>(order[i])] = got[i];
    if (rand_index(back, labels) != 1.0) invariant = false;
  }
  const double mean = total / 100.0;
  return {mean >= 0.95 && invariant,
          fmt("mean Rand index %.4f over 100 batches, permutation invariance %s", mean, invariant ? "exact" : "broken")};
}

SearchConfig search_config(Method m, double lambda_b, double lambda_d, int keep_k) {
  SearchConfig c;
  c.policy.method = m;
  c.policy.width = 64;
  c.policy.lambda_b = lambda_b;
  c.policy.lambda_d = lambda_d;
  c.policy.keep_k = KeepK{false, keep_k};
  c.seed = 1;
  return c;
}

struct Run {
  std::string label;
  SuiteResult suite;
};

bool overhead_reported(const Run& r) {
  auto doc = timing_document(r.label, r.suite, 1.0);
  return doc.contains("overhead_fraction") && doc["overhead_fraction"].is_number();
}

Outcome fig3_reproduction(std::vector<Run>& runs) {
  SimBackend sim(SimConfig{});
  Providers p{&sim, &sim, &sim};
  const auto problems = sim_problems(sim.env(), 1, 500);
  const auto start = Clock::now();
  const int threads = std::max(1u, std::thread::hardware_concurrency());
  runs.push_back({"rebase", run_suite(problems, search_config(Method::rebase, 1, 1, 4), p, threads)});
  runs.push_back({"beam(keep-4)", run_suite(problems, search_config(Method::beam, 1, 1, 4), p, threads)});
  runs.push_back({"ets(1,1)", run_suite(problems, search_config(Method::ets, 1, 1, 4), p, threads)});
  runs.push_back({"ets(1,0)", run_suite(problems, search_config(Method::ets, 1, 0, 4), p, threads)});
  const double elapsed = seconds_since(start);

  const auto& rebase = runs[0].suite.summary;
  const auto& beam = runs[1].suite.summary;
  const auto& ets = runs[2].suite.summary;
  const auto& ablation = runs[3].suite.summary;
  const double reduction = rebase.mean_cumulative_kv / ets.mean_cumulative_kv;
  const double drop_full = (rebase.accuracy - ets.accuracy) * 100.0;
  const double drop_ablation = (rebase.accuracy - ablation.accuracy) * 100.0;
  const bool a = rebase.accuracy > beam.accuracy;
  const bool b = reduction >= 1.2;
  const bool c = std::abs(drop_full) <= 2.0;
  const bool d = drop_ablation > drop_full;
  const bool time_ok = elapsed < 300.0;
  std::string detail = fmt(
      "acc rebase %.3f beam %.3f ets %.3f ets(lambda_d=0) %.3f | (a) %s (b) KV reduction %.3f %s (c) drop %.1f pts %s "
      "(d) ablation drop %.1f pts %s | %.1f s",
      rebase.accuracy, beam.accuracy, ets.accuracy, ablation.accuracy, a ? "ok" : "no", reduction, b ? "ok" : "no",
      drop_full, c ? "ok" : "no", drop_ablation, d ? "ok" : "no", elapsed);
  return {a && b && c && d && time_ok, detail};
}

Outcome determinism() {
  SimBackend sim(SimConfig{});
  Providers p{&sim, &sim, &sim};
  const auto problems = sim_problems(sim.env(), 17, 100);
  auto cfg = search_config(Method::ets, 1, 1, 4);
  const std::string one = results_jsonl(run_suite(problems, cfg, p, 1));
  const std::string eight = results_jsonl(run_suite(problems, cfg, p, 8));
  return {one == eight, fmt("100 problems, sha256 %s vs %s", sha256_hex(one).substr(0, 16).c_str(),
                            sha256_hex(eight).substr(0, 16).c_str())};
}

Outcome transport_transparency() {
  SimConfig sc;
  SimBackend direct(sc);
  MockServer server(sc);
  server.start();
  HttpBackendConfig hc;
  hc.generate_url = hc.score_url = hc.embed_url = server.base_url();
  HttpBackend http(hc);
  const auto problems = sim_problems(direct.env(), 23, 50);
  auto cfg = search_config(Method::ets, 1, 1, 4);
  cfg.policy.width = 16;
  const std::string a = results_jsonl(run_suite(problems, cfg, Providers{&direct, &direct, &direct}, 4));
  const std::string b = results_jsonl(run_suite(problems, cfg, Providers{&http, &http, &http}, 4));
  server.stop();
  const bool errors_free = a.find("\"error\"") == std::string::npos;
  return {a == b && errors_free, fmt("50 problems, direct %s vs http %s", sha256_hex(a).substr(0, 16).c_str(),
                                     sha256_hex(b).substr(0, 16).c_str())};
}

Outcome overhead(const std::vector<Run>& runs) {
  SearchMetrics m;
  m.solver_time = std::chrono::seconds(1);
  m.cluster_time = std::chrono::seconds(1);
  m.generation_time = std::chrono::seconds(98);
  const double fixture = overhead_fraction(m);
  bool reported = !runs.empty();
  std::string values;
  for (const auto& r : runs) {
    reported = reported && overhead_reported(r);
    values += fmt(" %s=%.4f", r.label.c_str(), overhead_fraction(r.suite.summary.totals));
  }
  return {std::abs(fixture - 0.02) <= 1e-12 && reported, fmt("fixture %.4f; measured%s", fixture, values.c_str())};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria runner"};
  std::vector<int> known;
  std::string output;
  app.add_option("--known-unattainable", known, "Criteria whose failure does not fail the run")->delimiter(',');
  app.add_option("--output", output, "Also write the report to this file");
  CLI11_PARSE(app, argc, argv);

  std::ostringstream report;
  int hard_failures = 0;
  auto emit = [&](int n, const char* name, const Outcome& o) {
    const bool excused = !o.pass && std::find(known.begin(), known.end(), n) != known.end();
    const std::string line = fmt("[%s] %d %s: %s%s", o.pass ? "PASS" : "FAIL", n, name, o.detail.c_str(),
                                 excused ? " (known unattainable)" : "");
    std::cout << line << std::endl;
    report << line << "\n";
    if (!o.pass && !excused) ++hard_failures;
  };

  std::vector<Run> runs;
  emit(1, "solver matches brute force", solver_correctness());
  emit(2, "worked examples", worked_examples());
  emit(3, "lambda monotonicity", monotonicity());
  emit(4, "rebase conservation", conservation());
  emit(5, "qualitative tradeoff at width 64", fig3_reproduction(runs));
  emit(6, "clustering recovery", clustering_recovery());
  emit(7, "determinism across parallelism", determinism());
  emit(8, "transport transparency", transport_transparency());
  emit(9, "overhead accounting", overhead(runs));

  if (!output.empty()) std::ofstream(output) << report.str();
  return hard_failures == 0 ? 0 : 1;
}
