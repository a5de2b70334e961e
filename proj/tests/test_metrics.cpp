#include "doctest.h"
#include "ets/errors.hpp"
#include "ets/metrics.hpp"

using namespace ets;
using namespace std::chrono_literals;

TEST_CASE("per-step samples on a single chain") {
  SearchTree t("p", 25);
  SearchMetrics m;
  NodeId cur = t.root();
  for (int i = 0; i < 3; ++i) {
    cur = t.add_child(cur, "s", 10, 0.5);
    m.record_step(t, 10, 1);
  }
  CHECK(m.per_step_kv_tokens == std::vector<std::int64_t>{35, 45, 55});
  CHECK(m.cumulative_kv_tokens == 135);
  CHECK(m.generated_tokens == 30);
  CHECK(m.model_calls == 3);
  CHECK(m.peak_kv_tokens() == 55);
  CHECK(m.mean_kv_tokens() == doctest::Approx(45.0));
}

TEST_CASE("prompt can be left out of the samples") {
  SearchTree t("p", 25);
  SearchMetrics m;
  t.add_child(t.root(), "s", 10, 0.5);
  m.record_step(t, 10, 1, false);
  CHECK(m.per_step_kv_tokens == std::vector<std::int64_t>{10});
}

TEST_CASE("kv reduction") {
  SearchMetrics a, b;
  a.cumulative_kv_tokens = 1000;
  b.cumulative_kv_tokens = 1000;
  CHECK(kv_reduction(a, b) == 1.0);
  b.cumulative_kv_tokens = 500;
  CHECK(kv_reduction(a, b) == 2.0);
  b.cumulative_kv_tokens = 0;
  CHECK_THROWS_AS(kv_reduction(a, b), InvalidArgument);
}

TEST_CASE("overhead fraction") {
  SearchMetrics m;
  CHECK(overhead_fraction(m) == 0.0);
  m.generation_time = 98s;
  CHECK(overhead_fraction(m) == 0.0);
  m.solver_time = 1s;
  m.cluster_time = 1s;
  CHECK(overhead_fraction(m) == doctest::Approx(0.02).epsilon(1e-12));
  CHECK(timing_json(m)["overhead_fraction"].get<double>() == doctest::Approx(0.02));
}

TEST_CASE("accumulate and cumulative invariant") {
  SearchMetrics a, b;
  a.per_step_kv_tokens = {3, 4};
  a.cumulative_kv_tokens = 7;
  a.model_calls = 2;
  b.cumulative_kv_tokens = 5;
  b.model_calls = 1;
  b.solver_time = 2s;
  a.accumulate(b);
  CHECK(a.cumulative_kv_tokens == 12);
  CHECK(a.model_calls == 3);
  CHECK(a.solver_time == 2s);
  CHECK(a.per_step_kv_tokens.size() == 2);
}

TEST_CASE("deterministic json omits timings") {
  SearchMetrics m;
  m.solver_time = 5s;
  auto j = to_json(m);
  CHECK_FALSE(j.contains("solver_s"));
  CHECK(j.contains("cumulative_kv_tokens"));
}
