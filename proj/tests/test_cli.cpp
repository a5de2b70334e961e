#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "ets/cli.hpp"
#include "ets/config.hpp"
#include "ets/report.hpp"

using namespace ets;
namespace fs = std::filesystem;

namespace {

struct Invocation {
  int code = -1;
  std::string out, err;
};

Invocation cli(std::vector<std::string> args) {
  args.insert(args.begin(), "ets");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Invocation inv;
  inv.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  inv.out = out.str();
  inv.err = err.str();
  return inv;
}

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("ets-cli-test-" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST_CASE("config merging and overrides") {
  auto merged = merge_config(nlohmann::json{{"policy", {{"width", 16}}}});
  CHECK(merged["policy"]["width"] == 16);
  CHECK(merged["sim"]["depth"] == 6);
  CHECK_THROWS_AS(merge_config(nlohmann::json{{"policy", {{"widht", 16}}}}), ConfigError);
  CHECK_THROWS_AS(merge_config(nlohmann::json{{"polcy", nlohmann::json::object()}}), ConfigError);
  CHECK_THROWS_AS(merge_config(nlohmann::json{{"policy", {{"width", "wide"}}}}), ConfigError);

  apply_override(merged, "policy.lambda_b", "1.5");
  apply_override(merged, "sim.reward_noise", "0");
  apply_override(merged, "compare.widths", "16,64");
  CHECK(merged["policy"]["lambda_b"] == 1.5);
  CHECK(merged["compare"]["widths"] == nlohmann::json{16, 64});
  CHECK_THROWS_AS(apply_override(merged, "policy.width", "abc"), ConfigError);
  CHECK_THROWS_AS(apply_override(merged, "policy.nope", "1"), ConfigError);

  auto cfg = config_from_json(merged);
  CHECK(cfg.policy.lambda_b == 1.5);
  CHECK(cfg.search.policy.lambda_b == 1.5);
  CHECK(cfg.sim.reward_noise == 0.0);

  apply_override(merged, "policy.lambda_b", "-1");
  CHECK_THROWS_AS(config_from_json(merged), ConfigError);
}

TEST_CASE("method specs") {
  auto merged = apply_method_spec(merge_config(nlohmann::json::object()), "ets:lambda_d=0:lambda_b=2");
  CHECK(merged["policy"]["method"] == "ets");
  CHECK(merged["policy"]["lambda_d"] == 0.0);
  CHECK(merged["policy"]["lambda_b"] == 2.0);
  CHECK_THROWS_AS(apply_method_spec(merged, "beam:keep_k"), ConfigError);
}

TEST_CASE("config file syntax errors carry a position") {
  fs::path dir = scratch("syntax");
  std::ofstream(dir / "bad.json") << "{\n  \"policy\": {\"width\": 4,}\n}\n";
  try {
    load_config_file(dir / "bad.json");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  auto inv = cli({"run", "--config", (dir / "bad.json").string(), "--out", (dir / "o").string()});
  CHECK(inv.code == 2);
}

TEST_CASE("usage errors exit with 2") {
  fs::path dir = scratch("usage");
  CHECK(cli({"run", "--lambda-b", "-1", "--out", dir.string()}).code == 2);
  CHECK(cli({"run", "--policy.width", "abc", "--out", dir.string()}).code == 2);
  CHECK(cli({"run", "--method", "mcts", "--out", dir.string()}).code == 2);
  CHECK(cli({"frobnicate"}).code == 2);
  CHECK(cli({}).code == 2);
}

TEST_CASE("run writes deterministic outputs") {
  fs::path a = scratch("run-a"), b = scratch("run-b");
  std::vector<std::string> common{"run", "--method", "ets", "--width", "16", "--lambda-b", "1", "--seed", "7",
                                  "--problems", "6", "--parallelism", "2"};
  auto args_a = common, args_b = common;
  args_a.insert(args_a.end(), {"--out", a.string()});
  args_b.insert(args_b.end(), {"--out", b.string()});
  auto ra = cli(args_a), rb = cli(args_b);
  REQUIRE(ra.code == 0);
  REQUIRE(rb.code == 0);
  for (const char* f : {"results.jsonl", "summary.csv", "config.json", "timing.json"}) CHECK(fs::exists(a / f));
  CHECK(slurp(a / "results.jsonl") == slurp(b / "results.jsonl"));
  CHECK(slurp(a / "summary.csv") == slurp(b / "summary.csv"));
  CHECK(lines(slurp(a / "results.jsonl")).size() == 6);
  const std::string digest = sha256_hex(slurp(a / "results.jsonl"));
  CHECK(ra.out.find(digest) != std::string::npos);
  CHECK(ra.out.find("overhead_fraction=") != std::string::npos);
}

TEST_CASE("sqrt beam keeps sixteen leaves at width 256") {
  fs::path dir = scratch("beam");
  auto inv = cli({"run", "--method", "beam", "--keep-k", "sqrt", "--width", "256", "--problems", "2", "--trace",
                  "--out", dir.string()});
  REQUIRE(inv.code == 0);
  for (const auto& line : lines(slurp(dir / "results.jsonl"))) {
    auto steps = nlohmann::json::parse(line)["trace"]["steps"];
    REQUIRE(steps.size() > 1);
    CHECK(steps[0]["retained"] == 16);
  }
}

TEST_CASE("compare emits one row per method and width") {
  fs::path dir = scratch("compare");
  auto inv = cli({"compare", "--compare.methods", "rebase,ets", "--compare.widths", "8,16", "--problems", "4",
                  "--out", dir.string()});
  REQUIRE(inv.code == 0);
  auto rows = lines(slurp(dir / "compare.csv"));
  CHECK(rows.size() == 5);

  fs::path same = scratch("compare-same");
  inv = cli({"compare", "--compare.methods", "rebase,rebase:rebase_temperature=0.2", "--compare.widths", "8",
             "--problems", "4", "--out", same.string()});
  REQUIRE(inv.code == 0);
  auto body = lines(slurp(same / "compare.csv"));
  REQUIRE(body.size() == 3);
  CHECK(body[2].substr(body[2].rfind(',') + 1) == "1.000000");

  CHECK(cli({"compare", "--compare.methods", "ets", "--out", same.string()}).code == 2);
}

TEST_CASE("lambda selection follows the tolerance rule") {
  // Baseline 80.0%: deltas 0.1, 0.2, 0.3 and 0.15 points.
  std::vector<SweepPoint> points{{1.0, 0.799, 100}, {1.5, 0.798, 90}, {2.0, 0.797, 80}, {3.0, 0.7985, 70}};
  auto sel = select_lambda_b(points, 0.800, 0.2);
  REQUIRE(sel.selected);
  CHECK(points[*sel.selected].lambda_b == 3.0);
  CHECK(sel.delta_points[2] == doctest::Approx(0.3));
  points.pop_back();
  sel = select_lambda_b(points, 0.800, 0.2);
  REQUIRE(sel.selected);
  CHECK(points[*sel.selected].lambda_b == 1.5);
  CHECK_FALSE(select_lambda_b(points, 0.810, 0.2).selected);
  auto csv = sweep_csv(points, sel, 0.8, 120);
  CHECK(lines(csv).size() == 5);
  CHECK(csv.find('*') != std::string::npos);
}

TEST_CASE("sweep runs the grid and marks a selection") {
  fs::path dir = scratch("sweep");
  auto inv = cli({"sweep", "--sweep.lambda_b", "1,1.5,2", "--width", "8", "--problems", "4", "--out", dir.string()});
  REQUIRE(inv.code == 0);
  CHECK(lines(slurp(dir / "sweep.csv")).size() == 5);
  CHECK(inv.out.find("selected lambda_b:") != std::string::npos);

  // A perfect stored baseline against a sampler that rarely picks gold moves.
  std::ofstream(dir / "baseline.csv") << "label,accuracy,mean_cumulative_kv_tokens\nref,1.0,1000\n";
  auto none = cli({"sweep", "--sweep.lambda_b", "1", "--sweep.baseline", (dir / "baseline.csv").string(),
                   "--sim.p_good", "0.05", "--width", "8", "--problems", "4", "--out", dir.string()});
  CHECK(none.code == 0);
  CHECK(none.out.find("selected lambda_b: none") != std::string::npos);
  CHECK_FALSE(none.err.empty());

  CHECK(cli({"sweep", "--sweep.baseline", (dir / "missing.csv").string(), "--out", dir.string()}).code == 2);
  CHECK(cli({"sweep", "--sweep.lambda_b", "[]", "--out", dir.string()}).code == 2);
}

TEST_CASE("report summarises existing results") {
  fs::path dir = scratch("report");
  REQUIRE(cli({"run", "--method", "rebase", "--width", "8", "--problems", "3", "--out", dir.string()}).code == 0);
  auto inv = cli({"report", "--in", dir.string()});
  CHECK(inv.code == 0);
  CHECK(inv.out.find("results.jsonl") != std::string::npos);
  CHECK(fs::exists(dir / "report.csv"));
  auto s = summarize_jsonl(dir / "results.jsonl");
  CHECK(s.problems == 3);
  CHECK(s.digest == sha256_hex(slurp(dir / "results.jsonl")));
}

TEST_CASE("sha256") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
