#include "ets/engine.hpp"

#include <algorithm>
#include <atomic>
#include <map>
#include <thread>

#include "ets/errors.hpp"
#include "ets/rng.hpp"

namespace ets {

namespace {

using Clock = std::chrono::steady_clock;

struct Expansion {
  NodeId parent{};
  GeneratedStep step;
};

struct PendingLeaf {
  NodeId id{};
  int weight = 0;
};

}  // namespace

void SearchConfig::validate() const {
  policy.validate();
  if (max_depth < 1) throw InvalidArgument("search: max_depth must be >= 1");
  if (!(kv_bytes_per_token > 0.0)) throw InvalidArgument("search: kv_bytes_per_token must be > 0");
}

void to_json(nlohmann::json& j, const SearchConfig& c) {
  j = {{"max_depth", c.max_depth},
       {"seed", c.seed},
       {"backend", c.backend == BackendKind::sim ? "sim" : "http"},
       {"kv_bytes_per_token", c.kv_bytes_per_token},
       {"include_prompt_kv", c.include_prompt_kv},
       {"trace", c.trace},
       {"stop", c.stop}};
}

void from_json(const nlohmann::json& j, SearchConfig& c) {
  SearchConfig d;
  c.max_depth = j.value("max_depth", d.max_depth);
  c.seed = j.value("seed", d.seed);
  const std::string backend = j.value("backend", std::string("sim"));
  if (backend != "sim" && backend != "http") throw InvalidArgument("search: backend must be 'sim' or 'http'");
  c.backend = backend == "sim" ? BackendKind::sim : BackendKind::http;
  c.kv_bytes_per_token = j.value("kv_bytes_per_token", d.kv_bytes_per_token);
  c.include_prompt_kv = j.value("include_prompt_kv", d.include_prompt_kv);
  c.trace = j.value("trace", d.trace);
  c.stop = j.value("stop", d.stop);
}

std::optional<std::string> aggregate(const std::vector<CompletedTrajectory>& completed) {
  if (completed.empty()) return std::nullopt;
  std::map<std::string, double> votes;
  for (const auto& c : completed) votes[c.answer] += c.reward;
  auto best = votes.begin();
  for (auto it = votes.begin(); it != votes.end(); ++it)
    if (it->second > best->second) best = it;
  return best->first;
}

ProblemResult run_problem(const Problem& problem, const SearchConfig& cfg, const Providers& providers) {
  cfg.validate();
  if (!providers.generator || !providers.reward || !providers.embedder)
    throw InvalidArgument("run_problem: all three providers are required");

  ProblemResult result;
  result.problem_id = problem.id;
  SearchMetrics& metrics = result.metrics;
  nlohmann::json trace_steps = nlohmann::json::array();

  SearchTree tree(problem.prompt, problem.prompt_tokens);
  const PolicyConfig& policy = cfg.policy;
  int width = policy.width;

  // DVTS: first steps are dealt to subtrees in contiguous even blocks.
  const int subtrees = policy.method == Method::dvts ? policy.keep_k.resolve(policy.width) : 1;
  std::vector<int> subtree_of{-1};

  std::vector<PendingLeaf> pending{{tree.root(), width}};
  try {
    for (int step = 0;; ++step) {
      // Expand.
      std::vector<Expansion> fresh;
      auto t0 = Clock::now();
      for (const auto& p : pending) {
        GenerationRequest req;
        req.prompt = problem.prompt;
        req.steps = tree.step_texts(p.id);
        req.n = p.weight;
        req.temperature = policy.sampling_temperature;
        req.stop = cfg.stop;
        req.seed = derive_seed({problem.seed, static_cast<std::uint64_t>(step), index_of(p.id)});
        GenerationResponse resp = providers.generator->generate(req);
        for (auto& s : resp.steps) fresh.push_back({p.id, std::move(s)});
      }
      auto t1 = Clock::now();
      metrics.generation_time += t1 - t0;
      if (fresh.empty()) break;

      // Score all new trajectories in one call.
      RewardRequest rreq;
      rreq.prompt = problem.prompt;
      for (const auto& e : fresh) {
        auto texts = tree.step_texts(e.parent);
        texts.push_back(e.step.text);
        rreq.trajectories.push_back(std::move(texts));
      }
      RewardResponse rresp = providers.reward->score(rreq);
      metrics.reward_time += Clock::now() - t1;
      metrics.reward_calls += static_cast<std::int64_t>(rreq.trajectories.size());
      if (rresp.rewards.size() != fresh.size())
        throw SchemaError("score: reward count does not match request");

      std::int64_t new_tokens = 0;
      std::vector<std::pair<NodeId, std::size_t>> terminals;
      for (std::size_t i = 0; i < fresh.size(); ++i) {
        const auto& e = fresh[i];
        const double r = rresp.rewards[i];
        if (!(r >= 0.0 && r <= 1.0)) throw RewardRangeError("reward " + std::to_string(r) + " outside [0,1]");
        NodeId child = tree.add_child(e.parent, e.step.text, e.step.token_count, r);
        new_tokens += e.step.token_count;
        if (subtree_of.size() <= index_of(child)) subtree_of.resize(index_of(child) + 1, -1);
        if (e.parent == tree.root()) {
          // i-th first step goes to the block holding position i.
          const int n = static_cast<int>(fresh.size());
          int s = 0, start = 0;
          while (s < subtrees - 1 && static_cast<int>(i) >= start + n / subtrees + (s < n % subtrees ? 1 : 0)) {
            start += n / subtrees + (s < n % subtrees ? 1 : 0);
            ++s;
          }
          subtree_of[index_of(child)] = s;
        } else {
          subtree_of[index_of(child)] = subtree_of[index_of(e.parent)];
        }
        if (e.step.terminal) terminals.emplace_back(child, i);
      }
      metrics.record_step(tree, new_tokens, static_cast<std::int64_t>(fresh.size()), cfg.include_prompt_kv);

      nlohmann::json trace_step;
      if (cfg.trace)
        trace_step = {{"step", step}, {"expanded", fresh.size()}, {"kv_tokens", metrics.per_step_kv_tokens.back()}};

      // Retire completed trajectories.
      for (const auto& [id, i] : terminals) {
        tree.mark_completed(id);
        const auto& s = fresh[i].step;
        result.completed.push_back({s.answer ? *s.answer : s.text, rresp.rewards[i]});
        --width;
      }
      const int depth = step + 1;
      if (cfg.trace) {
        trace_step["completed"] = terminals.size();
        trace_step["width"] = width;
      }
      auto active = tree.active_leaves();
      if (width <= 0 || depth >= cfg.max_depth || active.empty()) {
        if (cfg.trace) trace_steps.push_back(std::move(trace_step));
        break;
      }

      // Select.
      WeightAllocation alloc;
      switch (policy.method) {
        case Method::beam:
        case Method::rebase: {
          std::vector<ScoredLeaf> leaves;
          for (NodeId id : active) leaves.push_back({id, tree.node(id).reward});
          alloc = policy.method == Method::beam ? beam_select(leaves, policy, width)
                                                : rebase_select(leaves, policy, width);
          break;
        }
        case Method::dvts: {
          std::vector<SubtreeLeaf> leaves;
          for (NodeId id : active) leaves.push_back({id, tree.node(id).reward, subtree_of[index_of(id)]});
          alloc = dvts_select(leaves, policy, width);
          break;
        }
        case Method::ets: {
          std::vector<CandidateLeaf> leaves;
          for (NodeId id : active) leaves.push_back({id, tree.node(id).reward, tree.node(id).text});
          EtsSelection sel = ets_select(tree, leaves, policy, width, *providers.embedder);
          metrics.embed_time += sel.embed_time;
          metrics.cluster_time += sel.cluster_time;
          metrics.embed_calls += sel.embed_calls;
          metrics.solver_time += sel.decision.solve_time;
          metrics.solves += 1;
          if (!sel.decision.optimal) metrics.solves_nonoptimal += 1;
          if (cfg.trace) {
            trace_step["clusters"] = sel.clusters.cluster_count;
            trace_step["decision"] = to_json(sel.decision);
            trace_step["decision"].erase("search_nodes");
          }
          alloc = std::move(sel.allocation);
          break;
        }
      }

      std::vector<NodeId> keep = alloc.positive();
      const std::size_t pruned = tree.prune_to(keep);
      pending.clear();
      for (NodeId id : keep) pending.push_back({id, alloc.weight_of(id)});
      if (cfg.trace) {
        trace_step["retained"] = keep.size();
        trace_step["pruned_nodes"] = pruned;
        trace_steps.push_back(std::move(trace_step));
      }
    }
  } catch (const BackendError& e) {
    result.error = ProblemError{e.kind(), e.what()};
  } catch (const std::exception& e) {
    result.error = ProblemError{"internal", e.what()};
  }

  if (!result.error) {
    if (auto answer = aggregate(result.completed)) {
      result.final_answer = *answer;
      result.answered = true;
    }
  }
  if (problem.check) result.correct = result.answered && problem.check(result.final_answer);
  if (cfg.trace) result.trace = nlohmann::json{{"steps", std::move(trace_steps)}, {"tree", tree.to_json()}};
  return result;
}

nlohmann::json to_json(const ProblemResult& r) {
  nlohmann::json completed = nlohmann::json::array();
  for (const auto& c : r.completed) completed.push_back({{"answer", c.answer}, {"reward", c.reward}});
  nlohmann::json j = {{"problem", r.problem_id},
                      {"final_answer", r.answered ? nlohmann::json(r.final_answer) : nlohmann::json()},
                      {"answered", r.answered},
                      {"correct", r.correct ? nlohmann::json(*r.correct) : nlohmann::json()},
                      {"completed", std::move(completed)},
                      {"metrics", to_json(r.metrics)}};
  if (r.error) j["error"] = {{"kind", r.error->kind}, {"message", r.error->message}};
  if (r.trace) j["trace"] = *r.trace;
  return j;
}

nlohmann::json timing_json(const ProblemResult& r) {
  nlohmann::json j = timing_json(r.metrics);
  j["problem"] = r.problem_id;
  return j;
}

SuiteSummary summarize(const std::vector<ProblemResult>& results) {
  SuiteSummary s;
  s.problems = results.size();
  for (const auto& r : results) {
    if (r.correct.value_or(false)) ++s.correct;
    if (r.answered) ++s.answered;
    if (r.error) ++s.errors;
    s.totals.accumulate(r.metrics);
  }
  if (s.problems > 0) {
    const double n = static_cast<double>(s.problems);
    s.accuracy = static_cast<double>(s.correct) / n;
    s.mean_cumulative_kv = static_cast<double>(s.totals.cumulative_kv_tokens) / n;
    s.mean_generated_tokens = static_cast<double>(s.totals.generated_tokens) / n;
    s.mean_model_calls = static_cast<double>(s.totals.model_calls) / n;
  }
  return s;
}

SuiteResult run_suite(const std::vector<Problem>& problems, const SearchConfig& cfg,
                      const Providers& providers, int parallelism) {
  if (parallelism < 1) throw InvalidArgument("run_suite: parallelism must be >= 1");
  cfg.validate();
  SuiteResult out;
  out.results.resize(problems.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < problems.size(); i = next++) {
      try {
        out.results[i] = run_problem(problems[i], cfg, providers);
      } catch (const std::exception& e) {
        out.results[i].problem_id = problems[i].id;
        out.results[i].error = ProblemError{"internal", e.what()};
        if (problems[i].check) out.results[i].correct = false;
      }
    }
  };
  const auto threads = std::min<std::size_t>(static_cast<std::size_t>(parallelism), problems.size());
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  out.summary = summarize(out.results);
  return out;
}

std::vector<Problem> sim_problems(const SimEnv& env, std::uint64_t suite_seed, std::size_t count) {
  std::vector<Problem> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    SimProblem sp = env.problem_at(suite_seed, i);
    Problem p;
    p.id = "sim-" + std::to_string(suite_seed) + "-" + std::to_string(i);
    p.prompt = sp.prompt();
    p.prompt_tokens = env.config().prompt_tokens;
    p.seed = sp.seed;
    p.check = [&env, sp](const std::string& answer) { return env.check_answer(sp, answer); };
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace ets
