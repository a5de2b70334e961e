#include "ets/backend.hpp"

#include <cstdlib>
#include <random>

#include "ets/errors.hpp"

namespace ets {

using nlohmann::json;

namespace {

const json& require(const json& j, const char* key, json::value_t type, const char* what) {
  if (!j.is_object()) throw SchemaError(std::string(what) + ": body is not an object");
  auto it = j.find(key);
  if (it == j.end()) throw SchemaError(std::string(what) + ": missing field '" + key + "'");
  bool ok = it->type() == type;
  // Integers are acceptable wherever a number is expected.
  if (type == json::value_t::number_float) ok = it->is_number();
  if (type == json::value_t::number_unsigned) ok = it->is_number_unsigned();
  if (type == json::value_t::number_integer) ok = it->is_number_integer();
  if (!ok) throw SchemaError(std::string(what) + ": field '" + key + "' has wrong type");
  return *it;
}

std::vector<std::string> string_list(const json& j, const char* what) {
  if (!j.is_array()) throw SchemaError(std::string(what) + ": expected array of strings");
  std::vector<std::string> out;
  out.reserve(j.size());
  for (const auto& e : j) {
    if (!e.is_string()) throw SchemaError(std::string(what) + ": expected array of strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

}  // namespace

json to_wire(const GenerationRequest& r) {
  return {{"prompt", r.prompt}, {"steps", r.steps},      {"n", r.n},
          {"temperature", r.temperature}, {"stop", r.stop}, {"seed", r.seed}};
}

json to_wire(const GenerationResponse& r) {
  json steps = json::array();
  for (const auto& s : r.steps) {
    json e = {{"text", s.text}, {"tokens", s.token_count}, {"terminal", s.terminal}};
    if (s.answer) e["answer"] = *s.answer;
    steps.push_back(std::move(e));
  }
  return {{"steps", std::move(steps)}};
}

json to_wire(const RewardRequest& r) { return {{"prompt", r.prompt}, {"trajectories", r.trajectories}}; }
json to_wire(const RewardResponse& r) { return {{"rewards", r.rewards}}; }
json to_wire(const EmbedRequest& r) { return {{"texts", r.texts}}; }
json to_wire(const EmbedResponse& r) { return {{"embeddings", r.vectors}}; }

GenerationRequest generation_request_from_wire(const json& j) {
  constexpr const char* what = "generate request";
  GenerationRequest r;
  r.prompt = require(j, "prompt", json::value_t::string, what).get<std::string>();
  r.steps = string_list(require(j, "steps", json::value_t::array, what), what);
  r.n = require(j, "n", json::value_t::number_integer, what).get<int>();
  if (r.n < 1) throw SchemaError("generate request: n must be >= 1");
  if (j.contains("temperature")) r.temperature = require(j, "temperature", json::value_t::number_float, what).get<double>();
  if (j.contains("stop")) r.stop = require(j, "stop", json::value_t::string, what).get<std::string>();
  if (j.contains("seed")) r.seed = require(j, "seed", json::value_t::number_unsigned, what).get<std::uint64_t>();
  return r;
}

GenerationResponse generation_response_from_wire(const json& j, int expected_n) {
  constexpr const char* what = "generate response";
  const json& steps = require(j, "steps", json::value_t::array, what);
  const bool early_stop = j.is_object() && j.value("early_stop", false);
  if (static_cast<int>(steps.size()) != expected_n &&
      !(early_stop && static_cast<int>(steps.size()) < expected_n))
    throw SchemaError("generate response: expected " + std::to_string(expected_n) + " steps, got " +
                      std::to_string(steps.size()));
  GenerationResponse r;
  for (const auto& s : steps) {
    GeneratedStep g;
    g.text = require(s, "text", json::value_t::string, what).get<std::string>();
    g.token_count = require(s, "tokens", json::value_t::number_integer, what).get<std::int64_t>();
    if (g.token_count <= 0) throw SchemaError("generate response: token count must be > 0");
    g.terminal = require(s, "terminal", json::value_t::boolean, what).get<bool>();
    if (s.contains("answer") && !s["answer"].is_null())
      g.answer = require(s, "answer", json::value_t::string, what).get<std::string>();
    r.steps.push_back(std::move(g));
  }
  return r;
}

RewardRequest reward_request_from_wire(const json& j) {
  constexpr const char* what = "score request";
  RewardRequest r;
  r.prompt = require(j, "prompt", json::value_t::string, what).get<std::string>();
  for (const auto& t : require(j, "trajectories", json::value_t::array, what))
    r.trajectories.push_back(string_list(t, what));
  return r;
}

RewardResponse reward_response_from_wire(const json& j, std::size_t expected) {
  constexpr const char* what = "score response";
  const json& rewards = require(j, "rewards", json::value_t::array, what);
  if (rewards.size() != expected)
    throw SchemaError("score response: expected " + std::to_string(expected) + " rewards, got " +
                      std::to_string(rewards.size()));
  RewardResponse r;
  for (const auto& v : rewards) {
    if (!v.is_number()) throw SchemaError("score response: reward is not a number");
    double x = v.get<double>();
    if (!(x >= 0.0 && x <= 1.0)) throw RewardRangeError("reward " + v.dump() + " outside [0,1]");
    r.rewards.push_back(x);
  }
  return r;
}

EmbedRequest embed_request_from_wire(const json& j) {
  constexpr const char* what = "embed request";
  EmbedRequest r;
  r.texts = string_list(require(j, "texts", json::value_t::array, what), what);
  return r;
}

EmbedResponse embed_response_from_wire(const json& j, std::size_t expected) {
  constexpr const char* what = "embed response";
  const json& vecs = require(j, "embeddings", json::value_t::array, what);
  if (vecs.size() != expected)
    throw SchemaError("embed response: expected " + std::to_string(expected) + " vectors, got " +
                      std::to_string(vecs.size()));
  EmbedResponse r;
  for (const auto& v : vecs) {
    if (!v.is_array() || v.empty()) throw SchemaError("embed response: vector must be a non-empty array");
    std::vector<double> x;
    x.reserve(v.size());
    for (const auto& c : v) {
      if (!c.is_number()) throw SchemaError("embed response: non-numeric component");
      x.push_back(c.get<double>());
    }
    if (!r.vectors.empty() && x.size() != r.vectors.front().size())
      throw SchemaError("embed response: vectors of unequal dimension");
    r.vectors.push_back(std::move(x));
  }
  return r;
}

GenerationResponse SimBackend::generate(const GenerationRequest& req) {
  SimProblem problem = env_.problem_from_prompt(req.prompt);
  std::mt19937_64 rng(req.seed);
  GenerationResponse resp;
  std::vector<std::string> traj = req.steps;
  for (int k = 0; k < req.n; ++k) {
    SimStep s = env_.gen_step(problem, req.steps, rng);
    GeneratedStep g{s.text, s.token_count, s.terminal, std::nullopt};
    if (s.terminal) {
      traj.push_back(s.text);
      g.answer = SimEnv::render_answer(traj);
      traj.pop_back();
    }
    resp.steps.push_back(std::move(g));
  }
  return resp;
}

RewardResponse SimBackend::score(const RewardRequest& req) {
  SimProblem problem = env_.problem_from_prompt(req.prompt);
  RewardResponse resp;
  resp.rewards.reserve(req.trajectories.size());
  for (const auto& t : req.trajectories) resp.rewards.push_back(env_.score(problem, t));
  return resp;
}

EmbedResponse SimBackend::embed(const EmbedRequest& req) {
  EmbedResponse resp;
  resp.vectors.reserve(req.texts.size());
  for (const auto& t : req.texts) resp.vectors.push_back(env_.embed(t));
  return resp;
}

HttpBackendConfig HttpBackendConfig::from_env() { return from_env(HttpBackendConfig{}); }

HttpBackendConfig HttpBackendConfig::from_env(HttpBackendConfig base) {
  auto get = [](const char* name) -> const char* {
    const char* v = std::getenv(name);
    return (v && *v) ? v : nullptr;
  };
  if (auto v = get("ETS_BACKEND_URL")) base.generate_url = base.score_url = base.embed_url = v;
  if (auto v = get("ETS_GENERATE_URL")) base.generate_url = v;
  if (auto v = get("ETS_SCORE_URL")) base.score_url = v;
  if (auto v = get("ETS_EMBED_URL")) base.embed_url = v;
  if (auto v = get("ETS_API_TOKEN")) base.bearer_token = v;
  return base;
}

void to_json(json& j, const HttpBackendConfig& c) {
  j = {{"generate_url", c.generate_url},
       {"score_url", c.score_url},
       {"embed_url", c.embed_url},
       {"generate_timeout_s", c.generate_timeout.count()},
       {"score_timeout_s", c.score_timeout.count()},
       {"embed_timeout_s", c.embed_timeout.count()},
       {"debug", c.debug}};
}

void from_json(const json& j, HttpBackendConfig& c) {
  HttpBackendConfig d;
  c.generate_url = j.value("generate_url", d.generate_url);
  c.score_url = j.value("score_url", d.score_url);
  c.embed_url = j.value("embed_url", d.embed_url);
  c.generate_timeout = std::chrono::seconds(j.value("generate_timeout_s", d.generate_timeout.count()));
  c.score_timeout = std::chrono::seconds(j.value("score_timeout_s", d.score_timeout.count()));
  c.embed_timeout = std::chrono::seconds(j.value("embed_timeout_s", d.embed_timeout.count()));
  c.debug = j.value("debug", d.debug);
}

}  // namespace ets
