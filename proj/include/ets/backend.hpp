#pragma once

// Provider interfaces for generation, reward scoring and embedding, plus
// the wire format shared by the HTTP client and the loopback mock server.
//
//   POST /generate  {"prompt", "steps": [..], "n", "temperature", "stop", "seed"}
//                -> {"steps": [{"text", "tokens", "terminal", "answer"?}, ..]}
//   POST /score     {"prompt", "trajectories": [[..], ..]}  -> {"rewards": [..]}
//   POST /embed     {"texts": [..]}                          -> {"embeddings": [[..], ..]}

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ets/simenv.hpp"
#include "json.hpp"

namespace ets {

struct GenerationRequest {
  std::string prompt;
  std::vector<std::string> steps;  // prefix, root excluded
  int n = 1;
  double temperature = 1.0;
  std::string stop = "\n\n";
  std::uint64_t seed = 0;  // stream key for this (problem, step, leaf)
};

struct GeneratedStep {
  std::string text;
  std::int64_t token_count = 0;
  bool terminal = false;
  std::optional<std::string> answer;
};

struct GenerationResponse {
  std::vector<GeneratedStep> steps;
};

struct RewardRequest {
  std::string prompt;
  std::vector<std::vector<std::string>> trajectories;
};

struct RewardResponse {
  std::vector<double> rewards;
};

struct EmbedRequest {
  std::vector<std::string> texts;
};

struct EmbedResponse {
  std::vector<std::vector<double>> vectors;
};

// Wire codecs. Decoders validate the schema and throw SchemaError; reward
// decoding additionally throws RewardRangeError for values outside [0,1].
nlohmann::json to_wire(const GenerationRequest& r);
nlohmann::json to_wire(const GenerationResponse& r);
nlohmann::json to_wire(const RewardRequest& r);
nlohmann::json to_wire(const RewardResponse& r);
nlohmann::json to_wire(const EmbedRequest& r);
nlohmann::json to_wire(const EmbedResponse& r);
GenerationRequest generation_request_from_wire(const nlohmann::json& j);
GenerationResponse generation_response_from_wire(const nlohmann::json& j, int expected_n);
RewardRequest reward_request_from_wire(const nlohmann::json& j);
RewardResponse reward_response_from_wire(const nlohmann::json& j, std::size_t expected);
EmbedRequest embed_request_from_wire(const nlohmann::json& j);
EmbedResponse embed_response_from_wire(const nlohmann::json& j, std::size_t expected);

class GenerationProvider {
 public:
  virtual ~GenerationProvider() = default;
  virtual GenerationResponse generate(const GenerationRequest& req) = 0;
};

class RewardProvider {
 public:
  virtual ~RewardProvider() = default;
  virtual RewardResponse score(const RewardRequest& req) = 0;
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual EmbedResponse embed(const EmbedRequest& req) = 0;
};

// Direct in-process adapter over the simulator.
class SimBackend final : public GenerationProvider, public RewardProvider, public EmbeddingProvider {
 public:
  explicit SimBackend(SimConfig cfg) : env_(cfg) {}

  GenerationResponse generate(const GenerationRequest& req) override;
  RewardResponse score(const RewardRequest& req) override;
  EmbedResponse embed(const EmbedRequest& req) override;

  const SimEnv& env() const { return env_; }

 private:
  SimEnv env_;
};

struct HttpBackendConfig {
  std::string generate_url = "http://127.0.0.1:8000";
  std::string score_url = "http://127.0.0.1:8000";
  std::string embed_url = "http://127.0.0.1:8000";
  std::chrono::seconds generate_timeout{120};
  std::chrono::seconds score_timeout{30};
  std::chrono::seconds embed_timeout{30};
  std::string bearer_token;
  bool debug = false;

  // ETS_BACKEND_URL sets all three; ETS_GENERATE_URL, ETS_SCORE_URL and
  // ETS_EMBED_URL override individually; ETS_API_TOKEN sets the bearer token.
  static HttpBackendConfig from_env();
  static HttpBackendConfig from_env(HttpBackendConfig base);
};

void to_json(nlohmann::json& j, const HttpBackendConfig& c);
void from_json(const nlohmann::json& j, HttpBackendConfig& c);

// JSON-over-HTTP client. Each call retries once on transport failure.
// Safe for concurrent use; every request opens its own connection.
class HttpBackend final : public GenerationProvider, public RewardProvider, public EmbeddingProvider {
 public:
  explicit HttpBackend(HttpBackendConfig cfg) : cfg_(std::move(cfg)) {}

  GenerationResponse generate(const GenerationRequest& req) override;
  RewardResponse score(const RewardRequest& req) override;
  EmbedResponse embed(const EmbedRequest& req) override;

 private:
  nlohmann::json post(const std::string& base_url, const std::string& path,
                      const nlohmann::json& body, std::chrono::seconds timeout) const;

  HttpBackendConfig cfg_;
};

// Loopback server exposing a SimBackend over the wire format above.
class MockServer {
 public:
  explicit MockServer(SimConfig cfg);
  ~MockServer();
  MockServer(const MockServer&) = delete;
  MockServer& operator=(const MockServer&) = delete;

  // Binds 127.0.0.1 (port 0 picks a free one) and serves on a background thread.
  void start(int port = 0);
  void stop();
  int port() const { return port_; }
  std::string base_url() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = -1;
};

}  // namespace ets
