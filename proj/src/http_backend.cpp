#include <iostream>
#include <mutex>
#include <thread>

#include "ets/backend.hpp"
#include "ets/errors.hpp"
#include "ets/rng.hpp"
#include "httplib.h"

namespace ets {

using nlohmann::json;

json HttpBackend::post(const std::string& base_url, const std::string& path, const json& body,
                       std::chrono::seconds timeout) const {
  const std::string payload = body.dump();
  if (cfg_.debug) std::cerr << "[http] POST " << base_url << path << " " << payload << "\n";

  std::string last_error;
  for (int attempt = 0; attempt < 2; ++attempt) {
    httplib::Client cli(base_url);
    cli.set_connection_timeout(timeout);
    cli.set_read_timeout(timeout);
    cli.set_write_timeout(timeout);
    httplib::Headers headers;
    if (!cfg_.bearer_token.empty()) headers.emplace("Authorization", "Bearer " + cfg_.bearer_token);

    auto res = cli.Post(path, headers, payload, "application/json");
    if (!res) {
      last_error = base_url + path + ": " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_error = base_url + path + ": HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200)
      throw TransportError(base_url + path + ": HTTP " + std::to_string(res->status) + " " + res->body);
    if (cfg_.debug) std::cerr << "[http] <- " << res->body << "\n";
    try {
      return json::parse(res->body);
    } catch (const json::parse_error& e) {
      throw SchemaError(base_url + path + ": response is not JSON: " + e.what());
    }
  }
  throw TransportError(last_error + " (after retry)");
}

GenerationResponse HttpBackend::generate(const GenerationRequest& req) {
  return generation_response_from_wire(post(cfg_.generate_url, "/generate", to_wire(req), cfg_.generate_timeout),
                                       req.n);
}

RewardResponse HttpBackend::score(const RewardRequest& req) {
  return reward_response_from_wire(post(cfg_.score_url, "/score", to_wire(req), cfg_.score_timeout),
                                   req.trajectories.size());
}

EmbedResponse HttpBackend::embed(const EmbedRequest& req) {
  return embed_response_from_wire(post(cfg_.embed_url, "/embed", to_wire(req), cfg_.embed_timeout),
                                  req.texts.size());
}

// Prompts that are not sim problems get an echo service: numbered steps,
// hash-derived rewards and embeddings.
struct MockServer::Impl {
  explicit Impl(SimConfig cfg) : sim(cfg) {}

  static bool is_sim(const std::string& prompt) { return prompt.starts_with("sim-problem:"); }

  GenerationResponse echo_generate(const GenerationRequest& req) {
    GenerationResponse r;
    for (int k = 0; k < req.n; ++k)
      r.steps.push_back({"echo:" + std::to_string(req.steps.size()) + ":" + std::to_string(k),
                         static_cast<std::int64_t>(8), false, std::nullopt});
    return r;
  }

  static double hash_unit(std::string_view text) {
    return static_cast<double>(mix64(fnv1a(text)) >> 11) * 0x1.0p-53;
  }

  std::vector<double> hash_embedding(std::string_view text) {
    std::vector<double> v(8);
    std::uint64_t h = fnv1a(text);
    for (auto& x : v) {
      h = mix64(h);
      x = static_cast<double>(h >> 11) * 0x1.0p-53 - 0.5;
    }
    v[0] += 1.0;  // never the zero vector
    return v;
  }

  void install() {
    auto handle = [](auto&& fn) {
      return [fn](const httplib::Request& in, httplib::Response& out) {
        try {
          json body = json::parse(in.body);
          out.set_content(fn(body).dump(), "application/json");
        } catch (const SchemaError& e) {
          out.status = 400;
          out.set_content(json{{"error", e.what()}}.dump(), "application/json");
        } catch (const std::exception& e) {
          out.status = 400;
          out.set_content(json{{"error", e.what()}}.dump(), "application/json");
        }
      };
    };
    server.Post("/generate", handle([this](const json& body) {
                  auto req = generation_request_from_wire(body);
                  return to_wire(is_sim(req.prompt) ? sim.generate(req) : echo_generate(req));
                }));
    server.Post("/score", handle([this](const json& body) {
                  auto req = reward_request_from_wire(body);
                  if (is_sim(req.prompt)) return to_wire(sim.score(req));
                  RewardResponse r;
                  for (const auto& t : req.trajectories) {
                    std::string joined = req.prompt;
                    for (const auto& s : t) joined += "\n" + s;
                    r.rewards.push_back(hash_unit(joined));
                  }
                  return to_wire(r);
                }));
    server.Post("/embed", handle([this](const json& body) {
                  auto req = embed_request_from_wire(body);
                  EmbedResponse r;
                  for (const auto& t : req.texts) {
                    bool sim_step = true;
                    try {
                      SimEnv::parse_step(t);
                    } catch (const InvalidArgument&) {
                      sim_step = false;
                    }
                    r.vectors.push_back(sim_step ? sim.env().embed(t) : hash_embedding(t));
                  }
                  return to_wire(r);
                }));
  }

  SimBackend sim;
  httplib::Server server;
  std::thread worker;
};

MockServer::MockServer(SimConfig cfg) : impl_(std::make_unique<Impl>(cfg)) { impl_->install(); }

MockServer::~MockServer() { stop(); }

void MockServer::start(int port) {
  if (impl_->worker.joinable()) return;
  if (port == 0) {
    port_ = impl_->server.bind_to_any_port("127.0.0.1");
  } else {
    port_ = impl_->server.bind_to_port("127.0.0.1", port) ? port : -1;
  }
  if (port_ < 0) throw TransportError("mock server: cannot bind 127.0.0.1:" + std::to_string(port));
  impl_->worker = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void MockServer::stop() {
  if (!impl_ || !impl_->worker.joinable()) return;
  impl_->server.stop();
  impl_->worker.join();
}

std::string MockServer::base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }

}  // namespace ets
