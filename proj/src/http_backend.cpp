#include <httplib.h>

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdlib>
#include <thread>

#include "safer/agents.hpp"
#include "safer/error.hpp"

namespace safer::agents {

using nlohmann::json;

namespace {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;    // prefix, no trailing slash
};

Endpoint split_url(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw SchemaError("base url '" + url + "' has no scheme");
  const auto slash = url.find('/', scheme + 3);
  Endpoint e;
  e.origin = url.substr(0, slash);
  e.path = slash == std::string::npos ? "" : url.substr(slash);
  while (!e.path.empty() && e.path.back() == '/') e.path.pop_back();
  return e;
}

}  // namespace

HttpBackend::HttpBackend(HttpConfig config) : config_(std::move(config)) {
  if (config_.attempts < 1) throw SchemaError("attempts must be at least 1");
  if (!(config_.initial_backoff_s >= 0.0) || !(config_.backoff_factor >= 1.0)) {
    throw SchemaError("backoff must be non-negative with factor >= 1");
  }
  split_url(config_.base_url);
  if (!config_.sleep) {
    config_.sleep = [](double s) { std::this_thread::sleep_for(std::chrono::duration<double>(s)); };
  }
}

Completion HttpBackend::complete(const std::string& agent, const std::vector<ChatTurn>& messages) {
  const char* key = std::getenv(config_.api_key_env.c_str());
  if (!key || !*key) throw BackendError(config_.api_key_env + " is not set");

  json body = {{"model", config_.model}, {"temperature", config_.temperature}, {"messages", json::array()}};
  if (config_.seed) body["seed"] = *config_.seed;
  for (const auto& m : messages) body["messages"].push_back({{"role", to_string(m.role)}, {"content", m.content}});
  const std::string payload = body.dump();

  const Endpoint ep = split_url(config_.base_url);
  httplib::Client client(ep.origin);
  const auto timeout = std::chrono::duration<double>(config_.timeout_s);
  client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  const httplib::Headers headers = {{"Authorization", std::string("Bearer ") + key}};

  double backoff = config_.initial_backoff_s;
  std::string last_error;
  for (int attempt = 1; attempt <= config_.attempts; ++attempt) {
    const auto start = std::chrono::steady_clock::now();
    auto res = client.Post(ep.path + "/chat/completions", headers, payload, "application/json");
    const double latency = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    bool retry = false;
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      retry = true;
    } else if (res->status == 429) {
      last_error = "rate limited (429)";
      retry = true;
    } else if (res->status < 200 || res->status >= 300) {
      throw BackendError(agent + ": HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 500));
    }
    if (retry) {
      if (attempt < config_.attempts) {
        config_.sleep(backoff);
        backoff *= config_.backoff_factor;
      }
      continue;
    }
    Completion out;
    try {
      const json doc = json::parse(res->body);
      out.text = doc.at("choices").at(0).at("message").at("content").get<std::string>();
      const json usage = doc.value("usage", json::object());
      out.accounting.tokens_in = usage.value("prompt_tokens", 0L);
      out.accounting.tokens_out = usage.value("completion_tokens", 0L);
    } catch (const json::exception& e) {
      throw BackendError(agent + ": malformed completion response: " + e.what());
    }
    out.accounting.latency_s = latency;
    out.accounting.cost =
        (out.accounting.tokens_in * config_.input_per_1k + out.accounting.tokens_out * config_.output_per_1k) / 1000.0;
    return out;
  }
  throw BackendError(agent + ": giving up after " + std::to_string(config_.attempts) + " attempts: " + last_error);
}

}  // namespace safer::agents
