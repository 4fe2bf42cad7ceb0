#include "safer/agents.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <thread>

#include "safer/error.hpp"

namespace safer::agents {

using nlohmann::json;

std::string to_string(Speaker s) {
  switch (s) {
    case Speaker::System: return "system";
    case Speaker::User: return "user";
    case Speaker::Assistant: return "assistant";
  }
  return "user";
}

Accounting& Accounting::operator+=(const Accounting& o) {
  latency_s += o.latency_s;
  tokens_in += o.tokens_in;
  tokens_out += o.tokens_out;
  cost += o.cost;
  return *this;
}

std::string execution_agent(const std::string& robot_id) { return "execution:" + robot_id; }

long estimate_tokens(const std::string& text) { return static_cast<long>((text.size() + 3) / 4); }

ScriptedBackend::ScriptedBackend(std::map<std::string, std::vector<std::string>> replies, bool strict)
    : replies_(std::move(replies)), strict_(strict) {}

std::unique_ptr<ScriptedBackend> ScriptedBackend::from_json(const json& doc) {
  if (!doc.is_object()) throw SchemaError("script must be an object");
  if (doc.value("schema_version", 0) != 1) throw SchemaError("unsupported script schema_version");
  if (!doc.contains("replies") || !doc.at("replies").is_object()) throw SchemaError("script needs a 'replies' object");
  std::map<std::string, std::vector<std::string>> replies;
  for (const auto& [agent, list] : doc.at("replies").items()) {
    if (!list.is_array()) throw SchemaError("replies for '" + agent + "' must be an array");
    for (const auto& r : list) {
      if (!r.is_string()) throw SchemaError("replies for '" + agent + "' must be strings");
      replies[agent].push_back(r.get<std::string>());
    }
  }
  auto out = std::make_unique<ScriptedBackend>(std::move(replies), doc.value("strict", true));
  if (doc.contains("defaults")) {
    std::map<std::string, std::string> defaults;
    for (const auto& [agent, r] : doc.at("defaults").items()) {
      if (!r.is_string()) throw SchemaError("default for '" + agent + "' must be a string");
      defaults[agent] = r.get<std::string>();
    }
    out->set_defaults(std::move(defaults));
  }
  const json pricing = doc.value("pricing", json::object());
  out->set_pricing(pricing.value("input_per_1k", 0.0), pricing.value("output_per_1k", 0.0), doc.value("latency_s", 0.0));
  return out;
}

std::unique_ptr<ScriptedBackend> ScriptedBackend::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open script '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw SchemaError("script '" + path + "': " + e.what());
  }
  return from_json(doc);
}

void ScriptedBackend::set_pricing(double input_per_1k, double output_per_1k, double latency_s) {
  if (input_per_1k < 0 || output_per_1k < 0 || latency_s < 0) throw SchemaError("pricing must be non-negative");
  price_in_ = input_per_1k;
  price_out_ = output_per_1k;
  latency_ = latency_s;
}

std::string ScriptedBackend::key_for(const std::string& agent) const {
  if (replies_.count(agent) || defaults_.count(agent)) return agent;
  const auto colon = agent.find(':');
  if (colon != std::string::npos) {
    const std::string family = agent.substr(0, colon);
    if (replies_.count(family) || defaults_.count(family)) return family;
  }
  return agent;
}

int ScriptedBackend::calls(const std::string& agent) const {
  std::lock_guard lock(mutex_);
  const auto it = ordinals_.find(key_for(agent));
  return it == ordinals_.end() ? 0 : it->second;
}

Completion ScriptedBackend::complete(const std::string& agent, const std::vector<ChatTurn>& messages) {
  std::lock_guard lock(mutex_);
  const std::string key = key_for(agent);
  const int ordinal = ordinals_[key]++;
  const auto list = replies_.find(key);
  const std::size_t n = list == replies_.end() ? 0 : list->second.size();
  Completion out;
  if (static_cast<std::size_t>(ordinal) < n) {
    out.text = list->second[ordinal];
  } else if (const auto d = defaults_.find(key); d != defaults_.end()) {
    out.text = d->second;
  } else if (!strict_ && n > 0) {
    out.text = list->second.back();
  } else {
    throw BackendError("script exhausted for '" + agent + "' at call " + std::to_string(ordinal + 1));
  }
  long tokens_in = 0;
  for (const auto& m : messages) tokens_in += estimate_tokens(m.content);
  out.accounting.tokens_in = tokens_in;
  out.accounting.tokens_out = estimate_tokens(out.text);
  out.accounting.latency_s = latency_;
  out.accounting.cost = (tokens_in * price_in_ + out.accounting.tokens_out * price_out_) / 1000.0;
  return out;
}

std::unique_ptr<AgentBackend> make_backend(const std::string& spec, std::optional<long> seed) {
  const auto colon = spec.find(':');
  const std::string kind = spec.substr(0, colon);
  const std::string rest = colon == std::string::npos ? "" : spec.substr(colon + 1);
  if (kind == "scripted") {
    if (rest.empty()) throw SchemaError("scripted backend needs a script path");
    return ScriptedBackend::from_file(rest);
  }
  if (kind == "http") {
    HttpConfig cfg;
    cfg.seed = seed;
    const auto comma = rest.rfind(',');
    if (comma != std::string::npos) {
      cfg.base_url = rest.substr(0, comma);
      cfg.model = rest.substr(comma + 1);
    } else if (!rest.empty()) {
      cfg.base_url = rest;
    }
    return std::make_unique<HttpBackend>(cfg);
  }
  throw SchemaError("unknown backend '" + spec + "' (expected scripted:<path> or http:<url>[,<model>])");
}

}  // namespace safer::agents
