#pragma once

#include <nlohmann/json_fwd.hpp>

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <mutex>
#include <string>
#include <vector>

namespace safer::agents {

enum class Speaker { System, User, Assistant };
std::string to_string(Speaker s);

struct ChatTurn {
  Speaker role = Speaker::User;
  std::string content;

  bool operator==(const ChatTurn&) const = default;
};

struct Accounting {
  double latency_s = 0.0;
  long tokens_in = 0;
  long tokens_out = 0;
  double cost = 0.0;

  Accounting& operator+=(const Accounting& o);
};

struct Completion {
  std::string text;
  Accounting accounting;
};

// Agent names used as backend keys.
inline constexpr const char* kTaskPlanner = "task_planner";
inline constexpr const char* kSafetyPlanner = "safety_planner";
inline constexpr const char* kJudge = "judge";
/// "execution:robot_1"
std::string execution_agent(const std::string& robot_id);

class AgentBackend {
 public:
  virtual ~AgentBackend() = default;
  /// One chat completion for `agent`. Throws BackendError.
  virtual Completion complete(const std::string& agent, const std::vector<ChatTurn>& messages) = 0;
};

/// Rough token count used where the backend reports none: 4 characters per token.
long estimate_tokens(const std::string& text);

/// Replays canned replies keyed by (agent, call ordinal).
///
/// Script document:
///   {"schema_version": 1, "strict": true,
///    "replies": {"task_planner": ["...", ...], "execution:robot_1": [...], "execution": [...]},
///    "defaults": {"execution": "YES"},
///    "pricing": {"input_per_1k": 0.0, "output_per_1k": 0.0}, "latency_s": 0.0}
///
/// "execution:<robot>" falls back to "execution". Once an agent's list is used
/// up the default reply is returned; without one a strict script throws
/// BackendError and a lenient one repeats its last reply.
class ScriptedBackend : public AgentBackend {
 public:
  ScriptedBackend(std::map<std::string, std::vector<std::string>> replies, bool strict = true);
  static std::unique_ptr<ScriptedBackend> from_json(const nlohmann::json& document);
  static std::unique_ptr<ScriptedBackend> from_file(const std::string& path);

  Completion complete(const std::string& agent, const std::vector<ChatTurn>& messages) override;

  /// Calls made so far for the agent's script key.
  int calls(const std::string& agent) const;
  void set_defaults(std::map<std::string, std::string> defaults) { defaults_ = std::move(defaults); }
  void set_pricing(double input_per_1k, double output_per_1k, double latency_s);

 private:
  std::string key_for(const std::string& agent) const;

  std::map<std::string, std::vector<std::string>> replies_;
  std::map<std::string, std::string> defaults_;
  std::map<std::string, int> ordinals_;
  bool strict_;
  double price_in_ = 0.0;
  double price_out_ = 0.0;
  double latency_ = 0.0;
  mutable std::mutex mutex_;
};

struct HttpConfig {
  std::string base_url = "https://api.openai.com/v1";
  std::string model = "gpt-4o";
  double temperature = 0.0;
  std::optional<long> seed;  // sent when set
  std::string api_key_env = "SAFER_API_KEY";
  int attempts = 3;
  double initial_backoff_s = 1.0;
  double backoff_factor = 2.0;
  double timeout_s = 120.0;
  double input_per_1k = 0.0;  // cost per 1000 prompt tokens
  double output_per_1k = 0.0;
  /// Replaced in tests to avoid real sleeps.
  std::function<void(double)> sleep;
};

/// Chat-completions client. Retries transport failures and HTTP 429 only,
/// with exponential backoff; other HTTP errors fail immediately.
class HttpBackend : public AgentBackend {
 public:
  explicit HttpBackend(HttpConfig config);

  Completion complete(const std::string& agent, const std::vector<ChatTurn>& messages) override;

  const HttpConfig& config() const { return config_; }

 private:
  HttpConfig config_;
};

/// Backend from a CLI spec: "scripted:<path>" or "http:<base url>[,<model>]".
/// `seed` is forwarded to HTTP backends; scripted replies ignore it.
std::unique_ptr<AgentBackend> make_backend(const std::string& spec, std::optional<long> seed = std::nullopt);

}  // namespace safer::agents
