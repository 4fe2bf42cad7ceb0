#include <gtest/gtest.h>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <atomic>
#include <cstdlib>
#include <thread>

#include "safer/agents.hpp"
#include "safer/error.hpp"

using namespace safer;
using namespace safer::agents;
using nlohmann::json;

namespace {

std::vector<ChatTurn> msgs(const std::string& user) { return {{Speaker::System, "sys"}, {Speaker::User, user}}; }

json script_doc() {
  return {{"schema_version", 1},
          {"strict", true},
          {"replies",
           {{"task_planner", {"plan one", "plan two"}},
            {"execution", {"YES"}},
            {"execution:robot_2", {"NO: blocked"}}}},
          {"defaults", {{"safety_planner", "NO_SAFETY_CONCERNS"}}},
          {"pricing", {{"input_per_1k", 1.0}, {"output_per_1k", 2.0}}},
          {"latency_s", 0.5}};
}

// Minimal chat-completions endpoint on a free port.
class FakeServer {
 public:
  FakeServer() {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      const int n = ++hits_;
      last_body_ = req.body;
      last_auth_ = req.get_header_value("Authorization");
      if (n <= fail_first_) {
        res.status = fail_status_;
        res.set_content("busy", "text/plain");
        return;
      }
      json reply = {{"choices", {{{"message", {{"role", "assistant"}, {"content", "hello"}}}}}},
                    {"usage", {{"prompt_tokens", 1000}, {"completion_tokens", 500}}}};
      res.set_content(reply.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeServer() {
    server_.stop();
    thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }

  int fail_first_ = 0;
  int fail_status_ = 429;
  std::atomic<int> hits_{0};
  std::string last_body_;
  std::string last_auth_;

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

HttpConfig config_for(const FakeServer& s, std::vector<double>* sleeps) {
  ::setenv("SAFER_TEST_KEY", "k123", 1);
  HttpConfig c;
  c.base_url = s.url();
  c.api_key_env = "SAFER_TEST_KEY";
  c.timeout_s = 5.0;
  c.input_per_1k = 0.01;
  c.output_per_1k = 0.03;
  c.sleep = [sleeps](double s) { sleeps->push_back(s); };
  return c;
}

}  // namespace

TEST(Scripted, RepliesInOrderPerAgent) {
  auto b = ScriptedBackend::from_json(script_doc());
  EXPECT_EQ(b->complete(kTaskPlanner, msgs("a")).text, "plan one");
  EXPECT_EQ(b->complete(kSafetyPlanner, msgs("a")).text, "NO_SAFETY_CONCERNS");
  EXPECT_EQ(b->complete(kTaskPlanner, msgs("b")).text, "plan two");
  EXPECT_EQ(b->calls(kTaskPlanner), 2);
  EXPECT_EQ(b->calls(kSafetyPlanner), 1);
}

TEST(Scripted, ExecutionFallsBackToFamily) {
  auto b = ScriptedBackend::from_json(script_doc());
  EXPECT_EQ(b->complete(execution_agent("robot_1"), msgs("x")).text, "YES");
  EXPECT_EQ(b->complete(execution_agent("robot_2"), msgs("x")).text, "NO: blocked");
}

TEST(Scripted, StrictScriptThrowsWhenExhausted) {
  auto b = ScriptedBackend::from_json(script_doc());
  b->complete(kTaskPlanner, msgs("a"));
  b->complete(kTaskPlanner, msgs("a"));
  EXPECT_THROW(b->complete(kTaskPlanner, msgs("a")), BackendError);
  EXPECT_THROW(b->complete(kJudge, msgs("a")), BackendError);
}

TEST(Scripted, LenientScriptRepeatsLastReply) {
  auto doc = script_doc();
  doc["strict"] = false;
  auto b = ScriptedBackend::from_json(doc);
  b->complete(kTaskPlanner, msgs("a"));
  b->complete(kTaskPlanner, msgs("a"));
  EXPECT_EQ(b->complete(kTaskPlanner, msgs("a")).text, "plan two");
}

TEST(Scripted, DefaultsAnswerForever) {
  auto b = ScriptedBackend::from_json(script_doc());
  for (int i = 0; i < 5; ++i) EXPECT_EQ(b->complete(kSafetyPlanner, msgs("a")).text, "NO_SAFETY_CONCERNS");
}

TEST(Scripted, AccountingUsesCharacterEstimate) {
  auto b = ScriptedBackend::from_json(script_doc());
  // "sys" -> 1 token, 8 chars -> 2 tokens, "plan one" -> 2 tokens
  const auto c = b->complete(kTaskPlanner, msgs("12345678"));
  EXPECT_EQ(c.accounting.tokens_in, 3);
  EXPECT_EQ(c.accounting.tokens_out, 2);
  EXPECT_DOUBLE_EQ(c.accounting.latency_s, 0.5);
  EXPECT_NEAR(c.accounting.cost, (3 * 1.0 + 2 * 2.0) / 1000.0, 1e-15);
}

TEST(Scripted, EstimateRoundsUp) {
  EXPECT_EQ(estimate_tokens(""), 0);
  EXPECT_EQ(estimate_tokens("a"), 1);
  EXPECT_EQ(estimate_tokens("abcd"), 1);
  EXPECT_EQ(estimate_tokens("abcde"), 2);
}

TEST(Scripted, BadDocumentsRejected) {
  EXPECT_THROW(ScriptedBackend::from_json(json{{"schema_version", 2}, {"replies", json::object()}}), SchemaError);
  EXPECT_THROW(ScriptedBackend::from_json(json{{"schema_version", 1}}), SchemaError);
  auto neg = script_doc();
  neg["latency_s"] = -1.0;
  EXPECT_THROW(ScriptedBackend::from_json(neg), SchemaError);
  EXPECT_THROW(ScriptedBackend::from_file("no/such/script.json"), SchemaError);
}

TEST(Scripted, ShippedScriptsLoad) {
  for (const char* p : {"data/scripts/transport_safe.json", "data/scripts/transport_unsafe.json",
                        "data/scripts/regrasp_safe.json", "data/scripts/center_box_safe.json"}) {
    EXPECT_NO_THROW(ScriptedBackend::from_file(p)) << p;
  }
}

TEST(MakeBackend, Specs) {
  EXPECT_NE(make_backend("scripted:data/scripts/transport_safe.json"), nullptr);
  auto h = make_backend("http:http://localhost:9/v1,some-model", 7);
  auto* hb = dynamic_cast<HttpBackend*>(h.get());
  ASSERT_NE(hb, nullptr);
  EXPECT_EQ(hb->config().base_url, "http://localhost:9/v1");
  EXPECT_EQ(hb->config().model, "some-model");
  EXPECT_EQ(hb->config().seed, 7);
  EXPECT_THROW(make_backend("carrier-pigeon:x"), SchemaError);
  EXPECT_THROW(make_backend("scripted:"), SchemaError);
}

TEST(Http, SendsRequestAndReadsUsage) {
  FakeServer s;
  std::vector<double> sleeps;
  auto cfg = config_for(s, &sleeps);
  cfg.seed = 42;
  cfg.model = "m1";
  HttpBackend b(cfg);
  const auto c = b.complete(kTaskPlanner, msgs("hi"));
  EXPECT_EQ(c.text, "hello");
  EXPECT_EQ(c.accounting.tokens_in, 1000);
  EXPECT_EQ(c.accounting.tokens_out, 500);
  EXPECT_NEAR(c.accounting.cost, 0.01 + 0.015, 1e-12);
  EXPECT_GE(c.accounting.latency_s, 0.0);
  EXPECT_EQ(s.last_auth_, "Bearer k123");
  const auto body = json::parse(s.last_body_);
  EXPECT_EQ(body["model"], "m1");
  EXPECT_EQ(body["seed"], 42);
  EXPECT_EQ(body["temperature"], 0.0);
  ASSERT_EQ(body["messages"].size(), 2u);
  EXPECT_EQ(body["messages"][0]["role"], "system");
  EXPECT_EQ(body["messages"][1]["content"], "hi");
  EXPECT_TRUE(sleeps.empty());
}

TEST(Http, RetriesRateLimitWithBackoff) {
  FakeServer s;
  s.fail_first_ = 2;
  std::vector<double> sleeps;
  auto cfg = config_for(s, &sleeps);
  cfg.initial_backoff_s = 0.5;
  cfg.backoff_factor = 3.0;
  HttpBackend b(cfg);
  EXPECT_EQ(b.complete(kJudge, msgs("hi")).text, "hello");
  EXPECT_EQ(s.hits_.load(), 3);
  ASSERT_EQ(sleeps.size(), 2u);
  EXPECT_DOUBLE_EQ(sleeps[0], 0.5);
  EXPECT_DOUBLE_EQ(sleeps[1], 1.5);
}

TEST(Http, GivesUpAfterAttempts) {
  FakeServer s;
  s.fail_first_ = 10;
  std::vector<double> sleeps;
  auto cfg = config_for(s, &sleeps);
  cfg.attempts = 3;
  HttpBackend b(cfg);
  EXPECT_THROW(b.complete(kJudge, msgs("hi")), BackendError);
  EXPECT_EQ(s.hits_.load(), 3);
  EXPECT_EQ(sleeps.size(), 2u);
}

TEST(Http, OtherErrorsAreNotRetried) {
  FakeServer s;
  s.fail_first_ = 10;
  s.fail_status_ = 400;
  std::vector<double> sleeps;
  HttpBackend b(config_for(s, &sleeps));
  EXPECT_THROW(b.complete(kJudge, msgs("hi")), BackendError);
  EXPECT_EQ(s.hits_.load(), 1);
  EXPECT_TRUE(sleeps.empty());
}

TEST(Http, TransportFailureRetried) {
  std::vector<double> sleeps;
  ::setenv("SAFER_TEST_KEY", "k", 1);
  HttpConfig cfg;
  cfg.api_key_env = "SAFER_TEST_KEY";
  {
    FakeServer s;
    cfg.base_url = s.url();
  }  // port now closed
  cfg.timeout_s = 1.0;
  cfg.attempts = 2;
  cfg.sleep = [&](double d) { sleeps.push_back(d); };
  HttpBackend b(cfg);
  EXPECT_THROW(b.complete(kJudge, msgs("hi")), BackendError);
  EXPECT_EQ(sleeps.size(), 1u);
}

TEST(Http, MissingKeyFailsBeforeSending) {
  FakeServer s;
  std::vector<double> sleeps;
  auto cfg = config_for(s, &sleeps);
  cfg.api_key_env = "SAFER_TEST_KEY_UNSET";
  ::unsetenv("SAFER_TEST_KEY_UNSET");
  HttpBackend b(cfg);
  EXPECT_THROW(b.complete(kJudge, msgs("hi")), BackendError);
  EXPECT_EQ(s.hits_.load(), 0);
}

TEST(Http, BadConfigRejected) {
  HttpConfig c;
  c.attempts = 0;
  EXPECT_THROW(HttpBackend{c}, SchemaError);
  c = {};
  c.base_url = "localhost/v1";
  EXPECT_THROW(HttpBackend{c}, SchemaError);
  c = {};
  c.backoff_factor = 0.5;
  EXPECT_THROW(HttpBackend{c}, SchemaError);
}
