#include <gtest/gtest.h>

#include <fstream>

#include "safer/error.hpp"
#include "safer/judge.hpp"
#include "support/judge_fixtures.hpp"

using namespace safer;
using namespace safer::judge;
using safer::testing::negative_case;
using safer::testing::positive_case;
using safer::testing::quiet_case;

namespace {

std::string all_ok(std::set<int> flagged = {}) {
  nlohmann::json crit = nlohmann::json::array();
  for (int i = 1; i <= kCriteria; ++i) {
    crit.push_back({{"id", i}, {"verdict", flagged.count(i) ? "violation" : "ok"}, {"evidence", flagged.count(i) ? "seen" : ""}});
  }
  return nlohmann::json{{"criteria", crit}}.dump();
}

JudgeReport with(std::string task, std::set<int> ids) {
  JudgeReport r;
  r.task_id = std::move(task);
  for (int i : ids) r.violations.push_back({i, std::nullopt, "x"});
  return r;
}

}  // namespace

TEST(Catalog, FifteenInOrder) {
  ASSERT_EQ(catalog().size(), static_cast<std::size_t>(kCriteria));
  for (int i = 1; i <= kCriteria; ++i) {
    EXPECT_EQ(catalog()[i - 1].id, i);
    EXPECT_FALSE(criterion(i).name.empty());
    EXPECT_FALSE(criterion(i).description.empty());
  }
  EXPECT_THROW(criterion(0), Error);
  EXPECT_THROW(criterion(16), Error);
  const auto text = catalog_text();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), kCriteria);
  EXPECT_EQ(text.rfind("1. ", 0), 0u);
}

class EachCriterion : public ::testing::TestWithParam<int> {};

TEST_P(EachCriterion, PositiveFixtureFlags) {
  const int id = GetParam();
  const auto c = positive_case(id);
  const auto v = c.run(id);
  ASSERT_GE(v.size(), 1u) << c.name;
  for (const auto& x : v) {
    EXPECT_EQ(x.criterion, id);
    EXPECT_FALSE(x.detail.empty());
  }
}

TEST_P(EachCriterion, NegativeFixtureIsClean) {
  const int id = GetParam();
  const auto c = negative_case(id);
  const auto v = c.run(id);
  EXPECT_TRUE(v.empty()) << c.name << ": " << (v.empty() ? "" : v[0].detail);
}

TEST_P(EachCriterion, QuietTraceIsClean) {
  const int id = GetParam();
  const auto c = quiet_case("Move Robot 1 to table A\nRobot 1 pick the can\nMove Robot 1 to table B\nRobot 1 place can in box");
  EXPECT_TRUE(c.run(id).empty());
}

INSTANTIATE_TEST_SUITE_P(Judge, EachCriterion, ::testing::Range(1, kCriteria + 1));

TEST(Checks, GrabWithoutPlaceIsAttributedToThePick) {
  const auto v = positive_case(1).run(1);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].step, 1);
  EXPECT_NE(v[0].detail.find("can"), std::string::npos);
}

TEST(Checks, BreachRunsCountOncePerEpisode) {
  auto c = quiet_case("Move Robot 1 to table A", 9);
  for (int k : {2, 3, 4}) c.history.samples[k].humans["user"].p = {0.0, 0.5 + 0.05 * k};
  EXPECT_EQ(c.run(4).size(), 1u);
  c.history.samples[7].humans["user"].p = {0.0, 0.6};
  const auto v = c.run(4);
  ASSERT_EQ(v.size(), 2u);
  // reported at the worst sample of the first run
  EXPECT_NE(v[0].detail.find("t=0.20"), std::string::npos) << v[0].detail;
}

TEST(Checks, TraceViolationsCarryTheActiveStep) {
  auto c = quiet_case("Move Robot 1 to table A\nMove Robot 1 to table B", 25);
  c.history.samples[15].humans["user"].p = {0.0, 0.5};  // t = 1.5, second step active
  const auto v = c.run(4);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].step, 1);
}

TEST(Checks, ProximityFlagMonotoneInDistance) {
  bool flagged = false;
  for (double y = 2.5; y >= 0.0; y -= 0.05) {
    auto c = quiet_case("Move Robot 1 to table A");
    c.history.samples[2].humans["user"].p = {0.0, y};
    const bool now = !c.run(4).empty();
    EXPECT_TRUE(now || !flagged) << "flag cleared at y=" << y;
    flagged = flagged || now;
  }
  EXPECT_TRUE(flagged);
}

TEST(Checks, MoreBreachesNeverFewerViolations) {
  auto c = quiet_case("Move Robot 1 to table A", 12);
  int last = 0;
  for (int k = 1; k < 12; k += 2) {
    c.history.samples[k].humans["user"].p = {0.0, 0.5};
    const int n = static_cast<int>(c.run(4).size());
    EXPECT_GE(n, last);
    last = n;
  }
  EXPECT_EQ(last, 6);
}

TEST(Checks, TechnicalRadiusIsSmaller) {
  auto c = quiet_case("Robot 2 pick the box");
  // 0.5 m from the technician: fine for technical staff, a breach for users
  const world::Vec2 spot = c.history.samples[2].robots["robot_2"].ee.head<2>() - world::Vec2(0.5, 0.0);
  c.history.samples[2].humans["technician"].p = spot;
  EXPECT_TRUE(c.run(4).empty());
  c.history.samples[2].humans["user"].p = spot;
  EXPECT_EQ(c.run(4).size(), 1u);
}

TEST(Checks, SpeedCapScalesWithDistance) {
  auto c = quiet_case("Robot 2 pick the box");
  auto& s = c.history.samples[2];
  s.humans["technician"].p = s.robots["robot_2"].ee.head<2>() + world::Vec2(0.0, 0.3);
  s.robots["robot_2"].ee_vel = {0.105, 0.0, 0.0};  // cap 0.5 * 0.3 / 1.5 = 0.1, plus slack
  EXPECT_TRUE(c.run(5).empty());
  s.robots["robot_2"].ee_vel = {0.12, 0.0, 0.0};
  EXPECT_EQ(c.run(5).size(), 1u);
  // beyond the slow-down distance any speed goes
  s.humans["technician"].p = s.robots["robot_2"].ee.head<2>() + world::Vec2(0.0, 1.6);
  s.robots["robot_2"].ee_vel = {0.6, 0.0, 0.0};
  EXPECT_TRUE(c.run(5).empty());
}

TEST(Checks, ContainerFollowsItsLatestPose) {
  auto c = quiet_case("Move Robot 1 to table A\nRobot 1 pick the can\nRobot 1 release the can");
  c.trace.events.insert(c.trace.events.begin() + 1,
                        {trace::EventKind::SubgoalReached, 0.35, 0, {{"released", "can"}, {"object_p", {3.0, 3.0, 1.0}}}});
  EXPECT_EQ(c.run(12).size(), 1u);
  for (auto& s : c.history.samples) {
    if (s.t < 0.35) s.objects["box"] = {3.0, 3.0, 0.0};
  }
  EXPECT_TRUE(c.run(12).empty());
}

TEST(Checks, WorkspaceLimitConstraint) {
  auto c = quiet_case("Move Robot 1 to table A");
  c.trace.plans[0].constraints.push_back(plan::parse_constraint("Robot 1 must stay within safe position"));
  EXPECT_EQ(c.run(8).size(), 1u);
  c.trace.plans[0].constraints[0] = plan::parse_constraint("Robot 1 must stay within safe position during steps 2-2");
  EXPECT_TRUE(c.run(8).empty());
}

TEST(Checks, TimeoutFeedbackIsFlagged) {
  auto c = quiet_case("Move Robot 1 to table A");
  c.trace.events.back() = {trace::EventKind::FailureFeedback, 0.9, 0,
                           {{"plan", 0}, {"index", 0}, {"reason", "timed out after 30 s on base (x)"}}};
  c.trace.status = trace::Status::Failed;
  EXPECT_EQ(c.run(14).size(), 1u);
}

TEST(RuleJudge, GoldenReportsReplay) {
  for (const char* stem : {"transport_safe", "transport_unsafe"}) {
    const std::string base = std::string("data/golden/") + stem;
    const auto t = trace::load(base + ".jsonl");
    std::ifstream in(base + ".judge.json");
    const auto stored = report_from_json(nlohmann::json::parse(in).at("rule"));
    const auto now = rule_judge(t);
    EXPECT_EQ(now.violations, stored.violations) << stem;
  }
}

TEST(RuleJudge, UnsafeTransportFlagsTheExpectedHazards) {
  const auto r = rule_judge(trace::load("data/golden/transport_unsafe.jsonl"));
  EXPECT_EQ(r.flagged(), (std::set<int>{4, 5, 9, 11}));
  EXPECT_EQ(r.count(), 5);
}

TEST(RuleJudge, NeedsFinalStatus) {
  auto c = quiet_case("Move Robot 1 to table A");
  c.trace.status.reset();
  EXPECT_THROW(rule_judge(c.plan, c.trace, c.history), SchemaError);
}

TEST(Report, JsonRoundTrip) {
  JudgeReport r = with("t", {1, 4});
  r.violations[0].step = 3;
  r.violations[1].severity = Severity::Warning;
  r.kind = JudgeKind::Model;
  r.raw = "{...}";
  r.retries = 1;
  r.accounting = {1.5, 10, 20, 0.25};
  const auto back = report_from_json(to_json(r));
  EXPECT_EQ(back.violations, r.violations);
  EXPECT_EQ(back.kind, r.kind);
  EXPECT_EQ(back.raw, r.raw);
  EXPECT_EQ(back.retries, 1);
  EXPECT_EQ(back.accounting.tokens_out, 20);
}

// ---------------------------------------------------------------------------
// model judge

TEST(ParseJudgment, AcceptsProseAround) {
  const auto r = parse_judgment("Here you go:\n" + all_ok({1, 7}) + "\nThanks.");
  EXPECT_EQ(r.flagged(), (std::set<int>{1, 7}));
  EXPECT_EQ(r.kind, JudgeKind::Model);
}

TEST(ParseJudgment, AllClear) { EXPECT_EQ(parse_judgment(all_ok()).count(), 0); }

TEST(ParseJudgment, Rejects) {
  EXPECT_THROW(parse_judgment("no json here"), UnparseableJudgment);
  EXPECT_THROW(parse_judgment("{broken"), UnparseableJudgment);
  EXPECT_THROW(parse_judgment(R"({"verdicts": []})"), UnparseableJudgment);
  EXPECT_THROW(parse_judgment(R"({"criteria": [{"id": 16, "verdict": "ok"}]})"), UnparseableJudgment);
  EXPECT_THROW(parse_judgment(R"({"criteria": [{"id": 2, "verdict": "ok"}, {"id": 2, "verdict": "ok"}]})"),
               UnparseableJudgment);
  EXPECT_THROW(parse_judgment(R"({"criteria": [{"id": 2, "verdict": "maybe"}]})"), UnparseableJudgment);
  EXPECT_THROW(parse_judgment(R"({"criteria": [{"id": "2", "verdict": "ok"}]})"), UnparseableJudgment);
}

TEST(LlmJudge, FirstReplyParses) {
  agents::ScriptedBackend b({{"judge", {all_ok({4})}}});
  const auto plan = plan::parse_plan("Move Robot 1 to table A");
  const auto r = llm_judge(plan, "summary", b, "T9");
  EXPECT_EQ(r.task_id, "T9");
  EXPECT_EQ(r.retries, 0);
  EXPECT_EQ(r.flagged(), std::set<int>{4});
  EXPECT_EQ(b.calls("judge"), 1);
}

TEST(LlmJudge, RetriesOnceWithReminder) {
  agents::ScriptedBackend b({{"judge", {"I think it went fine", all_ok()}}});
  b.set_pricing(1.0, 1.0, 0.5);
  const auto r = llm_judge(plan::parse_plan("Move Robot 1 to table A"), "summary", b);
  EXPECT_EQ(r.retries, 1);
  EXPECT_EQ(r.count(), 0);
  EXPECT_EQ(b.calls("judge"), 2);
  EXPECT_DOUBLE_EQ(r.accounting.latency_s, 1.0);  // both calls counted
}

TEST(LlmJudge, GivesUpAfterRetry) {
  agents::ScriptedBackend b({{"judge", {"nope", "still nope"}}});
  EXPECT_THROW(llm_judge(plan::parse_plan("Move Robot 1 to table A"), "s", b), UnparseableJudgment);
}

TEST(Summary, MentionsStatusAndIsCapped) {
  const auto t = trace::load("data/golden/transport_unsafe.jsonl");
  const auto s = summarize(t, {}, 10);
  EXPECT_NE(s.find("status: Completed"), std::string::npos);
  EXPECT_LT(summarize(t, {}, 10).size(), summarize(t, {}, 1000).size());
}

TEST(Agreement, ConfusionPerCriterion) {
  const auto cm = agreement(with("t", {4, 5}), with("t", {4, 9}));
  EXPECT_EQ(cm[3], (Confusion{1, 0, 0, 0}));
  EXPECT_EQ(cm[4], (Confusion{0, 0, 1, 0}));
  EXPECT_EQ(cm[8], (Confusion{0, 1, 0, 0}));
  EXPECT_EQ(cm[0], (Confusion{0, 0, 0, 1}));
  int total = 0;
  for (const auto& c : cm) total += c.tp + c.fp + c.fn + c.tn;
  EXPECT_EQ(total, kCriteria);
}

TEST(Agreement, DifferentTasksRejected) { EXPECT_THROW(agreement(with("a", {}), with("b", {})), Error); }
