#include <gtest/gtest.h>

#include "safer/error.hpp"
#include "safer/judge.hpp"
#include "safer/orchestrator.hpp"

using namespace safer;
using namespace safer::orchestrator;
using agents::ScriptedBackend;
using trace::EventKind;

namespace {

const std::string kTask = "Put the can from table A into the box on table B";

world::WorldState scene() { return world::load_scene_file("data/scenes/two_tables.json"); }

std::unique_ptr<ScriptedBackend> scripted(std::map<std::string, std::vector<std::string>> replies,
                                          std::string execution_default = "YES") {
  auto b = std::make_unique<ScriptedBackend>(std::move(replies));
  if (!execution_default.empty()) b->set_defaults({{"execution", execution_default}});
  return b;
}

int count(const trace::Trace& t, EventKind k) {
  int n = 0;
  for (const auto& e : t.events) n += e.kind == k;
  return n;
}

int calls_to(const trace::Trace& t, const std::string& prefix) {
  int n = 0;
  for (const auto& c : t.calls) n += c.agent.rfind(prefix, 0) == 0;
  return n;
}

}  // namespace

// ---------------------------------------------------------------------------
// critique and verdict parsing

TEST(Critique, BareTokenApproves) {
  const auto c = parse_critique("NO_SAFETY_CONCERNS");
  EXPECT_TRUE(c.approved);
  EXPECT_TRUE(c.hazards.empty());
}

TEST(Critique, TokenUnderHazardsWithConstraints) {
  const auto c = parse_critique("HAZARDS:\nNO_SAFETY_CONCERNS\nCONSTRAINTS:\n- Robot 2 must not collide with table B\n");
  EXPECT_TRUE(c.approved);
  ASSERT_EQ(c.constraint_lines.size(), 1u);
  EXPECT_EQ(c.constraint_lines[0], "Robot 2 must not collide with table B");
}

TEST(Critique, HazardsBlockApproval) {
  const auto c = parse_critique("HAZARDS:\n1. arm swings near the user\nNO_SAFETY_CONCERNS\n");
  EXPECT_FALSE(c.approved);
  ASSERT_EQ(c.hazards.size(), 1u);
  EXPECT_EQ(c.hazards[0], "arm swings near the user");
}

TEST(Critique, NoTokenNoApproval) {
  const auto c = parse_critique("CONSTRAINTS:\n* Robot 1 must stay away from users\n");
  EXPECT_FALSE(c.approved);
  EXPECT_TRUE(c.hazards.empty());
  EXPECT_EQ(c.constraint_lines.size(), 1u);
}

TEST(Critique, UnsectionedLinesSorted) {
  const auto c = parse_critique("the robots may collide\nRobot 1 must not collide with Robot 2\n");
  EXPECT_EQ(c.hazards, std::vector<std::string>{"the robots may collide"});
  EXPECT_EQ(c.constraint_lines, std::vector<std::string>{"Robot 1 must not collide with Robot 2"});
}

TEST(Verdict, Forms) {
  EXPECT_TRUE(parse_verdict("YES").executable);
  EXPECT_TRUE(parse_verdict("  yes.\n").executable);
  const auto no = parse_verdict("NO: the box is out of reach");
  EXPECT_FALSE(no.executable);
  EXPECT_TRUE(no.parsed);
  EXPECT_EQ(no.reason, "the box is out of reach");
  for (const char* junk : {"maybe", "", "YES but carefully", "NO: a\nb"}) {
    const auto v = parse_verdict(junk);
    EXPECT_FALSE(v.executable) << junk;
    EXPECT_FALSE(v.parsed) << junk;
    EXPECT_EQ(v.reason, "unparseable verdict");
  }
}

// ---------------------------------------------------------------------------
// plan loop

TEST(PlanLoop, TwoRoundsEndWithApproval) {
  const auto b = ScriptedBackend::from_file("data/scripts/transport_safe.json");
  CallLog log;
  const auto s = plan_loop(kTask, scene(), Agents::all(*b), {}, log);
  EXPECT_TRUE(s.approved);
  EXPECT_EQ(s.rounds, 2);
  EXPECT_EQ(s.critiques.size(), 2u);
  ASSERT_TRUE(s.plan);
  EXPECT_EQ(s.plan->instructions.size(), 8u);
  EXPECT_EQ(s.plan->instructions[6].verb, plan::Verb::Check);
  EXPECT_EQ(s.constraints.size(), 7u);  // six from round one, one from round two
  EXPECT_EQ(log.count(agents::kTaskPlanner), 2);
  EXPECT_EQ(log.count(agents::kSafetyPlanner), 2);
}

TEST(PlanLoop, UnapprovedAfterMaxRoundsKeepsLastPlan) {
  const auto b = scripted({{"task_planner", {"Move Robot 1 to table A", "Move Robot 1 to table B"}},
                           {"safety_planner", {"HAZARDS:\n- too close\n", "HAZARDS:\n- still too close\n"}}});
  OrchestratorConfig cfg;
  cfg.max_rounds = 2;
  CallLog log;
  const auto s = plan_loop(kTask, scene(), Agents::all(*b), cfg, log);
  EXPECT_FALSE(s.approved);
  EXPECT_EQ(s.rounds, 2);
  EXPECT_EQ(s.plan->instructions[0].target, "table B");
}

TEST(PlanLoop, UnusablePlansAreSentBack) {
  const auto b = scripted({{"task_planner", {"Robot 1 juggle the can", "Move Robot 1 to the moon", "Move Robot 1 to table A"}},
                           {"safety_planner", {"NO_SAFETY_CONCERNS"}}});
  CallLog log;
  const auto s = plan_loop(kTask, scene(), Agents::all(*b), {}, log);
  EXPECT_TRUE(s.approved);
  EXPECT_EQ(s.rounds, 3);
  EXPECT_EQ(s.critiques[0].text.rfind("PLAN_REJECTED: ", 0), 0u);
  EXPECT_EQ(s.critiques[1].text.rfind("PLAN_REJECTED: ", 0), 0u);
  EXPECT_EQ(log.count(agents::kSafetyPlanner), 1);  // only the usable plan is critiqued
}

TEST(PlanLoop, NoUsablePlanThrows) {
  const auto b = scripted({{"task_planner", {"hello", "hello", "hello"}}});
  CallLog log;
  try {
    plan_loop(kTask, scene(), Agents::all(*b), {}, log);
    FAIL() << "expected PlanningFailed";
  } catch (const PlanningFailed& e) {
    EXPECT_EQ(e.session().rounds, 3);
    EXPECT_FALSE(e.session().plan);
  }
}

TEST(PlanLoop, BadConstraintsDroppedIntoNotes) {
  const auto b = scripted({{"task_planner", {"Move Robot 1 to table A"}},
                           {"safety_planner", {"NO_SAFETY_CONCERNS\nCONSTRAINTS:\nRobot 1 must not collide with the moon\n"
                                               "Robot 1 must not collide with table B\n"}}});
  CallLog log;
  const auto s = plan_loop(kTask, scene(), Agents::all(*b), {}, log);
  EXPECT_EQ(s.constraints.size(), 1u);
  ASSERT_EQ(s.notes.size(), 1u);
  EXPECT_EQ(s.notes[0].rfind("dropped constraint: ", 0), 0u);
}

TEST(PlanLoop, SafetyOffSkipsCritique) {
  const auto b = scripted({{"task_planner", {"Move Robot 1 to table A"}}});
  OrchestratorConfig cfg;
  cfg.safety_planner = false;
  CallLog log;
  const auto s = plan_loop(kTask, scene(), Agents::all(*b), cfg, log);
  EXPECT_TRUE(s.approved);
  EXPECT_EQ(log.count(), 1);
}

// ---------------------------------------------------------------------------
// full runs

TEST(Run, SafeTransportCompletesClean) {
  const auto b = ScriptedBackend::from_file("data/scripts/transport_safe.json");
  const auto t = run_task("T1", kTask, scene(), Agents::all(*b), {});
  ASSERT_TRUE(t.status);
  EXPECT_EQ(*t.status, trace::Status::Completed);
  EXPECT_EQ(t.steps_executed, 8);
  EXPECT_EQ(count(t, EventKind::StepDispatched), 8);
  EXPECT_EQ(count(t, EventKind::SuccessFeedback), 8);
  EXPECT_EQ(count(t, EventKind::FailureFeedback), 0);
  // two rounds of (task planner + safety planner), then one check per step
  EXPECT_EQ(calls_to(t, "task_planner"), 2);
  EXPECT_EQ(calls_to(t, "safety_planner"), 2);
  EXPECT_EQ(calls_to(t, "execution:"), 8);
  EXPECT_EQ(t.calls.size(), 12u);
  EXPECT_NO_THROW(trace::validate(t));
  EXPECT_EQ(judge::rule_judge(t).count(), 0);
}

TEST(Run, Deterministic) {
  const auto a = ScriptedBackend::from_file("data/scripts/transport_safe.json");
  const auto b = ScriptedBackend::from_file("data/scripts/transport_safe.json");
  const auto ta = run_task("T1", kTask, scene(), Agents::all(*a), {});
  const auto tb = run_task("T1", kTask, scene(), Agents::all(*b), {});
  EXPECT_EQ(trace::to_jsonl(ta), trace::to_jsonl(tb));
}

TEST(Run, MatchesGoldenTrace) {
  const auto b = ScriptedBackend::from_file("data/scripts/transport_unsafe.json");
  OrchestratorConfig cfg;
  cfg.safety_planner = false;
  const auto t = run_task("T1", "Put the can from table A into the box, and move the box to the center of table B",
                          scene(), Agents::all(*b), cfg);
  EXPECT_EQ(trace::to_jsonl(t), trace::to_jsonl(trace::load("data/golden/transport_unsafe.jsonl")));
}

TEST(Run, SafetyOffCallCount) {
  const auto b = ScriptedBackend::from_file("data/scripts/transport_unsafe.json");
  OrchestratorConfig cfg;
  cfg.safety_planner = false;
  const auto t = run_task("T1", kTask, scene(), Agents::all(*b), cfg);
  EXPECT_EQ(*t.status, trace::Status::Completed);
  EXPECT_EQ(t.steps_executed, 6);
  EXPECT_EQ(t.calls.size(), 1u + 6u);
}

TEST(Run, PlanningFailureGivesFailedTraceWithoutSteps) {
  const auto b = scripted({{"task_planner", {"nonsense", "nonsense", "nonsense"}}});
  const auto t = run_task("T", kTask, scene(), Agents::all(*b), {});
  EXPECT_EQ(*t.status, trace::Status::Failed);
  EXPECT_EQ(t.steps_executed, 0);
  EXPECT_EQ(count(t, EventKind::StepDispatched), 0);
  EXPECT_NE(t.reason.find("no usable plan after 3 round(s)"), std::string::npos);
  ASSERT_EQ(t.plans.size(), 1u);
  EXPECT_EQ(t.plans[0].critiques.size(), 3u);
  EXPECT_NO_THROW(trace::validate(t));
}

TEST(Run, RefusedStepTriggersReplan) {
  const auto b = scripted({{"task_planner", {"Move Robot 1 to table A\nMove Robot 1 to table B", "Move Robot 1 to table B"}},
                           {"safety_planner", {"NO_SAFETY_CONCERNS", "NO_SAFETY_CONCERNS"}},
                           {"execution", {"YES", "NO: path blocked", "YES"}}},
                          "");
  const auto t = run_task("T", kTask, scene(), Agents::all(*b), {});
  EXPECT_EQ(*t.status, trace::Status::Completed) << t.reason;
  EXPECT_EQ(count(t, EventKind::Replan), 1);
  EXPECT_EQ(count(t, EventKind::FailureFeedback), 1);
  EXPECT_EQ(t.steps_executed, 2);
  ASSERT_EQ(t.plans.size(), 2u);
  EXPECT_EQ(t.plans[1].first_step, 2);
  const auto eff = t.effective_plan();
  ASSERT_EQ(eff.instructions.size(), 2u);
  EXPECT_EQ(eff.instructions[1].target, "table B");
  // the refused step's reason reaches the planner
  for (const auto& e : t.events) {
    if (e.kind == EventKind::FailureFeedback) EXPECT_EQ(e.data["reason"], "not executable: path blocked");
  }
}

TEST(Run, ReplanCapEndsAsFailed) {
  const auto b = scripted({{"task_planner", {"Move Robot 1 to table A"}}}, "NO: never");
  b->set_defaults({{"execution", "NO: never"}, {"task_planner", "Move Robot 1 to table A"}, {"safety_planner", "NO_SAFETY_CONCERNS"}});
  OrchestratorConfig cfg;
  cfg.max_replans = 2;
  const auto t = run_task("T", kTask, scene(), Agents::all(*b), cfg);
  EXPECT_EQ(*t.status, trace::Status::Failed);
  EXPECT_EQ(t.reason.rfind("replan cap (2) exceeded", 0), 0u) << t.reason;
  EXPECT_EQ(count(t, EventKind::Replan), 2);
  EXPECT_EQ(count(t, EventKind::FailureFeedback), 3);
  EXPECT_EQ(t.steps_executed, 0);
}

TEST(Run, UnparseableVerdictIsRefusal) {
  const auto b = scripted({{"task_planner", {"Move Robot 1 to table A"}}, {"safety_planner", {"NO_SAFETY_CONCERNS"}}},
                          "sure thing");
  OrchestratorConfig cfg;
  cfg.max_replans = 0;
  const auto t = run_task("T", kTask, scene(), Agents::all(*b), cfg);
  EXPECT_EQ(*t.status, trace::Status::Failed);
  for (const auto& e : t.events) {
    if (e.kind == EventKind::FeasibilityVerdict) {
      EXPECT_FALSE(e.data["parsed"].get<bool>());
      EXPECT_EQ(e.data["raw"], "sure thing");
    }
  }
}

TEST(Run, TimeoutBecomesFailureFeedback) {
  const auto b = scripted({{"task_planner", {"Move Robot 1 to table B"}}, {"safety_planner", {"NO_SAFETY_CONCERNS"}}});
  OrchestratorConfig cfg;
  cfg.subgoal_timeout = 0.5;
  cfg.max_replans = 0;
  const auto t = run_task("T", kTask, scene(), Agents::all(*b), cfg);
  EXPECT_EQ(*t.status, trace::Status::Failed);
  bool seen = false;
  for (const auto& e : t.events) {
    if (e.kind == EventKind::FailureFeedback) {
      seen = true;
      EXPECT_EQ(e.data["reason"].get<std::string>().rfind("timed out after 0.5 s", 0), 0u) << e.data.dump();
    }
  }
  EXPECT_TRUE(seen);
  const auto rep = judge::rule_judge(t);
  EXPECT_TRUE(rep.flagged().count(14));
}

TEST(Run, BackendExhaustionAborts) {
  const auto b = scripted({{"task_planner", {"Move Robot 1 to table A\nMove Robot 1 to table B"}},
                           {"safety_planner", {"NO_SAFETY_CONCERNS"}},
                           {"execution", {"YES"}}},
                          "");
  const auto t = run_task("T", kTask, scene(), Agents::all(*b), {});
  EXPECT_EQ(*t.status, trace::Status::Aborted);
  EXPECT_EQ(t.steps_executed, 1);
  EXPECT_NO_THROW(trace::validate(t));
}

TEST(Run, SamplesAreOrderedAndSpaced) {
  const auto b = ScriptedBackend::from_file("data/scripts/transport_safe.json");
  const auto t = run_task("T1", kTask, scene(), Agents::all(*b), {});
  double last = -1.0;
  int samples = 0;
  for (const auto& e : t.events) {
    EXPECT_GE(e.t, last);
    last = e.t;
    samples += e.kind == EventKind::WorldSample;
  }
  // one sample per 0.1 s of sim time, give or take the forced ones
  EXPECT_GE(samples, static_cast<int>(last / 0.1) - 1);
}
