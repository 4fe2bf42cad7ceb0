#include "safer/orchestrator.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "safer/prompts.hpp"

namespace safer::orchestrator {

using nlohmann::json;
using world::Vec2;
using world::Vec3;

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    out.push_back(trim(text.substr(start, end - start)));
    start = end + 1;
  }
  return out;
}

std::string number(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// Bullet-free form of a critique line.
std::string bare(const std::string& line) {
  std::size_t i = 0;
  if (!line.empty() && (line[0] == '-' || line[0] == '*')) {
    i = 1;
  } else {
    while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
    if (i > 0 && i < line.size() && (line[i] == '.' || line[i] == ')')) {
      ++i;
    } else {
      i = 0;
    }
  }
  return trim(line.substr(i));
}

}  // namespace

agents::Completion CallLog::call(agents::AgentBackend& backend, const std::string& agent,
                                 const std::vector<agents::ChatTurn>& messages, double t) {
  auto c = backend.complete(agent, messages);
  std::lock_guard lock(mutex_);
  entries_.push_back({agent, ordinals_[agent]++, t, c.accounting});
  return c;
}

std::vector<trace::CallEntry> CallLog::entries() const {
  std::lock_guard lock(mutex_);
  return entries_;
}

int CallLog::count(const std::string& prefix) const {
  std::lock_guard lock(mutex_);
  return static_cast<int>(std::count_if(entries_.begin(), entries_.end(),
                                        [&](const trace::CallEntry& e) { return e.agent.rfind(prefix, 0) == 0; }));
}

PlanningFailed::PlanningFailed(PlanningSession session)
    : Error("no usable plan after " + std::to_string(session.rounds) + " round(s)" +
            (session.critiques.empty() ? std::string() : ": " + session.critiques.back().text)),
      session_(std::move(session)) {}

Critique parse_critique(const std::string& text) {
  Critique c;
  enum class Section { None, Hazards, Constraints } section = Section::None;
  bool token = false;
  for (const auto& raw : lines_of(text)) {
    const std::string line = bare(raw);
    if (line.empty()) continue;
    const std::string key = lower(line);
    if (key == "hazards:" || key == "hazards") {
      section = Section::Hazards;
      continue;
    }
    if (key == "constraints:" || key == "constraints") {
      section = Section::Constraints;
      continue;
    }
    if (line == kApprovalToken) {
      token = true;
      continue;
    }
    if (section == Section::Constraints) {
      c.constraint_lines.push_back(line);
    } else if (section == Section::Hazards) {
      c.hazards.push_back(line);
    } else {
      try {
        plan::parse_constraint(line);
        c.constraint_lines.push_back(line);
      } catch (const ParseError&) {
        c.hazards.push_back(line);
      }
    }
  }
  c.approved = token && c.hazards.empty();
  return c;
}

PlanningSession plan_loop(const std::string& task, const world::WorldState& world, const Agents& agents,
                          const OrchestratorConfig& cfg, CallLog& log, const std::string& feedback, double t) {
  if (!agents.task_planner || (cfg.safety_planner && !agents.safety_planner)) {
    throw BackendError("plan_loop needs task_planner and safety_planner backends");
  }
  if (cfg.max_rounds < 1) throw SchemaError("max_rounds must be at least 1");
  PlanningSession s;
  s.task = task;
  const std::string caps = prompts::describe_capabilities(world);
  const std::string obs = prompts::describe_observations(world);
  const std::string preface = feedback.empty() ? "" : "\nExecution feedback:\n" + feedback + "\n";
  std::string history = preface;

  for (int round = 0; round < cfg.max_rounds; ++round) {
    const auto reply = log.call(*agents.task_planner, agents::kTaskPlanner,
                                prompts::build_prompt(prompts::Role::TaskPlanner, {{"capabilities", caps},
                                                                                   {"task", task},
                                                                                   {"observations", obs},
                                                                                   {"history", history}}),
                                t);
    s.plan_texts.push_back(reply.text);
    plan::TaskPlan candidate;
    std::string rejection;
    try {
      candidate = plan::parse_plan(reply.text);
      for (const auto& issue : plan::reference_issues(candidate, world)) {
        rejection += (rejection.empty() ? "" : "; ") + issue;
      }
    } catch (const ParseError& e) {
      rejection = e.what();
    }
    if (!rejection.empty()) {
      s.critiques.push_back({round, "PLAN_REJECTED: " + rejection});
      s.rounds = round + 1;
      history = preface + "\nYour previous reply could not be used: " + rejection +
                "\nReply again using only the instruction forms above.\n";
      continue;
    }
    s.plan = candidate;
    if (!cfg.safety_planner) {
      s.approved = true;
      break;
    }

    const auto critique = log.call(*agents.safety_planner, agents::kSafetyPlanner,
                                   prompts::build_prompt(prompts::Role::SafetyPlanner, {{"capabilities", caps},
                                                                                        {"task", task},
                                                                                        {"observations", obs},
                                                                                        {"plan", plan::render(candidate)}}),
                                   t);
    s.critiques.push_back({round, critique.text});
    s.rounds = round + 1;
    const Critique c = parse_critique(critique.text);
    for (const auto& line : c.constraint_lines) {
      try {
        const auto spec = plan::parse_constraint(line);
        plan::compile_constraint(spec, world, cfg.plan);
        if (std::find(s.constraints.begin(), s.constraints.end(), spec) == s.constraints.end()) {
          s.constraints.push_back(spec);
        }
      } catch (const Error& e) {
        s.notes.push_back("dropped constraint: " + std::string(e.what()));
      }
    }
    if (c.approved) {
      s.approved = true;
      break;
    }
    history = preface + "\nYour previous plan:\n" + plan::render(candidate) + "\nSafety feedback:\n" + critique.text +
              "\n\nRevise the plan to address the safety feedback.\n";
  }
  if (!s.plan) throw PlanningFailed(std::move(s));
  return s;
}

Verdict parse_verdict(const std::string& reply) {
  Verdict v;
  v.raw = reply;
  std::string text = trim(reply);
  while (!text.empty() && text.back() == '.') text.pop_back();
  const std::string key = lower(text);
  if (key == "yes") {
    v.executable = true;
    return v;
  }
  if (key.rfind("no:", 0) == 0 && !trim(text.substr(3)).empty() && text.find('\n') == std::string::npos) {
    v.reason = trim(text.substr(3));
    return v;
  }
  v.parsed = false;
  v.reason = "unparseable verdict";
  return v;
}

Verdict feasibility_check(const std::string& robot, const plan::Instruction& instruction, const world::WorldState& world,
                          agents::AgentBackend& backend, CallLog& log, double radius, double t) {
  const auto& r = world.robot(robot);
  const prompts::Context ctx = {{"robot", plan::robot_label(robot)},
                                {"capabilities", prompts::describe_capabilities(r)},
                                {"instruction", plan::render(instruction)},
                                {"radius", number(radius)},
                                {"observations", prompts::describe_observations(world, robot, radius)}};
  const auto reply = log.call(backend, agents::execution_agent(robot), prompts::build_prompt(prompts::Role::Execution, ctx), t);
  return parse_verdict(reply.text);
}

// ---------------------------------------------------------------------------
// Execution

namespace {

struct Hold {
  world::Pose2 base;
  Vec3 ee_local = Vec3::Zero();  // xy in the base frame, z absolute
};

class Executor {
 public:
  Executor(const std::string& task_id, const PlanningSession& session, world::WorldState world, const Agents& agents,
           const OrchestratorConfig& cfg, CallLog& log)
      : w_(std::move(world)), agents_(agents), cfg_(cfg), log_(log), task_(session.task) {
    tr_.task_id = task_id;
    tr_.task = session.task;
    tr_.scene = world::scene_to_json(w_);
    tr_.prompt_versions = prompts::template_versions();
    period_ticks_ = std::max<long>(1, std::lround(cfg.sample_period / cfg.dt));
    adopt(session, 0);
    for (const auto& r : w_.robots) set_hold(r.id);
    if (cfg_.intrinsic_limits) {
      for (const auto& r : w_.robots) intrinsic_[r.id] = control::intrinsic_barriers(w_, r.id);
    }
  }

  trace::Trace run() {
    sample();
    std::size_t i = 0;
    while (i < plan_.instructions.size()) {
      const auto& in = plan_.instructions[i];
      const int g = dispatched_++;
      const int index = static_cast<int>(i);
      event(trace::EventKind::StepDispatched, g,
            {{"plan", version_}, {"index", index}, {"robot", in.robot}, {"instruction", plan::render(in)}});
      Verdict v;
      try {
        v = feasibility_check(in.robot, in, w_, *agents_.execution, log_, cfg_.observation_radius, w_.time);
      } catch (const BackendError& e) {
        return finish(trace::Status::Aborted, e.what());
      }
      event(trace::EventKind::FeasibilityVerdict, g,
            {{"robot", in.robot}, {"executable", v.executable}, {"reason", v.reason}, {"parsed", v.parsed}, {"raw", v.raw}});

      std::string failure;
      if (!v.executable) {
        failure = "not executable: " + v.reason;
      } else {
        std::vector<Subgoal> goals;
        try {
          goals = plan::expand(in, w_, cfg_.plan);
        } catch (const Error& e) {
          failure = e.what();
        }
        for (const auto& goal : goals) {
          if (!run_subgoal(in.robot, goal, g, index, failure)) break;
        }
      }

      if (failure.empty()) {
        const FeedbackMsg msg{FeedbackMsg::Kind::Success, g, "completed: " + plan::render(in), w_.time};
        sample();
        event(trace::EventKind::SuccessFeedback, g,
              {{"plan", version_}, {"index", index}, {"progress", msg.text}, {"snapshot_t", msg.snapshot_t}});
        completed_.push_back(plan::render(in));
        ++i;
        continue;
      }
      const FeedbackMsg msg{FeedbackMsg::Kind::Failure, g, failure, w_.time};
      sample();
      event(trace::EventKind::FailureFeedback, g,
            {{"plan", version_}, {"index", index}, {"reason", msg.text}, {"snapshot_t", msg.snapshot_t}});
      if (auto done = replan(in, g, failure)) return *done;
      i = 0;
    }
    return finish(trace::Status::Completed, "");
  }

 private:
  void adopt(const PlanningSession& s, int first_step) {
    plan_ = *s.plan;
    trace::PlanVersion pv;
    pv.first_step = first_step;
    pv.rounds = s.rounds;
    pv.approved = s.approved;
    pv.plan_text = plan::render(plan_);
    pv.constraints = s.constraints;
    pv.critiques = s.critiques;
    pv.notes = s.notes;
    tr_.plans.push_back(pv);
    compiled_.clear();
    for (const auto& spec : s.constraints) {
      try {
        compiled_.push_back({spec, plan::compile_constraint(spec, w_, cfg_.plan)});
      } catch (const Error& e) {
        tr_.plans.back().notes.push_back("dropped constraint: " + std::string(e.what()));
      }
    }
    cached_index_ = -1;
  }

  std::optional<trace::Trace> replan(const plan::Instruction& in, int g, const std::string& failure) {
    if (replans_ >= cfg_.max_replans) {
      return finish(trace::Status::Failed,
                    "replan cap (" + std::to_string(cfg_.max_replans) + ") exceeded after: " + failure);
    }
    ++replans_;
    std::string feedback = "Step \"" + plan::render(in) + "\" failed: " + failure + "\nCompleted so far:\n";
    for (const auto& c : completed_) feedback += "- " + c + "\n";
    if (completed_.empty()) feedback += "- nothing\n";
    feedback += "Plan the remaining work from the current state.";
    try {
      const auto session = plan_loop(task_, w_, agents_, cfg_, log_, feedback, w_.time);
      ++version_;
      adopt(session, dispatched_);
      event(trace::EventKind::Replan, g,
            {{"plan", version_}, {"reason", failure}, {"rounds", session.rounds}, {"text", tr_.plans.back().plan_text}});
    } catch (const PlanningFailed& e) {
      return finish(trace::Status::Failed, "replanning failed: " + std::string(e.what()));
    } catch (const BackendError& e) {
      return finish(trace::Status::Aborted, e.what());
    }
    return std::nullopt;
  }

  trace::Trace finish(trace::Status status, const std::string& reason) {
    sample();
    tr_.status = status;
    tr_.reason = reason;
    tr_.steps_executed = static_cast<int>(completed_.size());
    tr_.calls = log_.entries();
    return tr_;
  }

  void event(trace::EventKind kind, int step, json data) { tr_.events.push_back({kind, w_.time, step, std::move(data)}); }

  void sample() {
    if (!tr_.events.empty() && tr_.events.back().kind == trace::EventKind::WorldSample && tr_.events.back().t == w_.time) {
      return;
    }
    event(trace::EventKind::WorldSample, -1, trace::snapshot(w_));
  }

  void set_hold(const std::string& id) {
    const auto& r = w_.robot(id);
    const Vec2 local = Eigen::Rotation2Dd(-r.base.theta) * (r.ee_pos.head<2>() - r.base.position());
    holds_[id] = {r.base, Vec3(local.x(), local.y(), r.ee_pos.z())};
  }

  Vec3 hold_ee(const world::RobotState& r) const {
    const auto& h = holds_.at(r.id);
    const Vec2 xy = r.base.position() + Eigen::Rotation2Dd(r.base.theta) * h.ee_local.head<2>();
    return {xy.x(), xy.y(), h.ee_local.z()};
  }

  void refresh_barriers(int index) {
    if (index == cached_index_) return;
    cached_index_ = index;
    active_.clear();
    for (const auto& r : w_.robots) {
      auto& [base, ee] = active_[r.id];
      if (auto it = intrinsic_.find(r.id); it != intrinsic_.end()) ee = it->second;
      for (const auto& c : compiled_) {
        if (!c.spec.scope.covers(index)) continue;
        for (const auto& bf : c.barriers) {
          if (bf.subject.robot != r.id) continue;
          if (bf.subject.slice == world::Slice::Ee) {
            ee.push_back(bf);
          } else if (r.mobile) {
            base.push_back(bf);
          }
        }
      }
    }
  }

  // One control tick: the active robot pursues `goal`, everyone else holds.
  void advance(const std::string& active, const Subgoal* goal, int step, int index) {
    refresh_barriers(index);
    world::Controls controls;
    for (const auto& r : w_.robots) {
      Vec3 twist = control::base_twist_to(r, holds_.at(r.id).base, cfg_.controller);
      Vec3 accel = control::ee_accel_to(r, hold_ee(r), cfg_.controller);
      if (goal && r.id == active) {
        if (const auto* b = std::get_if<BaseGoal>(&goal->kind)) {
          // Drive with the arm stowed.
          twist = control::base_twist_to(r, b->pose, cfg_.controller);
          accel = control::ee_accel_to(r, r.stowed_ee(r.base), cfg_.controller);
        }
        if (const auto* e = std::get_if<EeGoal>(&goal->kind)) accel = control::ee_accel_to(r, e->point, cfg_.controller);
      }
      Eigen::VectorXd nominal(world::kRobotControlDim);
      nominal << twist, accel;
      const auto& [base, ee] = active_.at(r.id);
      const auto f = control::filter(w_, r.id, nominal, base, ee, cfg_.gains);
      note_infeasible(r.id, world::Slice::Base, f.base_infeasible, step);
      note_infeasible(r.id, world::Slice::Ee, f.ee_infeasible, step);
      controls[r.id] = f.u;
    }
    w_ = world::step(w_, controls, cfg_.dt);
    if (++tick_ % period_ticks_ == 0) sample();
  }

  void note_infeasible(const std::string& robot, world::Slice slice, bool now, int step) {
    bool& was = infeasible_[{robot, slice}];
    if (now && !was) {
      event(trace::EventKind::SafetyInfeasible, step, {{"robot", robot}, {"slice", world::to_string(slice)}});
    }
    was = now;
  }

  bool run_subgoal(const std::string& robot, const Subgoal& goal, int step, int index, std::string& failure) {
    const double deadline = w_.time + cfg_.subgoal_timeout - 0.5 * cfg_.dt;
    json data = {{"robot", robot}, {"label", goal.label}, {"goal", describe(goal)}};
    try {
      if (const auto* g = std::get_if<GripperGoal>(&goal.kind)) {
        const auto held = w_.robot(robot).held;
        const auto out = world::set_gripper(w_, robot, g->state, g->object);
        if (!out.ok) {
          failure = goal.label + " failed: " + out.detail;
          return false;
        }
        if (g->state == world::Gripper::Open && held) {
          data["released"] = *held;
          const auto& o = w_.object(*held);
          data["object_p"] = {o.pose.x, o.pose.y, o.height};
        }
        if (g->state == world::Gripper::Closed && w_.robot(robot).held) data["grasped"] = *w_.robot(robot).held;
        sample();
      } else if (const auto* wf = std::get_if<WaitFor>(&goal.kind)) {
        if (!wf->blocking) {
          if (!evaluate(wf->condition, w_, cfg_.plan.standoff)) {
            failure = "check failed: " + wf->condition.render();
            return false;
          }
        } else {
          while (!evaluate(wf->condition, w_, cfg_.plan.standoff)) {
            if (w_.time >= deadline) {
              failure = "timed out waiting for " + wf->condition.render();
              return false;
            }
            advance(robot, nullptr, step, index);
          }
        }
      } else {
        while (!subgoal_achieved(w_, robot, goal, cfg_.tolerance, cfg_.plan.standoff)) {
          if (w_.time >= deadline) {
            failure = "timed out after " + number(cfg_.subgoal_timeout) + " s on " + goal.label + " (" + describe(goal) + ")";
            return false;
          }
          advance(robot, &goal, step, index);
        }
      }
    } catch (const ResolutionError& e) {
      failure = e.what();
      return false;
    }
    event(trace::EventKind::SubgoalReached, step, std::move(data));
    set_hold(robot);
    return true;
  }

  struct Compiled {
    plan::ConstraintSpec spec;
    std::vector<cbf::BarrierFunction> barriers;
  };

  world::WorldState w_;
  const Agents& agents_;
  const OrchestratorConfig& cfg_;
  CallLog& log_;
  std::string task_;
  trace::Trace tr_;
  plan::TaskPlan plan_;
  int version_ = 0;
  std::vector<Compiled> compiled_;
  std::map<std::string, std::vector<cbf::BarrierFunction>> intrinsic_;
  std::map<std::string, std::pair<std::vector<cbf::BarrierFunction>, std::vector<cbf::BarrierFunction>>> active_;
  int cached_index_ = -1;
  std::map<std::string, Hold> holds_;
  std::map<std::pair<std::string, world::Slice>, bool> infeasible_;
  std::vector<std::string> completed_;
  long tick_ = 0;
  long period_ticks_ = 10;
  int dispatched_ = 0;
  int replans_ = 0;
};

}  // namespace

trace::Trace execute(const std::string& task_id, const PlanningSession& session, world::WorldState world,
                     const Agents& agents, const OrchestratorConfig& config, CallLog& log) {
  if (!session.plan) throw PlanningFailed(session);
  if (!agents.execution) throw BackendError("execute needs an execution backend");
  if (!(config.dt > 0.0) || !(config.subgoal_timeout > 0.0) || !(config.sample_period > 0.0)) {
    throw SchemaError("dt, subgoal_timeout and sample_period must be positive");
  }
  const auto issues = plan::reference_issues(*session.plan, world);
  if (!issues.empty()) throw ResolutionError(issues.front());
  Executor ex(task_id, session, std::move(world), agents, config, log);
  return ex.run();
}

trace::Trace run_task(const std::string& task_id, const std::string& task, const world::WorldState& world,
                      const Agents& agents, const OrchestratorConfig& config) {
  CallLog log;
  auto failed = [&](trace::Status status, const std::string& reason, const PlanningSession* s) {
    trace::Trace tr;
    tr.task_id = task_id;
    tr.task = task;
    tr.scene = world::scene_to_json(world);
    tr.prompt_versions = prompts::template_versions();
    if (s) {
      trace::PlanVersion pv;
      pv.rounds = s->rounds;
      pv.critiques = s->critiques;
      pv.notes = s->notes;
      tr.plans.push_back(pv);
    }
    tr.events.push_back({trace::EventKind::WorldSample, world.time, -1, trace::snapshot(world)});
    tr.status = status;
    tr.reason = reason;
    tr.calls = log.entries();
    return tr;
  };
  PlanningSession session;
  try {
    session = plan_loop(task, world, agents, config, log);
  } catch (const PlanningFailed& e) {
    return failed(trace::Status::Failed, e.what(), &e.session());
  } catch (const BackendError& e) {
    return failed(trace::Status::Aborted, e.what(), nullptr);
  }
  return execute(task_id, session, world, agents, config, log);
}

}  // namespace safer::orchestrator
