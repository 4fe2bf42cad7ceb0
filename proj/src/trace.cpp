#include "safer/trace.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "safer/error.hpp"

namespace safer::trace {

using nlohmann::json;

namespace {

constexpr std::pair<EventKind, const char*> kEventNames[] = {
    {EventKind::StepDispatched, "StepDispatched"},   {EventKind::FeasibilityVerdict, "FeasibilityVerdict"},
    {EventKind::SubgoalReached, "SubgoalReached"},   {EventKind::SafetyInfeasible, "SafetyInfeasible"},
    {EventKind::FailureFeedback, "FailureFeedback"}, {EventKind::SuccessFeedback, "SuccessFeedback"},
    {EventKind::Replan, "Replan"},                   {EventKind::WorldSample, "WorldSample"},
};

json vec(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

agents::Accounting accounting_from(const json& j) {
  agents::Accounting a;
  a.latency_s = j.at("latency_s").get<double>();
  a.tokens_in = j.at("tokens_in").get<long>();
  a.tokens_out = j.at("tokens_out").get<long>();
  a.cost = j.at("cost").get<double>();
  return a;
}

json plan_version_json(const PlanVersion& p) {
  json j = {{"record", "plan"},          {"first_step", p.first_step}, {"rounds", p.rounds},
            {"approved", p.approved},    {"plan", p.plan_text},        {"constraints", json::array()},
            {"critiques", json::array()}, {"notes", p.notes}};
  for (const auto& c : p.constraints) j["constraints"].push_back(to_json(c));
  for (const auto& c : p.critiques) j["critiques"].push_back({{"round", c.round}, {"text", c.text}});
  return j;
}

PlanVersion plan_version_from(const json& j) {
  PlanVersion p;
  p.first_step = j.at("first_step").get<int>();
  p.rounds = j.at("rounds").get<int>();
  p.approved = j.at("approved").get<bool>();
  p.plan_text = j.at("plan").get<std::string>();
  for (const auto& c : j.at("constraints")) p.constraints.push_back(plan::parse_constraint(c.at("text").get<std::string>()));
  for (const auto& c : j.at("critiques")) p.critiques.push_back({c.at("round").get<int>(), c.at("text").get<std::string>()});
  p.notes = j.at("notes").get<std::vector<std::string>>();
  return p;
}

}  // namespace

std::string to_string(EventKind k) {
  for (const auto& [kind, name] : kEventNames) {
    if (kind == k) return name;
  }
  return "?";
}

EventKind event_kind_from_string(const std::string& s) {
  for (const auto& [kind, name] : kEventNames) {
    if (s == name) return kind;
  }
  throw SchemaError("unknown event kind '" + s + "'");
}

std::string to_string(Status s) {
  switch (s) {
    case Status::Completed: return "Completed";
    case Status::Failed: return "Failed";
    case Status::Aborted: return "Aborted";
  }
  return "?";
}

Status status_from_string(const std::string& s) {
  if (s == "Completed") return Status::Completed;
  if (s == "Failed") return Status::Failed;
  if (s == "Aborted") return Status::Aborted;
  throw SchemaError("unknown trace status '" + s + "'");
}

json to_json(const agents::Accounting& a) {
  return {{"latency_s", a.latency_s}, {"tokens_in", a.tokens_in}, {"tokens_out", a.tokens_out}, {"cost", a.cost}};
}

json to_json(const plan::Instruction& in) {
  json j = {{"index", in.index},   {"robot", in.robot},   {"verb", plan::to_string(in.verb)},
            {"target", in.target}, {"text", plan::render(in)}};
  if (!in.destination.empty()) j["destination"] = in.destination;
  if (!in.preposition.empty()) j["preposition"] = in.preposition;
  if (in.condition) j["condition"] = in.condition->render();
  return j;
}

json to_json(const plan::ConstraintSpec& s) {
  json j = {{"robot", s.robot},   {"subject", world::to_string(s.subject)}, {"kind", plan::to_string(s.kind)},
            {"target", s.target}, {"text", plan::render(s)}};
  if (s.radius) j["radius"] = *s.radius;
  if (s.v_max) j["v_max"] = *s.v_max;
  if (s.d_slow) j["d_slow"] = *s.d_slow;
  if (!s.scope.global()) j["steps"] = {*s.scope.first, *s.scope.last};
  return j;
}

json snapshot(const world::WorldState& w) {
  json robots = json::array();
  for (const auto& r : w.robots) {
    robots.push_back({{"id", r.id},
                      {"base", {r.base.x, r.base.y, r.base.theta}},
                      {"base_vel", vec(r.base_vel)},
                      {"ee", vec(r.ee_pos)},
                      {"ee_vel", vec(r.ee_vel)},
                      {"gripper", world::to_string(r.gripper)},
                      {"held", r.held ? json(*r.held) : json(nullptr)}});
  }
  json humans = json::array();
  for (const auto& h : w.humans) {
    humans.push_back({{"id", h.id}, {"p", vec(h.position)}, {"v", vec(h.velocity)}});
  }
  json objects = json::array();
  for (const auto& o : w.objects) {
    objects.push_back({{"id", o.id}, {"p", {o.pose.x, o.pose.y, o.height}}, {"theta", o.pose.theta}});
  }
  return {{"robots", robots}, {"humans", humans}, {"objects", objects}};
}

agents::Accounting Trace::totals() const {
  agents::Accounting sum;
  for (const auto& c : calls) sum += c.accounting;
  return sum;
}

plan::TaskPlan Trace::effective_plan() const {
  plan::TaskPlan out;
  out.task_id = task_id;
  std::string text;
  std::size_t last = plans.size();
  for (std::size_t v = 0; v < plans.size(); ++v) {
    if (!plans[v].plan_text.empty()) last = v;
  }
  for (std::size_t v = 0; v < plans.size(); ++v) {
    if (plans[v].plan_text.empty()) continue;
    const auto version = plan::parse_plan(plans[v].plan_text, task_id);
    if (v == last) {
      for (const auto& in : version.instructions) text += plan::render(in) + "\n";
      break;
    }
    // Steps of a superseded plan that reported success.
    for (const auto& e : events) {
      if (e.kind != EventKind::SuccessFeedback || e.data.value("plan", -1) != static_cast<int>(v)) continue;
      text += plan::render(version.instructions.at(e.data.at("index").get<int>())) + "\n";
    }
  }
  if (text.empty()) return out;
  return plan::parse_plan(text, task_id);
}

std::vector<plan::ConstraintSpec> Trace::all_constraints() const {
  std::vector<plan::ConstraintSpec> out;
  for (const auto& p : plans) {
    for (const auto& c : p.constraints) {
      if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
    }
  }
  return out;
}

world::WorldState Trace::initial_world() const { return world::load_scene(scene); }

void validate(const Trace& t) {
  if (t.task_id.empty()) throw SchemaError("trace has no task id");
  if (!t.status) throw SchemaError("trace has no final status");
  if (t.scene.is_null()) throw SchemaError("trace has no scene");
  double last = -1e300;
  for (std::size_t i = 0; i < t.events.size(); ++i) {
    if (t.events[i].t < last) throw SchemaError("trace event " + std::to_string(i) + " is out of time order");
    last = t.events[i].t;
  }
  for (const auto& c : t.calls) {
    if (c.accounting.latency_s < 0 || c.accounting.tokens_in < 0 || c.accounting.tokens_out < 0 || c.accounting.cost < 0) {
      throw SchemaError("negative accounting for call to '" + c.agent + "'");
    }
  }
}

std::string to_jsonl(const Trace& t) {
  std::ostringstream out;
  out << json{{"record", "header"},  {"schema_version", kTraceSchemaVersion}, {"task_id", t.task_id},
              {"task", t.task},      {"prompts", t.prompt_versions},          {"scene", t.scene}}
             .dump()
      << '\n';
  for (const auto& p : t.plans) out << plan_version_json(p).dump() << '\n';
  for (const auto& e : t.events) {
    out << json{{"record", "event"}, {"kind", to_string(e.kind)}, {"t", e.t}, {"step", e.step}, {"data", e.data}}.dump()
        << '\n';
  }
  for (const auto& c : t.calls) {
    out << json{{"record", "call"}, {"agent", c.agent}, {"ordinal", c.ordinal}, {"t", c.t},
                {"accounting", to_json(c.accounting)}}
               .dump()
        << '\n';
  }
  json final = {{"record", "final"},
                {"status", t.status ? json(to_string(*t.status)) : json(nullptr)},
                {"reason", t.reason},
                {"steps_executed", t.steps_executed},
                {"totals", to_json(t.totals())}};
  out << final.dump() << '\n';
  return out.str();
}

Trace from_jsonl(std::istream& in) {
  Trace t;
  std::string line;
  std::size_t n = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      const std::string record = j.at("record").get<std::string>();
      if (record == "header") {
        if (j.at("schema_version").get<int>() != kTraceSchemaVersion) throw SchemaError("unsupported trace schema_version");
        t.task_id = j.at("task_id").get<std::string>();
        t.task = j.at("task").get<std::string>();
        t.prompt_versions = j.at("prompts").get<std::vector<std::string>>();
        t.scene = j.at("scene");
        header = true;
      } else if (record == "plan") {
        t.plans.push_back(plan_version_from(j));
      } else if (record == "event") {
        t.events.push_back({event_kind_from_string(j.at("kind").get<std::string>()), j.at("t").get<double>(),
                            j.at("step").get<int>(), j.at("data")});
      } else if (record == "call") {
        t.calls.push_back({j.at("agent").get<std::string>(), j.at("ordinal").get<int>(), j.at("t").get<double>(),
                           accounting_from(j.at("accounting"))});
      } else if (record == "final") {
        if (!j.at("status").is_null()) t.status = status_from_string(j.at("status").get<std::string>());
        t.reason = j.at("reason").get<std::string>();
        t.steps_executed = j.at("steps_executed").get<int>();
      } else {
        throw SchemaError("unknown record '" + record + "'");
      }
    } catch (const json::exception& e) {
      throw SchemaError("trace line " + std::to_string(n) + ": " + e.what());
    } catch (const ParseError& e) {
      throw SchemaError("trace line " + std::to_string(n) + ": " + e.what());
    }
  }
  if (!header) throw SchemaError("trace has no header line");
  validate(t);
  return t;
}

Trace load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open trace '" + path + "'");
  return from_jsonl(in);
}

void save(const Trace& t, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << to_jsonl(t);
  if (!out) throw Error("failed writing '" + path + "'");
}

}  // namespace safer::trace
