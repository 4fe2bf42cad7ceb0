#include "safer/prompts.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <set>

#include "safer/error.hpp"
#include "safer/plan.hpp"

namespace safer::prompts::assets {
const std::map<std::string, std::string>& templates();
}

namespace safer::prompts {

namespace {

const std::string& raw_template(const std::string& name) {
  const auto& table = assets::templates();
  const auto it = table.find(name);
  if (it == table.end()) throw PromptError("no prompt template '" + name + "'");
  return it->second;
}

// Body without the version line.
std::string body(const std::string& name) {
  const std::string& text = raw_template(name);
  if (text.rfind("#v", 0) != 0) return text;
  const auto nl = text.find('\n');
  return nl == std::string::npos ? "" : text.substr(nl + 1);
}

bool field_char(char c) { return (c >= 'a' && c <= 'z') || c == '_'; }

// Placeholders in order of first appearance.
std::vector<std::string> placeholders(const std::string& text) {
  std::vector<std::string> out;
  for (std::size_t i = text.find("{{"); i != std::string::npos; i = text.find("{{", i + 2)) {
    std::size_t j = i + 2;
    while (j < text.size() && field_char(text[j])) ++j;
    if (j > i + 2 && text.compare(j, 2, "}}") == 0) {
      const std::string name = text.substr(i + 2, j - i - 2);
      if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(name);
    }
  }
  return out;
}

std::pair<std::string, std::string> names(Role role) {
  switch (role) {
    case Role::TaskPlanner: return {"task_planner_system", "task_planner_user"};
    case Role::SafetyPlanner: return {"safety_planner_system", "safety_planner_user"};
    case Role::Execution: return {"execution_system", "execution_user"};
    case Role::Judge: return {"judge_system", "judge_user"};
  }
  throw PromptError("unknown role");
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string label(const std::string& name, const std::string& id) { return name.empty() ? id : name; }

std::string kind_of(world::StaticKind k) {
  switch (k) {
    case world::StaticKind::Obstacle: return "obstacle";
    case world::StaticKind::Surface: return "surface";
    case world::StaticKind::Region: return "region";
  }
  return "static";
}

}  // namespace

std::string to_string(Role r) {
  switch (r) {
    case Role::TaskPlanner: return "task_planner";
    case Role::SafetyPlanner: return "safety_planner";
    case Role::Execution: return "execution";
    case Role::Judge: return "judge";
  }
  return "?";
}

std::string instantiate(const std::string& name, const Context& context) {
  const std::string text = body(name);
  std::string out;
  std::size_t pos = 0;
  for (const auto& field : placeholders(text)) {
    if (!context.count(field)) throw PromptError("template '" + name + "' needs context field '" + field + "'");
  }
  while (pos < text.size()) {
    const auto open = text.find("{{", pos);
    if (open == std::string::npos) {
      out += text.substr(pos);
      break;
    }
    std::size_t j = open + 2;
    while (j < text.size() && field_char(text[j])) ++j;
    if (j > open + 2 && text.compare(j, 2, "}}") == 0) {
      out += text.substr(pos, open - pos);
      out += context.at(text.substr(open + 2, j - open - 2));
      pos = j + 2;
    } else {
      out += text.substr(pos, open + 2 - pos);
      pos = open + 2;
    }
  }
  return out;
}

int template_version(const std::string& name) {
  const std::string& text = raw_template(name);
  if (text.rfind("#v", 0) != 0) return 0;
  return std::atoi(text.c_str() + 2);
}

std::vector<std::string> template_versions() {
  std::vector<std::string> out;
  for (const auto& [name, text] : assets::templates()) out.push_back(name + "@v" + std::to_string(template_version(name)));
  return out;
}

const std::vector<std::string>& required_fields(Role role) {
  static const auto table = [] {
    std::map<Role, std::vector<std::string>> t;
    for (Role r : {Role::TaskPlanner, Role::SafetyPlanner, Role::Execution, Role::Judge}) {
      const auto [sys, user] = names(r);
      auto fields = placeholders(body(sys));
      for (const auto& f : placeholders(body(user))) {
        if (std::find(fields.begin(), fields.end(), f) == fields.end()) fields.push_back(f);
      }
      t[r] = fields;
    }
    return t;
  }();
  return table.at(role);
}

std::vector<agents::ChatTurn> build_prompt(Role role, const Context& context) {
  const auto [sys, user] = names(role);
  return {{agents::Speaker::System, instantiate(sys, context)}, {agents::Speaker::User, instantiate(user, context)}};
}

std::string describe_capabilities(const world::RobotState& r) {
  std::string caps;
  for (const auto& c : r.capabilities) caps += (caps.empty() ? "" : ", ") + c;
  return plan::robot_label(r.id) + " (" + r.id + ", " + (r.mobile ? "mobile base" : "fixed base") + ", reach " +
         fmt(r.reach) + " m): " + caps;
}

std::string describe_capabilities(const world::WorldState& w) {
  std::string out;
  for (const auto& r : w.robots) out += "- " + describe_capabilities(r) + "\n";
  return out;
}

std::string describe_observations(const world::WorldState& w, const std::optional<std::string>& robot, double radius) {
  std::optional<world::Vec2> origin;
  if (robot) origin = w.robot(*robot).base.position();
  auto near = [&](const world::Vec2& p) { return !origin || (p - *origin).norm() <= radius; };
  std::string out;
  for (const auto& r : w.robots) {
    if (!near(r.base.position())) continue;
    out += "- " + plan::robot_label(r.id) + " (robot): base at (" + fmt(r.base.x) + ", " + fmt(r.base.y) +
           "), gripper " + world::to_string(r.gripper) + ", holding " + (r.held ? *r.held : "nothing") + "\n";
  }
  for (const auto& o : w.objects) {
    if (!near(o.pose.position())) continue;
    std::string held_by;
    for (const auto& r : w.robots) {
      if (r.held == o.id) held_by = ", held by " + plan::robot_label(r.id);
    }
    out += "- " + label(o.name, o.id) + " (object): at (" + fmt(o.pose.x) + ", " + fmt(o.pose.y) + ", " +
           fmt(o.height) + ")" + (o.container ? ", container" : "") + (o.graspable ? "" : ", not graspable") +
           held_by + "\n";
  }
  for (const auto& h : w.humans) {
    if (!near(h.position)) continue;
    out += "- " + label(h.name, h.id) + " (" + world::to_string(h.access) + " person): at (" + fmt(h.position.x()) +
           ", " + fmt(h.position.y()) + ")\n";
  }
  for (const auto& s : w.statics) {
    const auto c = geom::centroid(s.polygon);
    if (origin && geom::point_polygon(*origin, s.polygon).distance > radius) continue;
    out += "- " + label(s.name, s.id) + " (" + kind_of(s.kind) + "): centre (" + fmt(c.x()) + ", " + fmt(c.y()) +
           "), top " + fmt(s.height) + " m\n";
  }
  if (out.empty()) out = "- nothing\n";
  return out;
}

}  // namespace safer::prompts
