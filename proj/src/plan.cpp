#include "safer/plan.hpp"

#include <cctype>
#include <charconv>
#include <cmath>

#include "safer/error.hpp"

namespace safer::plan {

std::string to_string(Verb v) {
  switch (v) {
    case Verb::Move: return "move";
    case Verb::Pick: return "pick";
    case Verb::Place: return "place";
    case Verb::Release: return "release";
    case Verb::MoveObject: return "move_object";
    case Verb::Wait: return "wait";
    case Verb::Check: return "check";
  }
  return "?";
}

std::string capability(Verb v) { return to_string(v); }

std::string to_string(ConstraintKind k) {
  switch (k) {
    case ConstraintKind::NoCollide: return "no_collide";
    case ConstraintKind::KeepAway: return "keep_away";
    case ConstraintKind::SlowNear: return "slow_near";
    case ConstraintKind::WorkspaceLimit: return "workspace_limit";
  }
  return "?";
}

bool Instruction::operator==(const Instruction& o) const {
  return robot == o.robot && verb == o.verb && target == o.target && destination == o.destination &&
         preposition == o.preposition && condition == o.condition && index == o.index;
}

bool ConstraintSpec::operator==(const ConstraintSpec& o) const {
  return robot == o.robot && subject == o.subject && kind == o.kind && target == o.target &&
         radius == o.radius && v_max == o.v_max && d_slow == o.d_slow && scope == o.scope;
}

std::string robot_label(std::string_view id) {
  constexpr std::string_view prefix = "robot_";
  if (id.substr(0, prefix.size()) == prefix) return "Robot " + std::string(id.substr(prefix.size()));
  return std::string(id);
}

namespace {

// A line under parse: the cleaned text plus a lower-case twin with the same
// offsets, so keywords are matched case-insensitively and entities keep their
// spelling.
struct Cursor {
  std::string text;
  std::string lower;
  std::size_t line;
  std::string raw;

  [[noreturn]] void fail(const std::string& reason) const { throw ParseError(line, reason, raw); }
};

std::string lowered(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string collapse(std::string_view s) {
  std::string out;
  bool space = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      space = !out.empty();
      continue;
    }
    if (space) out += ' ';
    space = false;
    out += c;
  }
  return out;
}

// Leading "1." / "2)" / "-" / "*" bullets and a trailing period.
std::string strip_decoration(std::string s) {
  s = collapse(s);
  std::size_t i = 0;
  if (!s.empty() && (s[0] == '-' || s[0] == '*')) {
    i = 1;
  } else {
    while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
    if (i > 0 && i < s.size() && (s[i] == '.' || s[i] == ')')) {
      ++i;
    } else {
      i = 0;
    }
  }
  s = collapse(s.substr(i));
  while (!s.empty() && (s.back() == '.' || s.back() == ';')) s.pop_back();
  return collapse(s);
}

Cursor make_cursor(std::string_view line, std::size_t line_number) {
  Cursor c;
  c.raw = std::string(line);
  c.text = strip_decoration(std::string(line));
  c.lower = lowered(c.text);
  c.line = line_number;
  return c;
}

// Words that would make a line ambiguous if they appeared inside a name.
constexpr const char* kKeywords[] = {"to", "in", "on", "at", "holding", "must", "by", "within", "during"};

bool valid_entity(std::string_view e) {
  if (e.empty() || e.front() == ' ' || e.back() == ' ') return false;
  for (char c : e) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == ' ' || c == '_' || c == '-' || c == '\'')) {
      return false;
    }
  }
  std::string word;
  for (std::size_t i = 0; i <= e.size(); ++i) {
    if (i < e.size() && e[i] != ' ') {
      word += static_cast<char>(std::tolower(static_cast<unsigned char>(e[i])));
      continue;
    }
    for (const char* kw : kKeywords) {
      if (word == kw) return false;
    }
    word.clear();
  }
  return !world::normalize_name(e).empty();
}

std::string entity(const Cursor& c, std::size_t from, std::size_t to, const char* what) {
  if (from > to || to > c.text.size()) c.fail(std::string("missing ") + what);
  std::string e = c.text.substr(from, to - from);
  if (e.empty()) c.fail(std::string("missing ") + what);
  if (!valid_entity(e)) c.fail(std::string("malformed ") + what + " '" + e + "'");
  return e;
}

// "robot 3" or "robot_3" at `pos`; returns the id and advances `pos` past it.
std::optional<std::string> robot_at(const Cursor& c, std::size_t& pos) {
  std::size_t p = pos;
  if (c.lower.compare(p, 6, "robot ") == 0 || c.lower.compare(p, 6, "robot_") == 0) {
    p += 6;
  } else {
    return std::nullopt;
  }
  const std::size_t digits = p;
  while (p < c.lower.size() && std::isdigit(static_cast<unsigned char>(c.lower[p]))) ++p;
  if (p == digits || (p < c.lower.size() && c.lower[p] != ' ')) return std::nullopt;
  const std::string number = c.lower.substr(digits, p - digits);
  if (number.size() > 1 && number[0] == '0') return std::nullopt;
  pos = p;
  return "robot_" + number;
}

std::string require_robot(const Cursor& c, std::size_t& pos) {
  auto id = robot_at(c, pos);
  if (!id) c.fail("expected 'Robot <N>'");
  return *id;
}

// Expects `keyword` (with surrounding single spaces already accounted for) at pos.
bool eat(const Cursor& c, std::size_t& pos, std::string_view keyword) {
  if (c.lower.compare(pos, keyword.size(), keyword) != 0) return false;
  pos += keyword.size();
  return true;
}

std::size_t find_word(const Cursor& c, std::string_view word, std::size_t from) {
  const std::string needle = " " + std::string(word) + " ";
  return c.lower.find(needle, from);
}

Condition condition_from(const Cursor& c, std::size_t from) {
  Condition cond;
  const std::size_t holding = find_word(c, "holding", from);
  if (holding != std::string::npos) {
    cond.kind = Condition::Kind::Holding;
    cond.preposition = "holding";
    std::size_t p = from;
    cond.subject = plan::robot_label(require_robot(c, p));
    if (p != holding) c.fail("malformed condition");
    cond.target = entity(c, holding + 9, c.text.size(), "object");
    return cond;
  }
  const std::size_t at = find_word(c, "at", from);
  if (at != std::string::npos) {
    cond.kind = Condition::Kind::RobotAt;
    cond.preposition = "at";
    std::size_t p = from;
    cond.subject = plan::robot_label(require_robot(c, p));
    if (p != at) c.fail("malformed condition");
    cond.target = entity(c, at + 4, c.text.size(), "location");
    return cond;
  }
  const std::size_t on = find_word(c, "on", from);
  const std::size_t in = find_word(c, "in", from);
  const std::size_t split = std::min(on, in);
  if (split == std::string::npos) c.fail("malformed condition");
  cond.kind = Condition::Kind::ObjectAt;
  cond.preposition = split == on ? "on" : "in";
  std::size_t probe = from;
  if (robot_at(c, probe)) c.fail("malformed condition");
  cond.subject = entity(c, from, split, "object");
  cond.target = entity(c, split + 4, c.text.size(), "location");
  return cond;
}

}  // namespace

Condition parse_condition(std::string_view text, std::size_t line_number) {
  const Cursor c = make_cursor(text, line_number);
  if (c.text.empty()) c.fail("empty condition");
  return condition_from(c, 0);
}

Instruction parse_instruction(std::string_view line, std::size_t line_number, int index) {
  const Cursor c = make_cursor(line, line_number);
  if (c.text.empty()) c.fail("empty instruction");
  Instruction in;
  in.raw = std::string(line);
  in.index = index;
  std::size_t pos = 0;

  if (eat(c, pos, "move ")) {
    // Move Robot N to <location>
    in.robot = require_robot(c, pos);
    if (!eat(c, pos, " to ")) c.fail("expected 'to' after robot");
    in.verb = Verb::Move;
    in.target = entity(c, pos, c.text.size(), "location");
    return in;
  }

  in.robot = require_robot(c, pos);
  if (!eat(c, pos, " ")) c.fail("missing verb");
  if (eat(c, pos, "move to ")) {
    in.verb = Verb::Move;
    in.target = entity(c, pos, c.text.size(), "location");
  } else if (eat(c, pos, "move ")) {
    const std::size_t to = find_word(c, "to", pos - 1);
    if (to == std::string::npos) c.fail("expected 'move <object> to <location>'");
    in.verb = Verb::MoveObject;
    in.target = entity(c, pos, to, "object");
    in.destination = entity(c, to + 4, c.text.size(), "location");
  } else if (eat(c, pos, "pick ")) {
    in.verb = Verb::Pick;
    if (c.lower.compare(pos, 3, "up ") == 0) pos += 3;
    in.target = entity(c, pos, c.text.size(), "object");
  } else if (eat(c, pos, "place ")) {
    const std::size_t on = find_word(c, "on", pos - 1);
    const std::size_t into = find_word(c, "in", pos - 1);
    const std::size_t split = std::min(on, into);
    if (split == std::string::npos) c.fail("expected 'place <object> in|on <location>'");
    in.verb = Verb::Place;
    in.preposition = split == on ? "on" : "in";
    in.target = entity(c, pos, split, "object");
    in.destination = entity(c, split + 4, c.text.size(), "location");
  } else if (eat(c, pos, "release ")) {
    in.verb = Verb::Release;
    in.target = entity(c, pos, c.text.size(), "object");
  } else if (eat(c, pos, "wait for ")) {
    in.verb = Verb::Wait;
    in.condition = condition_from(c, pos);
  } else if (eat(c, pos, "check ")) {
    in.verb = Verb::Check;
    in.condition = condition_from(c, pos);
  } else {
    const std::size_t end = c.lower.find(' ', pos);
    c.fail("unknown verb '" + c.text.substr(pos, end == std::string::npos ? std::string::npos : end - pos) + "'");
  }
  return in;
}

TaskPlan parse_plan(std::string_view text, std::string task_id) {
  TaskPlan plan;
  plan.task_id = std::move(task_id);
  std::size_t line_number = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++line_number;
    if (!collapse(line).empty()) {
      plan.instructions.push_back(
          parse_instruction(line, line_number, static_cast<int>(plan.instructions.size())));
    }
    start = end + 1;
  }
  if (plan.instructions.empty()) throw ParseError(1, "empty plan", std::string(text));
  for (const auto& in : plan.instructions) {
    if (in.condition && in.index + 1 < static_cast<int>(plan.instructions.size())) {
      plan.preconditions.emplace(in.index + 1, *in.condition);
    }
  }
  return plan;
}

std::string render(const Instruction& in) {
  const std::string r = robot_label(in.robot);
  switch (in.verb) {
    case Verb::Move: return "Move " + r + " to " + in.target;
    case Verb::Pick: return r + " pick " + in.target;
    case Verb::Place: return r + " place " + in.target + " " + in.preposition + " " + in.destination;
    case Verb::Release: return r + " release " + in.target;
    case Verb::MoveObject: return r + " move " + in.target + " to " + in.destination;
    case Verb::Wait: return r + " wait for " + in.condition->render();
    case Verb::Check: return r + " check " + in.condition->render();
  }
  return {};
}

std::string render(const TaskPlan& plan) {
  std::string out;
  for (const auto& in : plan.instructions) out += render(in) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Constraints

namespace {

double positive_number(const Cursor& c, std::size_t from, std::size_t to, const char* what) {
  const std::string s = c.text.substr(from, to - from);
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty()) {
    c.fail(std::string("malformed ") + what + " '" + s + "'");
  }
  if (!(v > 0.0) || !std::isfinite(v)) c.fail(std::string(what) + " must be positive");
  return v;
}

int step_number(const Cursor& c, const std::string& s) {
  int v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty() || v < 1) {
    c.fail("malformed step number '" + s + "'");
  }
  return v;
}

std::string number_text(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// Strips a trailing " during steps a-b" / " at step k"; returns the end of the
// remaining text.
std::size_t scope_suffix(const Cursor& c, Scope& scope) {
  const std::size_t during = c.lower.rfind(" during steps ");
  if (during != std::string::npos) {
    const std::string range = c.text.substr(during + 14);
    const std::size_t dash = range.find('-');
    if (dash == std::string::npos) c.fail("malformed step range '" + range + "'");
    const int a = step_number(c, range.substr(0, dash));
    const int b = step_number(c, range.substr(dash + 1));
    if (b < a) c.fail("step range is reversed");
    scope.first = a - 1;
    scope.last = b - 1;
    return during;
  }
  const std::size_t at = c.lower.rfind(" at step ");
  if (at != std::string::npos) {
    const int k = step_number(c, c.text.substr(at + 9));
    scope.first = k - 1;
    scope.last = k - 1;
    return at;
  }
  return c.text.size();
}

}  // namespace

ConstraintSpec parse_constraint(std::string_view line, std::size_t line_number) {
  const Cursor c = make_cursor(line, line_number);
  if (c.text.empty()) c.fail("empty constraint");
  ConstraintSpec spec;
  spec.raw = std::string(line);
  std::size_t pos = 0;
  spec.robot = require_robot(c, pos);
  if (eat(c, pos, " manipulator")) {
    spec.subject = world::Slice::Ee;
  } else if (eat(c, pos, " base")) {
    spec.subject = world::Slice::Base;
  }
  if (!eat(c, pos, " must ")) c.fail("expected 'must'");
  std::size_t end = scope_suffix(c, spec.scope);

  if (eat(c, pos, "not collide with ")) {
    spec.kind = ConstraintKind::NoCollide;
    spec.target = entity(c, pos, end, "entity");
  } else if (eat(c, pos, "stay away from ")) {
    spec.kind = ConstraintKind::KeepAway;
    const std::size_t by = c.lower.rfind(" by ", end);
    if (by != std::string::npos && by > pos) {
      if (c.lower.compare(end - 2, 2, " m") != 0) c.fail("radius needs a unit, e.g. 'by 1.5 m'");
      spec.radius = positive_number(c, by + 4, end - 2, "radius");
      end = by;
    }
    spec.target = entity(c, pos, end, "target");
  } else if (eat(c, pos, "slow down near ")) {
    spec.kind = ConstraintKind::SlowNear;
    const std::size_t within = c.lower.rfind(" within ", end);
    if (within != std::string::npos && within > pos) {
      if (c.lower.compare(end - 2, 2, " m") != 0) c.fail("distance needs a unit, e.g. 'within 1.5 m'");
      spec.d_slow = positive_number(c, within + 8, end - 2, "distance");
      end = within;
    }
    const std::size_t to = c.lower.rfind(" to ", end);
    if (to != std::string::npos && to > pos) {
      if (c.lower.compare(end - 4, 4, " m/s") != 0) c.fail("speed needs a unit, e.g. 'to 0.3 m/s'");
      spec.v_max = positive_number(c, to + 4, end - 4, "speed");
      end = to;
    }
    spec.target = entity(c, pos, end, "target");
  } else if (eat(c, pos, "stay within ")) {
    spec.kind = ConstraintKind::WorkspaceLimit;
    spec.target = entity(c, pos, end, "region");
  } else {
    const std::size_t stop = c.lower.find(' ', pos);
    c.fail("unknown directive 'must " +
           c.text.substr(pos, stop == std::string::npos ? std::string::npos : stop - pos) + "'");
  }
  return spec;
}

std::vector<ConstraintSpec> parse_constraints(std::string_view text) {
  std::vector<ConstraintSpec> out;
  std::size_t line_number = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++line_number;
    if (!collapse(line).empty()) out.push_back(parse_constraint(line, line_number));
    start = end + 1;
  }
  if (out.empty()) throw ParseError(1, "empty constraint set", std::string(text));
  return out;
}

std::string render(const ConstraintSpec& s) {
  std::string out = robot_label(s.robot);
  if (s.subject == world::Slice::Ee) out += " manipulator";
  switch (s.kind) {
    case ConstraintKind::NoCollide:
      out += " must not collide with " + s.target;
      break;
    case ConstraintKind::KeepAway:
      out += " must stay away from " + s.target;
      if (s.radius) out += " by " + number_text(*s.radius) + " m";
      break;
    case ConstraintKind::SlowNear:
      out += " must slow down near " + s.target;
      if (s.v_max) out += " to " + number_text(*s.v_max) + " m/s";
      if (s.d_slow) out += " within " + number_text(*s.d_slow) + " m";
      break;
    case ConstraintKind::WorkspaceLimit:
      out += " must stay within " + s.target;
      break;
  }
  if (!s.scope.global()) {
    if (*s.scope.first == *s.scope.last) {
      out += " at step " + std::to_string(*s.scope.first + 1);
    } else {
      out += " during steps " + std::to_string(*s.scope.first + 1) + "-" + std::to_string(*s.scope.last + 1);
    }
  }
  return out;
}

std::string render(const std::vector<ConstraintSpec>& specs) {
  std::string out;
  for (const auto& s : specs) out += render(s) + "\n";
  return out;
}

}  // namespace safer::plan
