#include "safer/world.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "safer/error.hpp"

namespace safer::world {

using nlohmann::json;

double normalize_angle(double theta) {
  if (!std::isfinite(theta)) return theta;
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double t = std::fmod(theta, two_pi);
  if (t <= -std::numbers::pi) t += two_pi;
  if (t > std::numbers::pi) t -= two_pi;
  return t;
}

std::string to_string(Gripper g) { return g == Gripper::Open ? "open" : "closed"; }
std::string to_string(Access a) { return a == Access::Technical ? "technical" : "non_technical"; }
std::string to_string(Slice s) { return s == Slice::Base ? "base" : "ee"; }

bool RobotState::can(std::string_view capability) const {
  return std::find(capabilities.begin(), capabilities.end(), capability) != capabilities.end();
}

Vec3 RobotState::stowed_ee(const Pose2& at) const {
  const Vec2 xy = at.position() + Eigen::Rotation2Dd(at.theta) * ee_home.head<2>();
  return {xy.x(), xy.y(), ee_home.z()};
}

Vec3 ObjectState::grasp_point() const {
  Vec3 offset = grasp ? grasp->offset : Vec3::Zero();
  const Vec2 xy = Eigen::Rotation2Dd(pose.theta) * offset.head<2>();
  return {pose.x + xy.x(), pose.y + xy.y(), height + offset.z()};
}

geom::Shape ObjectState::world_footprint() const {
  return std::visit(
      [&](const auto& s) -> geom::Shape {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, geom::Polygon>) {
          return geom::transform(s, pose.theta, pose.position());
        } else if constexpr (std::is_same_v<T, geom::Circle>) {
          return geom::Circle{pose.position() + Eigen::Rotation2Dd(pose.theta) * s.center, s.radius};
        } else {
          return geom::Point{pose.position()};
        }
      },
      footprint);
}

Vec2 HumanPath::position_at(double t) const {
  if (waypoints.empty()) return Vec2::Zero();
  if (t <= waypoints.front().t) return waypoints.front().position;
  for (std::size_t i = 0; i + 1 < waypoints.size(); ++i) {
    const auto& a = waypoints[i];
    const auto& b = waypoints[i + 1];
    if (t < b.t) {
      const double s = (t - a.t) / (b.t - a.t);
      return a.position + s * (b.position - a.position);
    }
  }
  return waypoints.back().position;
}

Vec2 HumanPath::velocity_at(double t) const {
  for (std::size_t i = 0; i + 1 < waypoints.size(); ++i) {
    const auto& a = waypoints[i];
    const auto& b = waypoints[i + 1];
    if (t >= a.t && t < b.t) return (b.position - a.position) / (b.t - a.t);
  }
  return Vec2::Zero();
}

namespace {

template <typename T>
T* find_by_id(std::vector<T>& items, std::string_view id) {
  for (auto& item : items) {
    if (item.id == id) return &item;
  }
  return nullptr;
}

template <typename T>
const T* find_by_id(const std::vector<T>& items, std::string_view id) {
  for (const auto& item : items) {
    if (item.id == id) return &item;
  }
  return nullptr;
}

template <typename T>
T& get_by_id(std::vector<T>& items, std::string_view id, const char* what) {
  if (auto* p = find_by_id(items, id)) return *p;
  throw ResolutionError(std::string("no ") + what + " with id '" + std::string(id) + "'");
}

}  // namespace

const RobotState& WorldState::robot(std::string_view id) const {
  return get_by_id(const_cast<std::vector<RobotState>&>(robots), id, "robot");
}
RobotState& WorldState::robot(std::string_view id) { return get_by_id(robots, id, "robot"); }
const ObjectState& WorldState::object(std::string_view id) const {
  return get_by_id(const_cast<std::vector<ObjectState>&>(objects), id, "object");
}
ObjectState& WorldState::object(std::string_view id) { return get_by_id(objects, id, "object"); }
const HumanState& WorldState::human(std::string_view id) const {
  return get_by_id(const_cast<std::vector<HumanState>&>(humans), id, "human");
}
const StaticEntity& WorldState::static_entity(std::string_view id) const {
  return get_by_id(const_cast<std::vector<StaticEntity>&>(statics), id, "static entity");
}
const RobotState* WorldState::find_robot(std::string_view id) const { return find_by_id(robots, id); }
const ObjectState* WorldState::find_object(std::string_view id) const { return find_by_id(objects, id); }
const HumanState* WorldState::find_human(std::string_view id) const { return find_by_id(humans, id); }
const StaticEntity* WorldState::find_static(std::string_view id) const { return find_by_id(statics, id); }

std::string normalize_name(std::string_view text) {
  std::string lowered;
  lowered.reserve(text.size());
  for (char c : text) {
    if (c == '_' || c == '-') c = ' ';
    lowered.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  std::istringstream in(lowered);
  std::string word, out;
  while (in >> word) {
    if (word == "the" || word == "a" || word == "an") continue;
    if (!out.empty()) out.push_back(' ');
    out += word;
  }
  return out;
}

std::optional<EntityHandle> resolve(const WorldState& world, std::string_view reference) {
  const std::string key = normalize_name(reference);
  if (key.empty()) return std::nullopt;
  auto matches = [&](const std::string& id, const std::string& name,
                     const std::vector<std::string>& aliases) {
    if (normalize_name(id) == key || (!name.empty() && normalize_name(name) == key)) return true;
    return std::any_of(aliases.begin(), aliases.end(),
                       [&](const std::string& a) { return normalize_name(a) == key; });
  };
  static const std::vector<std::string> none;
  for (const auto& r : world.robots) {
    if (matches(r.id, r.name, none)) return EntityHandle{EntityKind::Robot, r.id};
  }
  for (const auto& o : world.objects) {
    if (matches(o.id, o.name, o.aliases)) return EntityHandle{EntityKind::Object, o.id};
  }
  for (const auto& h : world.humans) {
    if (matches(h.id, h.name, none)) return EntityHandle{EntityKind::Human, h.id};
  }
  for (const auto& s : world.statics) {
    if (matches(s.id, s.name, s.aliases)) return EntityHandle{EntityKind::Static, s.id};
  }
  return std::nullopt;
}

Vec2 entity_position(const WorldState& world, const EntityHandle& handle) {
  switch (handle.kind) {
    case EntityKind::Robot:
      return world.robot(handle.id).base.position();
    case EntityKind::Object:
      return world.object(handle.id).pose.position();
    case EntityKind::Human:
      return world.human(handle.id).position;
    case EntityKind::Static:
      return geom::centroid(world.static_entity(handle.id).polygon);
  }
  return Vec2::Zero();
}

geom::Shape entity_shape(const WorldState& world, const EntityHandle& handle) {
  switch (handle.kind) {
    case EntityKind::Robot:
      return world.robot(handle.id).footprint();
    case EntityKind::Object:
      return world.object(handle.id).world_footprint();
    case EntityKind::Human:
      return geom::Point{world.human(handle.id).position};
    case EntityKind::Static:
      return world.static_entity(handle.id).polygon;
  }
  return geom::Point{Vec2::Zero()};
}

double entity_top(const WorldState& world, const EntityHandle& handle) {
  switch (handle.kind) {
    case EntityKind::Object:
      return world.object(handle.id).height;
    case EntityKind::Static:
      return world.static_entity(handle.id).height;
    case EntityKind::Robot:
      return world.robot(handle.id).ee_pos.z();
    case EntityKind::Human:
      break;
  }
  throw ResolutionError("entity '" + handle.id + "' has no surface to place on");
}

DynamicsModel DynamicsModel::single_integrator(int n) {
  DynamicsModel m;
  m.state_dim = n;
  m.control_dim = n;
  m.f = [n](const VectorXd&) { return VectorXd::Zero(n); };
  m.g = [n](const VectorXd&) { return MatrixXd::Identity(n, n); };
  return m;
}

DynamicsModel DynamicsModel::double_integrator(int n) {
  DynamicsModel m;
  m.state_dim = 2 * n;
  m.control_dim = n;
  m.f = [n](const VectorXd& x) {
    VectorXd out = VectorXd::Zero(2 * n);
    out.head(n) = x.tail(n);
    return out;
  };
  m.g = [n](const VectorXd&) {
    MatrixXd out = MatrixXd::Zero(2 * n, n);
    out.bottomRows(n).setIdentity();
    return out;
  };
  return m;
}

DynamicsModel DynamicsModel::base() {
  DynamicsModel m;
  m.state_dim = 3;
  m.control_dim = 3;
  m.f = [](const VectorXd&) { return VectorXd::Zero(3); };
  m.g = [](const VectorXd& x) {
    MatrixXd out = MatrixXd::Zero(3, 3);
    out.topLeftCorner<2, 2>() = Eigen::Rotation2Dd(x(2)).toRotationMatrix();
    out(2, 2) = 1.0;
    return out;
  };
  return m;
}

DynamicsModel DynamicsModel::end_effector(const Vec2& carrier_velocity) {
  DynamicsModel m = double_integrator(3);
  m.f = [w = carrier_velocity](const VectorXd& x) {
    VectorXd out = VectorXd::Zero(6);
    out.head<3>() = x.tail<3>();
    out(0) += w.x();
    out(1) += w.y();
    return out;
  };
  return m;
}

VectorXd slice_state(const RobotState& robot, Slice slice) {
  if (slice == Slice::Base) return Eigen::Vector3d(robot.base.x, robot.base.y, robot.base.theta);
  VectorXd x(6);
  x << robot.ee_pos, robot.ee_vel;
  return x;
}

Vec2 base_linear_velocity(const RobotState& robot) { return robot.base_vel.head<2>(); }

DynamicsModel slice_dynamics(const RobotState& robot, Slice slice) {
  if (slice == Slice::Base) return DynamicsModel::base();
  return DynamicsModel::end_effector(base_linear_velocity(robot));
}

WorldState step(const WorldState& world, const Controls& controls, double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw DimensionError("dt must be positive and finite");
  WorldState next = world;
  for (auto& r : next.robots) {
    auto it = controls.find(r.id);
    if (it == controls.end()) throw DimensionError("missing control for robot '" + r.id + "'");
    const VectorXd& u = it->second;
    if (u.size() != kRobotControlDim) {
      throw DimensionError("control for robot '" + r.id + "' has dimension " +
                           std::to_string(u.size()) + ", expected " +
                           std::to_string(kRobotControlDim));
    }
    if (!u.allFinite()) throw DimensionError("non-finite control for robot '" + r.id + "'");

    Vec3 twist = r.mobile ? Vec3(u.head<3>()) : Vec3::Zero();
    const Vec2 v_world = Eigen::Rotation2Dd(r.base.theta) * twist.head<2>();
    r.base_vel = Vec3(v_world.x(), v_world.y(), twist.z());
    r.base = Pose2(r.base.x + v_world.x() * dt, r.base.y + v_world.y() * dt,
                   r.base.theta + twist.z() * dt);

    r.ee_vel += u.tail<3>() * dt;
    r.ee_pos += r.ee_vel * dt;
    r.ee_pos.x() += v_world.x() * dt;
    r.ee_pos.y() += v_world.y() * dt;
  }
  // Snapped to 1e-9 s so long runs keep clean timestamps.
  next.time = std::round((world.time + dt) * 1e9) / 1e9;
  for (const auto& path : next.human_paths) {
    for (auto& h : next.humans) {
      if (h.id != path.human) continue;
      h.position = path.position_at(next.time);
      h.velocity = path.velocity_at(next.time);
    }
  }
  for (const auto& r : next.robots) {
    if (!r.held) continue;
    auto& obj = next.object(*r.held);
    obj.pose.x = r.ee_pos.x();
    obj.pose.y = r.ee_pos.y();
    obj.height = r.ee_pos.z();
  }
  return next;
}

GraspOutcome set_gripper(WorldState& world, std::string_view robot_id, Gripper state,
                         const std::optional<std::string>& object, double tolerance) {
  RobotState& robot = world.robot(robot_id);
  if (state == Gripper::Open) {
    GraspOutcome out{true, robot.held ? "released " + *robot.held : "opened empty"};
    if (robot.held) {
      // The object comes to rest with its grasp point at the gripper.
      auto& obj = world.object(*robot.held);
      if (obj.grasp) {
        const Vec2 off = Eigen::Rotation2Dd(obj.pose.theta) * obj.grasp->offset.head<2>();
        obj.pose.x -= off.x();
        obj.pose.y -= off.y();
        obj.height -= obj.grasp->offset.z();
      }
    }
    robot.held.reset();
    robot.gripper = Gripper::Open;
    return out;
  }
  if (robot.held) {
    robot.gripper = Gripper::Closed;
    return {false, "already holding " + *robot.held};
  }
  robot.gripper = Gripper::Closed;
  const ObjectState* best = nullptr;
  double best_d = tolerance;
  for (const auto& obj : world.objects) {
    if (object && obj.id != *object) continue;
    if (!obj.graspable) continue;
    const bool held_elsewhere = std::any_of(world.robots.begin(), world.robots.end(),
                                            [&](const RobotState& r) { return r.held == obj.id; });
    if (held_elsewhere) continue;
    const double d = (obj.grasp_point() - robot.ee_pos).norm();
    if (d <= best_d) {
      best_d = d;
      best = &obj;
    }
  }
  if (!best) {
    return {false, object ? "grasp failed: " + *object + " not within reach of gripper"
                          : "grasp failed: nothing to grasp"};
  }
  robot.held = best->id;
  auto& obj = world.object(best->id);
  obj.pose.x = robot.ee_pos.x();
  obj.pose.y = robot.ee_pos.y();
  obj.height = robot.ee_pos.z();
  return {true, "grasped " + best->id};
}

// ---------------------------------------------------------------------------
// Scene documents

namespace {

[[noreturn]] void schema_fail(const std::string& what) { throw SchemaError("scene: " + what); }

const json& require(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) schema_fail(where + " is missing '" + key + "'");
  return j.at(key);
}

double number(const json& j, const std::string& where) {
  if (!j.is_number()) schema_fail(where + " must be a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) schema_fail(where + " must be finite");
  return v;
}

double number_or(const json& j, const char* key, double fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  return number(j.at(key), where + "." + key);
}

std::vector<double> numbers(const json& j, std::size_t n, const std::string& where) {
  if (!j.is_array() || j.size() != n) {
    schema_fail(where + " must be an array of " + std::to_string(n) + " numbers");
  }
  std::vector<double> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(number(j[i], where));
  return out;
}

Vec2 vec2(const json& j, const std::string& where) {
  auto v = numbers(j, 2, where);
  return {v[0], v[1]};
}

Vec3 vec3(const json& j, const std::string& where) {
  auto v = numbers(j, 3, where);
  return {v[0], v[1], v[2]};
}

Pose2 pose(const json& j, const std::string& where) {
  auto v = numbers(j, 3, where);
  return Pose2(v[0], v[1], v[2]);
}

std::string string_field(const json& j, const char* key, const std::string& where) {
  const json& v = require(j, key, where);
  if (!v.is_string() || v.get<std::string>().empty()) {
    schema_fail(where + "." + key + " must be a non-empty string");
  }
  return v.get<std::string>();
}

std::vector<std::string> string_list(const json& j, const char* key, const std::string& where) {
  std::vector<std::string> out;
  if (!j.contains(key)) return out;
  if (!j.at(key).is_array()) schema_fail(where + "." + key + " must be an array of strings");
  for (const auto& s : j.at(key)) {
    if (!s.is_string()) schema_fail(where + "." + key + " must be an array of strings");
    out.push_back(s.get<std::string>());
  }
  return out;
}

geom::Polygon polygon(const json& j, const std::string& where) {
  geom::Polygon poly;
  if (j.is_object() && j.contains("box")) {
    const auto& box = j.at("box");
    const Vec2 c = vec2(require(box, "center", where + ".box"), where + ".box.center");
    const Vec2 size = vec2(require(box, "size", where + ".box"), where + ".box.size");
    if (size.x() <= 0.0 || size.y() <= 0.0) schema_fail(where + ".box.size must be positive");
    const Vec2 h = size / 2.0;
    poly.vertices = {c + Vec2(-h.x(), -h.y()), c + Vec2(h.x(), -h.y()), c + Vec2(h.x(), h.y()),
                     c + Vec2(-h.x(), h.y())};
  } else {
    const json& pts = j.is_array() ? j : require(j, "polygon", where);
    if (!pts.is_array()) schema_fail(where + " polygon must be an array of [x, y]");
    for (std::size_t i = 0; i < pts.size(); ++i) {
      poly.vertices.push_back(vec2(pts[i], where + ".polygon[" + std::to_string(i) + "]"));
    }
  }
  try {
    geom::validate_polygon(poly);
  } catch (const GeometryError& e) {
    schema_fail(where + " has a non-convex footprint (" + e.what() + ")");
  }
  return poly;
}

json polygon_json(const geom::Polygon& poly) {
  json out = json::array();
  for (const auto& v : poly.vertices) out.push_back({v.x(), v.y()});
  return out;
}

RobotState parse_robot(const json& j, const std::string& where) {
  RobotState r;
  r.id = string_field(j, "id", where);
  r.name = j.value("name", "");
  r.base = pose(require(j, "base", where), where + ".base");
  r.base_radius = number_or(j, "base_radius", r.base_radius, where);
  r.reach = number_or(j, "reach", r.reach, where);
  if (r.base_radius <= 0.0 || r.reach <= 0.0) schema_fail(where + " radii must be positive");
  r.mobile = j.value("mobile", true);
  if (j.contains("ee_home")) r.ee_home = vec3(j.at("ee_home"), where + ".ee_home");
  r.ee_pos = j.contains("ee") ? vec3(j.at("ee"), where + ".ee") : r.stowed_ee(r.base);
  r.capabilities = string_list(j, "capabilities", where);
  if (r.capabilities.empty()) {
    r.capabilities = {"pick", "place", "release", "move_object", "wait", "check"};
    if (r.mobile) r.capabilities.insert(r.capabilities.begin(), "move");
  }
  if (j.contains("limits")) {
    const auto& l = j.at("limits");
    const std::string w = where + ".limits";
    r.limits.base_linear = number_or(l, "base_linear", r.limits.base_linear, w);
    r.limits.base_angular = number_or(l, "base_angular", r.limits.base_angular, w);
    r.limits.ee_accel = number_or(l, "ee_accel", r.limits.ee_accel, w);
    r.limits.ee_speed = number_or(l, "ee_speed", r.limits.ee_speed, w);
    r.limits.ee_z_min = number_or(l, "ee_z_min", r.limits.ee_z_min, w);
    r.limits.ee_z_max = number_or(l, "ee_z_max", r.limits.ee_z_max, w);
  }
  const auto& l = r.limits;
  if (l.base_linear <= 0.0 || l.base_angular <= 0.0 || l.ee_accel <= 0.0 || l.ee_speed <= 0.0 ||
      l.ee_z_min >= l.ee_z_max) {
    schema_fail(where + ".limits must be positive with ee_z_min < ee_z_max");
  }
  return r;
}

ObjectState parse_object(const json& j, const std::string& where) {
  ObjectState o;
  o.id = string_field(j, "id", where);
  o.name = j.value("name", "");
  o.aliases = string_list(j, "aliases", where);
  o.pose = pose(require(j, "pose", where), where + ".pose");
  o.height = number_or(j, "height", 0.0, where);
  const json& fp = require(j, "footprint", where);
  if (fp.contains("circle")) {
    const double r = number(fp.at("circle"), where + ".footprint.circle");
    if (r <= 0.0) schema_fail(where + ".footprint.circle must be positive");
    o.footprint = geom::Circle{Vec2::Zero(), r};
  } else {
    o.footprint = polygon(fp, where + ".footprint");
  }
  o.graspable = j.value("graspable", true);
  o.container = j.value("container", false);
  if (j.contains("grasp")) {
    const auto& g = j.at("grasp");
    GraspSpec spec;
    spec.object = o.id;
    if (g.contains("offset")) spec.offset = vec3(g.at("offset"), where + ".grasp.offset");
    if (g.contains("approach")) spec.approach = vec3(g.at("approach"), where + ".grasp.approach");
    if (std::abs(spec.approach.norm() - 1.0) > 1e-9) {
      schema_fail(where + ".grasp.approach must be a unit vector");
    }
    o.grasp = spec;
  }
  return o;
}

StaticKind parse_static_kind(const std::string& s, const std::string& where) {
  if (s == "obstacle") return StaticKind::Obstacle;
  if (s == "surface") return StaticKind::Surface;
  if (s == "region") return StaticKind::Region;
  schema_fail(where + ".kind must be obstacle, surface or region");
}

std::string static_kind_name(StaticKind k) {
  switch (k) {
    case StaticKind::Obstacle:
      return "obstacle";
    case StaticKind::Surface:
      return "surface";
    case StaticKind::Region:
      return "region";
  }
  return "obstacle";
}

Access parse_access(const std::string& s, const std::string& where) {
  if (s == "technical") return Access::Technical;
  if (s == "non_technical") return Access::NonTechnical;
  schema_fail(where + ".access must be technical or non_technical");
}

}  // namespace

WorldState load_scene(const json& doc) {
  if (!doc.is_object()) schema_fail("document must be an object");
  const json& version = require(doc, "schema_version", "scene");
  if (!version.is_number_integer() || version.get<int>() != kSchemaVersion) {
    schema_fail("unsupported schema_version (expected " + std::to_string(kSchemaVersion) + ")");
  }
  for (const char* key : {"robots", "objects", "humans", "statics", "human_paths"}) {
    if (!require(doc, key, "scene").is_array()) schema_fail(std::string(key) + " must be an array");
  }
  WorldState w;
  w.scene_id = doc.value("id", "scene");
  w.time = number_or(doc, "time", 0.0, "scene");
  if (doc.at("robots").empty()) schema_fail("at least one robot required");

  std::set<std::string> ids;
  auto claim = [&](const std::string& id) {
    if (!ids.insert(id).second) schema_fail("duplicate id '" + id + "'");
  };
  for (std::size_t i = 0; i < doc.at("robots").size(); ++i) {
    w.robots.push_back(parse_robot(doc.at("robots")[i], "robots[" + std::to_string(i) + "]"));
    claim(w.robots.back().id);
  }
  for (std::size_t i = 0; i < doc.at("objects").size(); ++i) {
    w.objects.push_back(parse_object(doc.at("objects")[i], "objects[" + std::to_string(i) + "]"));
    claim(w.objects.back().id);
  }
  for (std::size_t i = 0; i < doc.at("humans").size(); ++i) {
    const auto& j = doc.at("humans")[i];
    const std::string where = "humans[" + std::to_string(i) + "]";
    HumanState h;
    h.id = string_field(j, "id", where);
    h.name = j.value("name", "");
    h.position = vec2(require(j, "position", where), where + ".position");
    h.access = parse_access(j.value("access", "non_technical"), where);
    w.humans.push_back(h);
    claim(h.id);
  }
  for (std::size_t i = 0; i < doc.at("statics").size(); ++i) {
    const auto& j = doc.at("statics")[i];
    const std::string where = "statics[" + std::to_string(i) + "]";
    StaticEntity s;
    s.id = string_field(j, "id", where);
    s.name = j.value("name", "");
    s.aliases = string_list(j, "aliases", where);
    s.kind = parse_static_kind(j.value("kind", "obstacle"), where);
    s.polygon = polygon(j, where);
    s.height = number_or(j, "height", 0.0, where);
    w.statics.push_back(s);
    claim(s.id);
  }
  for (std::size_t i = 0; i < doc.at("human_paths").size(); ++i) {
    const auto& j = doc.at("human_paths")[i];
    const std::string where = "human_paths[" + std::to_string(i) + "]";
    HumanPath path;
    path.human = string_field(j, "human", where);
    if (!w.find_human(path.human)) schema_fail(where + " references unknown human '" + path.human + "'");
    const json& wps = require(j, "waypoints", where);
    if (!wps.is_array() || wps.empty()) schema_fail(where + ".waypoints must be a non-empty array");
    for (std::size_t k = 0; k < wps.size(); ++k) {
      auto v = numbers(wps[k], 3, where + ".waypoints[" + std::to_string(k) + "]");
      if (!path.waypoints.empty() && v[0] <= path.waypoints.back().t) {
        schema_fail(where + ".waypoints times must be strictly increasing");
      }
      path.waypoints.push_back({v[0], Vec2(v[1], v[2])});
    }
    w.human_paths.push_back(path);
  }
  for (const auto& path : w.human_paths) {
    for (auto& h : w.humans) {
      if (h.id != path.human) continue;
      h.position = path.position_at(w.time);
      h.velocity = path.velocity_at(w.time);
    }
  }
  check_invariants(w);
  return w;
}

WorldState load_scene_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open scene file '" + path + "'");
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw SchemaError("scene file '" + path + "' is not valid JSON: " + e.what());
  }
  return load_scene(doc);
}

json scene_to_json(const WorldState& w) {
  json doc;
  doc["schema_version"] = kSchemaVersion;
  doc["id"] = w.scene_id;
  doc["time"] = w.time;
  doc["robots"] = json::array();
  for (const auto& r : w.robots) {
    json j;
    j["id"] = r.id;
    if (!r.name.empty()) j["name"] = r.name;
    j["base"] = {r.base.x, r.base.y, r.base.theta};
    j["ee"] = {r.ee_pos.x(), r.ee_pos.y(), r.ee_pos.z()};
    j["ee_home"] = {r.ee_home.x(), r.ee_home.y(), r.ee_home.z()};
    j["base_radius"] = r.base_radius;
    j["reach"] = r.reach;
    j["mobile"] = r.mobile;
    j["capabilities"] = r.capabilities;
    j["limits"] = {{"base_linear", r.limits.base_linear}, {"base_angular", r.limits.base_angular},
                   {"ee_accel", r.limits.ee_accel},       {"ee_speed", r.limits.ee_speed},
                   {"ee_z_min", r.limits.ee_z_min},       {"ee_z_max", r.limits.ee_z_max}};
    doc["robots"].push_back(j);
  }
  doc["objects"] = json::array();
  for (const auto& o : w.objects) {
    json j;
    j["id"] = o.id;
    if (!o.name.empty()) j["name"] = o.name;
    if (!o.aliases.empty()) j["aliases"] = o.aliases;
    j["pose"] = {o.pose.x, o.pose.y, o.pose.theta};
    j["height"] = o.height;
    if (const auto* c = std::get_if<geom::Circle>(&o.footprint)) {
      j["footprint"] = {{"circle", c->radius}};
    } else if (const auto* p = std::get_if<geom::Polygon>(&o.footprint)) {
      j["footprint"] = {{"polygon", polygon_json(*p)}};
    }
    j["graspable"] = o.graspable;
    j["container"] = o.container;
    if (o.grasp) {
      j["grasp"] = {{"offset", {o.grasp->offset.x(), o.grasp->offset.y(), o.grasp->offset.z()}},
                    {"approach", {o.grasp->approach.x(), o.grasp->approach.y(), o.grasp->approach.z()}}};
    }
    doc["objects"].push_back(j);
  }
  doc["humans"] = json::array();
  for (const auto& h : w.humans) {
    json j{{"id", h.id}, {"position", {h.position.x(), h.position.y()}}, {"access", to_string(h.access)}};
    if (!h.name.empty()) j["name"] = h.name;
    doc["humans"].push_back(j);
  }
  doc["statics"] = json::array();
  for (const auto& s : w.statics) {
    json j{{"id", s.id}, {"kind", static_kind_name(s.kind)}, {"polygon", polygon_json(s.polygon)},
           {"height", s.height}};
    if (!s.name.empty()) j["name"] = s.name;
    if (!s.aliases.empty()) j["aliases"] = s.aliases;
    doc["statics"].push_back(j);
  }
  doc["human_paths"] = json::array();
  for (const auto& p : w.human_paths) {
    json wps = json::array();
    for (const auto& wp : p.waypoints) wps.push_back({wp.t, wp.position.x(), wp.position.y()});
    doc["human_paths"].push_back({{"human", p.human}, {"waypoints", wps}});
  }
  return doc;
}

void check_invariants(const WorldState& w, double reach_tolerance) {
  std::set<std::string> ids;
  auto claim = [&](const std::string& id) {
    if (!ids.insert(id).second) throw SchemaError("duplicate id '" + id + "'");
  };
  for (const auto& r : w.robots) claim(r.id);
  for (const auto& o : w.objects) claim(o.id);
  for (const auto& h : w.humans) claim(h.id);
  for (const auto& s : w.statics) claim(s.id);
  for (const auto& r : w.robots) {
    if (r.held && r.gripper != Gripper::Closed) {
      throw SchemaError("robot '" + r.id + "' holds an object with an open gripper");
    }
    if (r.held) {
      const auto& o = w.object(*r.held);
      if (o.pose.x != r.ee_pos.x() || o.pose.y != r.ee_pos.y() || o.height != r.ee_pos.z()) {
        throw SchemaError("object '" + o.id + "' is not attached to its holder's end-effector");
      }
    }
    const double reach = (r.ee_pos.head<2>() - r.base.position()).norm();
    if (reach > r.reach + reach_tolerance) {
      throw SchemaError("robot '" + r.id + "' end-effector outside reach (" + std::to_string(reach) +
                        " m > " + std::to_string(r.reach) + " m)");
    }
  }
}

}  // namespace safer::world
