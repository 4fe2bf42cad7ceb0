#pragma once

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "safer/geometry.hpp"

namespace safer::world {

using geom::Vec2;
using geom::Vec3;
using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr int kSchemaVersion = 1;
inline constexpr int kBaseControlDim = 3;
inline constexpr int kEeControlDim = 3;
inline constexpr int kRobotControlDim = kBaseControlDim + kEeControlDim;

/// Wraps an angle into (-pi, pi].
double normalize_angle(double theta);

struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;

  Pose2() = default;
  Pose2(double x_, double y_, double theta_) : x(x_), y(y_), theta(normalize_angle(theta_)) {}

  Vec2 position() const { return {x, y}; }
  bool operator==(const Pose2&) const = default;
};

enum class Gripper { Open, Closed };
enum class Access { Technical, NonTechnical };

std::string to_string(Gripper g);
std::string to_string(Access a);

/// Actuation limits. Base limits bound the commanded body twist, ee limits
/// bound the commanded acceleration (a torque-limit proxy).
struct RobotLimits {
  double base_linear = 0.5;   // m/s per axis
  double base_angular = 1.0;  // rad/s
  double ee_accel = 3.0;      // m/s^2 per axis
  double ee_speed = 0.6;      // m/s per axis
  double ee_z_min = 0.2;
  double ee_z_max = 1.6;
};

struct RobotState {
  std::string id;
  std::string name;
  Pose2 base;
  Vec3 base_vel = Vec3::Zero();  // world-frame (vx, vy, omega)
  Vec3 ee_pos = Vec3::Zero();    // world frame
  Vec3 ee_vel = Vec3::Zero();    // arm velocity, excluding the carrying base motion
  Gripper gripper = Gripper::Open;
  std::optional<std::string> held;

  // Static configuration.
  double base_radius = 0.3;
  double reach = 0.9;
  bool mobile = true;
  RobotLimits limits;
  Vec3 ee_home = Vec3(0.3, 0.0, 0.9);  // stowed ee offset in the base frame (z absolute)
  std::vector<std::string> capabilities;

  bool can(std::string_view capability) const;
  geom::Shape footprint() const { return geom::Circle{base.position(), base_radius}; }
  /// World position of the stowed end-effector for a given base pose.
  Vec3 stowed_ee(const Pose2& at) const;
};

/// Grasp configuration attached to an object.
struct GraspSpec {
  std::string object;
  Vec3 offset = Vec3::Zero();          // grasp point relative to the object pose
  Vec3 approach = Vec3(0.0, 0.0, -1.0);  // unit vector
};

struct ObjectState {
  std::string id;
  std::string name;
  std::vector<std::string> aliases;
  Pose2 pose;
  double height = 0.0;     // z of the reference point
  geom::Shape footprint;   // local frame, circle or polygon
  bool graspable = true;
  bool container = false;  // accepts placed objects
  std::optional<GraspSpec> grasp;

  Vec3 position3() const { return {pose.x, pose.y, height}; }
  Vec3 grasp_point() const;
  /// Footprint in world frame.
  geom::Shape world_footprint() const;
};

struct HumanState {
  std::string id;
  std::string name;
  Vec2 position = Vec2::Zero();
  Vec2 velocity = Vec2::Zero();
  Access access = Access::NonTechnical;
};

enum class StaticKind { Obstacle, Surface, Region };

/// Named static polygon: obstacles and surfaces collide, regions are
/// locations only.
struct StaticEntity {
  std::string id;
  std::string name;
  std::vector<std::string> aliases;
  StaticKind kind = StaticKind::Obstacle;
  geom::Polygon polygon;
  double height = 0.0;

  bool collidable() const { return kind != StaticKind::Region; }
};

struct Waypoint {
  double t = 0.0;
  Vec2 position = Vec2::Zero();
};

/// Scripted piecewise-linear human motion. Holds the first waypoint before it
/// and the last one after it.
struct HumanPath {
  std::string human;
  std::vector<Waypoint> waypoints;

  Vec2 position_at(double t) const;
  Vec2 velocity_at(double t) const;
};

struct WorldState {
  std::string scene_id;
  double time = 0.0;
  std::vector<RobotState> robots;
  std::vector<ObjectState> objects;
  std::vector<HumanState> humans;
  std::vector<StaticEntity> statics;
  std::vector<HumanPath> human_paths;

  const RobotState& robot(std::string_view id) const;
  RobotState& robot(std::string_view id);
  const ObjectState& object(std::string_view id) const;
  ObjectState& object(std::string_view id);
  const HumanState& human(std::string_view id) const;
  const StaticEntity& static_entity(std::string_view id) const;

  const RobotState* find_robot(std::string_view id) const;
  const ObjectState* find_object(std::string_view id) const;
  const HumanState* find_human(std::string_view id) const;
  const StaticEntity* find_static(std::string_view id) const;
};

enum class EntityKind { Robot, Object, Human, Static };

struct EntityHandle {
  EntityKind kind;
  std::string id;
  bool operator==(const EntityHandle&) const = default;
};

/// Lower-case, '_' to ' ', articles dropped, whitespace collapsed.
std::string normalize_name(std::string_view text);

/// Looks an entity up by id, name or alias (compared normalized). "Robot 2"
/// matches a robot with id "robot_2". Returns nullopt when nothing matches.
std::optional<EntityHandle> resolve(const WorldState& world, std::string_view reference);
/// Planar position of a resolved entity.
Vec2 entity_position(const WorldState& world, const EntityHandle& handle);
/// Collision footprint of a resolved entity in world frame.
geom::Shape entity_shape(const WorldState& world, const EntityHandle& handle);
/// Top-surface height used for placing onto the entity.
double entity_top(const WorldState& world, const EntityHandle& handle);

/// Control-affine model xdot = f(x) + g(x) u.
struct DynamicsModel {
  int state_dim = 0;
  int control_dim = 0;
  std::function<VectorXd(const VectorXd&)> f;
  std::function<MatrixXd(const VectorXd&)> g;

  static DynamicsModel single_integrator(int n);
  /// x = (p, v) with p, v in R^n, u = acceleration.
  static DynamicsModel double_integrator(int n);
  /// x = (x, y, theta), u = body-frame twist (vx, vy, omega).
  static DynamicsModel base();
  /// x = (p, v) in R^6, u = acceleration. The carrying base adds its linear
  /// velocity to pdot.
  static DynamicsModel end_effector(const Vec2& carrier_velocity = Vec2::Zero());
};

/// Slice of a robot's state that a control vector acts on.
enum class Slice { Base, Ee };
std::string to_string(Slice s);

VectorXd slice_state(const RobotState& robot, Slice slice);
DynamicsModel slice_dynamics(const RobotState& robot, Slice slice);
/// Planar world-frame velocity of the base in (vx, vy).
Vec2 base_linear_velocity(const RobotState& robot);

using Controls = std::map<std::string, VectorXd, std::less<>>;

/// Semi-implicit Euler step: velocities first, then positions. Every robot
/// needs a 6-vector control (body twist then ee acceleration); fixed bases
/// ignore the twist. Held objects are snapped onto their holder's ee.
WorldState step(const WorldState& world, const Controls& controls, double dt);

struct GraspOutcome {
  bool ok = false;
  std::string detail;
};

inline constexpr double kGraspTolerance = 0.03;

/// Instantaneous gripper toggle. Closing grasps the nearest graspable free
/// object whose grasp point lies within `tolerance` of the ee (or exactly
/// `object` when given). Opening releases whatever is held.
GraspOutcome set_gripper(WorldState& world, std::string_view robot_id, Gripper state,
                         const std::optional<std::string>& object = std::nullopt,
                         double tolerance = kGraspTolerance);

/// Validates and loads a scene document (see docs/scene_schema.md).
WorldState load_scene(const nlohmann::json& document);
WorldState load_scene_file(const std::string& path);
nlohmann::json scene_to_json(const WorldState& world);

/// Asserts the world invariants; throws SchemaError naming the first broken one.
void check_invariants(const WorldState& world, double reach_tolerance = 1e-2);

}  // namespace safer::world
