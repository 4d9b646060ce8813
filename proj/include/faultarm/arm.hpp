#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "faultarm/health.hpp"

namespace faultarm {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double norm() const;

  friend bool operator==(const Vec2&, const Vec2&) = default;
};

double distance(const Vec2& a, const Vec2& b);

struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;

  Vec2 position() const { return {x, y}; }
  friend bool operator==(const Pose2&, const Pose2&) = default;
};

/// Axis-aligned spawn region; a zero-height box is a line segment on a surface.
struct Region {
  double x_min = 0.0, x_max = 0.0;
  double y_min = 0.0, y_max = 0.0;

  bool contains(const Vec2& p) const {
    return p.x >= x_min && p.x <= x_max && p.y >= y_min && p.y <= y_max;
  }
};

struct TaskSpec {
  Region object_region;
  Region target_region;
};

struct ActionBounds {
  double ee = 0.05;   // m per tick, each Cartesian component
  double yaw = 0.2;   // rad per tick
  double grip = 1.0;  // gripper units per tick
};

/// Planar revolute chain mounted at the origin, plus the task set it works on.
/// Joint 0 is the base, joint 1 the shoulder analog carrying the main reach.
struct ArmModel {
  std::vector<double> link_lengths;
  std::vector<JointLimits> nominal_limits;
  std::vector<double> home;
  double osc_damping = 0.1;
  double max_joint_step = 0.3;
  double grasp_radius = 0.08;
  double success_tolerance = 0.05;
  int horizon = 300;
  double home_jitter = 0.1;  // rad, uniform per joint at reset
  ActionBounds action_bounds;
  std::vector<TaskSpec> tasks;

  std::size_t joints() const { return link_lengths.size(); }
  std::size_t task_count() const { return tasks.size(); }

  /// Throws std::invalid_argument describing the first violated invariant.
  void validate() const;

  /// The built-in desk scene: 4 joints, 4 pick-and-place tasks.
  static ArmModel desk_default();
};

struct Action {
  double dx = 0.0;
  double dy = 0.0;
  double dyaw = 0.0;
  double dgrip = 0.0;

  static constexpr std::size_t kDim = 4;
  std::array<double, kDim> as_array() const { return {dx, dy, dyaw, dgrip}; }
  static Action from_array(const std::array<double, kDim>& a) { return {a[0], a[1], a[2], a[3]}; }

  friend bool operator==(const Action&, const Action&) = default;
};

Action clamp_action(const Action& a, const ActionBounds& bounds);

struct ArmState {
  std::vector<double> q;
  double gripper = 1.0;  // 0 closed, 1 open
  Vec2 object_pos;
  Vec2 target_pos;
  bool object_attached = false;
  std::int64_t tick = 0;
  int task_id = 0;

  friend bool operator==(const ArmState&, const ArmState&) = default;
};

struct Observation {
  std::vector<double> joint_sin_cos;  // sin q_j, cos q_j interleaved
  Pose2 ee_pose;
  double gripper = 0.0;
  Vec2 object_pos;
  Vec2 target_pos;
  std::vector<double> task_onehot;
  std::array<double, 4> proprio{};  // ee x, y, yaw, gripper

  /// Everything except `proprio`, flattened in declaration order.
  std::vector<double> features() const;
  static std::size_t feature_dim(std::size_t joints, std::size_t tasks) {
    return 2 * joints + 8 + tasks;
  }

  friend bool operator==(const Observation&, const Observation&) = default;
};

Pose2 forward_kinematics(const ArmModel& model, std::span<const double> q);

/// d(x, y, yaw)/dq, 3 x J. The yaw row is all ones.
Eigen::MatrixXd jacobian(const ArmModel& model, std::span<const double> q);

/// Damped least-squares joint step for a Cartesian delta (dx, dy, dyaw),
/// before any per-joint clamping or degradation.
Eigen::VectorXd dls_joint_step(const ArmModel& model, std::span<const double> q,
                               const Eigen::Vector3d& cartesian_delta);

/// Operational-space step under degradation: DLS solve, per-joint step clamp,
/// gain scaling, clamp into degraded limits, gripper update, grasp logic.
ArmState osc_step(const ArmModel& model, const ArmState& state, const Action& action,
                  const HealthVector& health);

/// The same step with no degradation path at all.
ArmState osc_step(const ArmModel& model, const ArmState& state, const Action& action);

std::vector<JointLimits> degraded_limits(const ArmModel& model, const HealthVector& health);

/// Deterministic in (task_id, seed). With a health vector, the home pose is
/// clamped into the degraded limits so locked joints sit at their midpoint.
ArmState reset(const ArmModel& model, int task_id, std::uint64_t seed);
ArmState reset(const ArmModel& model, int task_id, std::uint64_t seed,
               const HealthVector& health);

bool is_success(const ArmState& state, double tolerance);
inline bool is_success(const ArmModel& model, const ArmState& state) {
  return is_success(state, model.success_tolerance);
}

Observation observe(const ArmModel& model, const ArmState& state);

nlohmann::json to_json(const ArmModel& model);
ArmModel arm_model_from_json(const nlohmann::json& j);
ArmModel load_arm_model(const std::filesystem::path& path);

}  // namespace faultarm
