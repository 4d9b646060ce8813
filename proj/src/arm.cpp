#include "faultarm/arm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <stdexcept>

#include "faultarm/random.hpp"

namespace faultarm {

namespace {

void require_joint_count(const ArmModel& model, std::size_t n, const char* what) {
  if (n != model.joints()) {
    std::ostringstream os;
    os << what << ": expected " << model.joints() << " joint values, got " << n;
    throw std::invalid_argument(os.str());
  }
}

double clamp(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

// Shared by the degraded and nominal step. `health` == nullptr takes the
// nominal path with no gain scaling and nominal limits.
ArmState step_impl(const ArmModel& model, const ArmState& state, const Action& raw_action,
                   const HealthVector* health) {
  require_joint_count(model, state.q.size(), "osc_step");
  if (health) require_joint_count(model, health->size(), "osc_step health");

  const Action action = clamp_action(raw_action, model.action_bounds);
  ArmState next = state;
  next.tick = state.tick + 1;

  const Eigen::VectorXd dq =
      dls_joint_step(model, state.q, Eigen::Vector3d(action.dx, action.dy, action.dyaw));
  for (std::size_t j = 0; j < model.joints(); ++j) {
    double step = clamp(dq(static_cast<Eigen::Index>(j)), -model.max_joint_step,
                        model.max_joint_step);
    JointLimits limits = model.nominal_limits[j];
    if (health) {
      step = apply_gain((*health)[j], step);
      limits = degraded_limits(limits, (*health)[j]);
    }
    next.q[j] = limits.clamp(state.q[j] + step);
  }

  next.gripper = clamp(state.gripper + action.dgrip, 0.0, 1.0);
  const Vec2 ee = forward_kinematics(model, next.q).position();
  if (next.object_attached) {
    if (next.gripper >= 0.5) next.object_attached = false;
  } else if (next.gripper < 0.5 && distance(ee, next.object_pos) <= model.grasp_radius) {
    next.object_attached = true;
  }
  if (next.object_attached) next.object_pos = ee;
  return next;
}

Vec2 sample_region(const Region& r, Rng& rng) {
  const double x = rng.uniform(r.x_min, r.x_max);
  const double y = rng.uniform(r.y_min, r.y_max);
  return {x, y};
}

nlohmann::json region_to_json(const Region& r) {
  return {{"x", {r.x_min, r.x_max}}, {"y", {r.y_min, r.y_max}}};
}

Region region_from_json(const nlohmann::json& j) {
  Region r;
  const auto x = j.at("x").get<std::array<double, 2>>();
  const auto y = j.at("y").get<std::array<double, 2>>();
  r.x_min = x[0];
  r.x_max = x[1];
  r.y_min = y[0];
  r.y_max = y[1];
  return r;
}

void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& known,
                         const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw std::invalid_argument("unknown key '" + key + "' in " + where);
  }
}

}  // namespace

double Vec2::norm() const { return std::hypot(x, y); }

double distance(const Vec2& a, const Vec2& b) { return (a - b).norm(); }

void ArmModel::validate() const {
  const std::size_t n = joints();
  if (n == 0) throw std::invalid_argument("arm model needs at least one joint");
  if (nominal_limits.size() != n || home.size() != n) {
    throw std::invalid_argument("link_lengths, nominal_limits and home must have equal length");
  }
  for (std::size_t j = 0; j < n; ++j) {
    if (!(link_lengths[j] > 0.0)) throw std::invalid_argument("link lengths must be positive");
    if (!(nominal_limits[j].min < nominal_limits[j].max)) {
      throw std::invalid_argument("joint " + std::to_string(j) + " limits must satisfy min < max");
    }
    if (!nominal_limits[j].contains(home[j])) {
      throw std::invalid_argument("home pose outside nominal limits at joint " +
                                  std::to_string(j));
    }
  }
  if (!(osc_damping > 0.0)) throw std::invalid_argument("osc_damping must be positive");
  if (!(max_joint_step > 0.0)) throw std::invalid_argument("max_joint_step must be positive");
  if (!(grasp_radius > 0.0) || !(success_tolerance > 0.0)) {
    throw std::invalid_argument("grasp_radius and success_tolerance must be positive");
  }
  if (horizon <= 0) throw std::invalid_argument("horizon must be positive");
  if (!(home_jitter >= 0.0)) throw std::invalid_argument("home_jitter must be non-negative");
  if (tasks.empty()) throw std::invalid_argument("scene needs at least one task");
  for (const auto& t : tasks) {
    for (const Region* r : {&t.object_region, &t.target_region}) {
      if (r->x_min > r->x_max || r->y_min > r->y_max) {
        throw std::invalid_argument("task region bounds must be ordered");
      }
    }
  }
}

ArmModel ArmModel::desk_default() {
  constexpr double half_pi = std::numbers::pi / 2.0;
  ArmModel m;
  m.link_lengths = {0.25, 0.85, 0.75, 0.4};
  m.nominal_limits = {{half_pi - 0.1, half_pi + 0.1}, {-1.05, 0.5}, {-2.7, -0.3}, {-2.2, 0.2}};
  m.home = {half_pi, -0.275, -1.5, -1.0};
  // Table surface objects sit at y = 0.05, shelf objects at y = 0.55.
  const Region far_table{1.2, 1.35, 0.05, 0.05};
  const Region near_shelf{0.4, 0.55, 0.55, 0.55};
  m.tasks = {
      {far_table, near_shelf},
      {near_shelf, far_table},
      {{1.25, 1.4, 0.05, 0.05}, {0.6, 0.8, 0.05, 0.05}},
      {far_table, {0.8, 0.95, 0.55, 0.55}},
  };
  return m;
}

Action clamp_action(const Action& a, const ActionBounds& b) {
  return {clamp(a.dx, -b.ee, b.ee), clamp(a.dy, -b.ee, b.ee), clamp(a.dyaw, -b.yaw, b.yaw),
          clamp(a.dgrip, -b.grip, b.grip)};
}

std::vector<double> Observation::features() const {
  std::vector<double> f;
  f.reserve(joint_sin_cos.size() + 8 + task_onehot.size());
  f.insert(f.end(), joint_sin_cos.begin(), joint_sin_cos.end());
  f.insert(f.end(), {ee_pose.x, ee_pose.y, ee_pose.yaw, gripper, object_pos.x, object_pos.y,
                     target_pos.x, target_pos.y});
  f.insert(f.end(), task_onehot.begin(), task_onehot.end());
  return f;
}

Pose2 forward_kinematics(const ArmModel& model, std::span<const double> q) {
  require_joint_count(model, q.size(), "forward_kinematics");
  Pose2 p;
  for (std::size_t i = 0; i < q.size(); ++i) {
    p.yaw += q[i];
    p.x += model.link_lengths[i] * std::cos(p.yaw);
    p.y += model.link_lengths[i] * std::sin(p.yaw);
  }
  return p;
}

Eigen::MatrixXd jacobian(const ArmModel& model, std::span<const double> q) {
  require_joint_count(model, q.size(), "jacobian");
  const auto n = static_cast<Eigen::Index>(q.size());
  // Each joint moves every link distal to it: column i sums over links k >= i.
  std::vector<double> abs_angle(q.size());
  double a = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) abs_angle[i] = (a += q[i]);
  Eigen::MatrixXd jac(3, n);
  double sx = 0.0, sy = 0.0;
  for (Eigen::Index i = n - 1; i >= 0; --i) {
    const auto k = static_cast<std::size_t>(i);
    sx += model.link_lengths[k] * std::cos(abs_angle[k]);
    sy += model.link_lengths[k] * std::sin(abs_angle[k]);
    jac(0, i) = -sy;
    jac(1, i) = sx;
    jac(2, i) = 1.0;
  }
  return jac;
}

Eigen::VectorXd dls_joint_step(const ArmModel& model, std::span<const double> q,
                               const Eigen::Vector3d& cartesian_delta) {
  const Eigen::MatrixXd jac = jacobian(model, q);
  const double lambda_sq = model.osc_damping * model.osc_damping;
  const Eigen::Matrix3d jjt = jac * jac.transpose() + lambda_sq * Eigen::Matrix3d::Identity();
  return jac.transpose() * jjt.ldlt().solve(cartesian_delta);
}

ArmState osc_step(const ArmModel& model, const ArmState& state, const Action& action,
                  const HealthVector& health) {
  return step_impl(model, state, action, &health);
}

ArmState osc_step(const ArmModel& model, const ArmState& state, const Action& action) {
  return step_impl(model, state, action, nullptr);
}

std::vector<JointLimits> degraded_limits(const ArmModel& model, const HealthVector& health) {
  require_joint_count(model, health.size(), "degraded_limits");
  std::vector<JointLimits> out;
  out.reserve(model.joints());
  for (std::size_t j = 0; j < model.joints(); ++j) {
    out.push_back(degraded_limits(model.nominal_limits[j], health[j]));
  }
  return out;
}

ArmState reset(const ArmModel& model, int task_id, std::uint64_t seed) {
  if (task_id < 0 || static_cast<std::size_t>(task_id) >= model.task_count()) {
    throw std::out_of_range("task_id " + std::to_string(task_id) + " not in [0, " +
                            std::to_string(model.task_count()) + ")");
  }
  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(task_id)));
  const TaskSpec& task = model.tasks[static_cast<std::size_t>(task_id)];
  ArmState s;
  s.q = model.home;
  s.gripper = 1.0;
  s.object_pos = sample_region(task.object_region, rng);
  s.target_pos = sample_region(task.target_region, rng);
  s.task_id = task_id;
  for (std::size_t j = 0; j < s.q.size(); ++j) {
    s.q[j] = model.nominal_limits[j].clamp(s.q[j] + rng.uniform(-model.home_jitter, model.home_jitter));
  }
  return s;
}

ArmState reset(const ArmModel& model, int task_id, std::uint64_t seed,
               const HealthVector& health) {
  ArmState s = reset(model, task_id, seed);
  const auto limits = degraded_limits(model, health);
  for (std::size_t j = 0; j < s.q.size(); ++j) s.q[j] = limits[j].clamp(s.q[j]);
  return s;
}

bool is_success(const ArmState& state, double tolerance) {
  return !state.object_attached && state.gripper >= 0.5 &&
         distance(state.object_pos, state.target_pos) <= tolerance;
}

Observation observe(const ArmModel& model, const ArmState& state) {
  Observation o;
  o.joint_sin_cos.reserve(2 * state.q.size());
  for (double qj : state.q) {
    o.joint_sin_cos.push_back(std::sin(qj));
    o.joint_sin_cos.push_back(std::cos(qj));
  }
  o.ee_pose = forward_kinematics(model, state.q);
  o.gripper = state.gripper;
  o.object_pos = state.object_pos;
  o.target_pos = state.target_pos;
  o.task_onehot.assign(model.task_count(), 0.0);
  o.task_onehot.at(static_cast<std::size_t>(state.task_id)) = 1.0;
  o.proprio = {o.ee_pose.x, o.ee_pose.y, o.ee_pose.yaw, o.gripper};
  return o;
}

nlohmann::json to_json(const ArmModel& model) {
  nlohmann::json limits = nlohmann::json::array();
  for (const auto& l : model.nominal_limits) limits.push_back({l.min, l.max});
  nlohmann::json tasks = nlohmann::json::array();
  for (const auto& t : model.tasks) {
    tasks.push_back({{"object_region", region_to_json(t.object_region)},
                     {"target_region", region_to_json(t.target_region)}});
  }
  return {{"link_lengths", model.link_lengths},
          {"nominal_limits", limits},
          {"home", model.home},
          {"osc_damping", model.osc_damping},
          {"max_joint_step", model.max_joint_step},
          {"grasp_radius", model.grasp_radius},
          {"success_tolerance", model.success_tolerance},
          {"horizon", model.horizon},
          {"home_jitter", model.home_jitter},
          {"action_bounds",
           {{"ee", model.action_bounds.ee},
            {"yaw", model.action_bounds.yaw},
            {"grip", model.action_bounds.grip}}},
          {"tasks", tasks}};
}

ArmModel arm_model_from_json(const nlohmann::json& j) {
  reject_unknown_keys(j,
                      {"link_lengths", "nominal_limits", "home", "osc_damping", "max_joint_step",
                       "grasp_radius", "success_tolerance", "horizon", "home_jitter", "action_bounds", "tasks"},
                      "scene");
  ArmModel m = ArmModel::desk_default();
  if (j.contains("link_lengths")) m.link_lengths = j["link_lengths"].get<std::vector<double>>();
  if (j.contains("nominal_limits")) {
    m.nominal_limits.clear();
    for (const auto& l : j["nominal_limits"]) {
      const auto pair = l.get<std::array<double, 2>>();
      m.nominal_limits.push_back({pair[0], pair[1]});
    }
  }
  if (j.contains("home")) m.home = j["home"].get<std::vector<double>>();
  if (j.contains("osc_damping")) m.osc_damping = j["osc_damping"].get<double>();
  if (j.contains("max_joint_step")) m.max_joint_step = j["max_joint_step"].get<double>();
  if (j.contains("grasp_radius")) m.grasp_radius = j["grasp_radius"].get<double>();
  if (j.contains("success_tolerance")) m.success_tolerance = j["success_tolerance"].get<double>();
  if (j.contains("horizon")) m.horizon = j["horizon"].get<int>();
  if (j.contains("home_jitter")) m.home_jitter = j["home_jitter"].get<double>();
  if (j.contains("action_bounds")) {
    const auto& b = j["action_bounds"];
    reject_unknown_keys(b, {"ee", "yaw", "grip"}, "action_bounds");
    m.action_bounds.ee = b.value("ee", m.action_bounds.ee);
    m.action_bounds.yaw = b.value("yaw", m.action_bounds.yaw);
    m.action_bounds.grip = b.value("grip", m.action_bounds.grip);
  }
  if (j.contains("tasks")) {
    m.tasks.clear();
    for (const auto& t : j["tasks"]) {
      m.tasks.push_back({region_from_json(t.at("object_region")),
                         region_from_json(t.at("target_region"))});
    }
  }
  m.validate();
  return m;
}

ArmModel load_arm_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scene file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("scene file " + path.string() + ": " + e.what());
  }
  return arm_model_from_json(j);
}

}  // namespace faultarm
