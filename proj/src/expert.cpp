#include "faultarm/expert.hpp"

#include <algorithm>
#include <cmath>

#include "faultarm/parallel.hpp"
#include "faultarm/random.hpp"

namespace faultarm {

namespace {

constexpr double kShapingDamping = 1e-4;
constexpr double kLimitSlack = 1e-9;

Vec2 clip_norm(const Vec2& v, double max_norm) {
  const double n = v.norm();
  return n > max_norm ? v * (max_norm / n) : v;
}

// Every phase issues a saturated open/close command so the signal is a
// clean function of phase; repeating it once the gripper is there is a no-op.
double grip_command(ExpertPhase phase) {
  switch (phase) {
    case ExpertPhase::Grasp:
    case ExpertPhase::Lift:
    case ExpertPhase::Transport:
    case ExpertPhase::PlaceDescend:
      return -1.0;
    default:
      return 1.0;
  }
}

ExpertPhase next_in_order(ExpertPhase p) {
  return p == ExpertPhase::Retreat ? p : static_cast<ExpertPhase>(static_cast<int>(p) + 1);
}

// Cartesian command whose realized end-effector displacement, predicted
// through the DLS map and the degraded joint gains, matches `desired`.
Action shaped_action(const ArmModel& model, const ArmState& state, const HealthVector& health,
                     const Vec2& desired, double dgrip) {
  const auto n = static_cast<Eigen::Index>(model.joints());
  const Eigen::MatrixXd jac = jacobian(model, state.q);
  const double lambda_sq = model.osc_damping * model.osc_damping;
  const Eigen::Matrix3d jjt = jac * jac.transpose() + lambda_sq * Eigen::Matrix3d::Identity();
  const Eigen::MatrixXd osc_map = jac.transpose() * jjt.inverse();  // n x 3
  const auto limits = degraded_limits(model, health);

  Eigen::VectorXd gain(n);
  for (Eigen::Index j = 0; j < n; ++j) gain(j) = health[static_cast<std::size_t>(j)];
  const Eigen::Vector2d target(desired.x, desired.y);

  Eigen::Vector3d command = Eigen::Vector3d::Zero();
  for (Eigen::Index pass = 0; pass <= n; ++pass) {
    const Eigen::MatrixXd realized = jac.topRows(2) * gain.asDiagonal() * osc_map;  // 2 x 3
    const Eigen::Matrix2d gram =
        realized * realized.transpose() + kShapingDamping * Eigen::Matrix2d::Identity();
    command = realized.transpose() * gram.ldlt().solve(target);

    const Eigen::VectorXd dq = (osc_map * command).cwiseProduct(gain);
    bool dropped = false;
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto& lim = limits[static_cast<std::size_t>(j)];
      const double qj = state.q[static_cast<std::size_t>(j)];
      const bool pinned =
          (qj >= lim.max - kLimitSlack && dq(j) > 0.0) || (qj <= lim.min + kLimitSlack && dq(j) < 0.0);
      if (pinned && gain(j) != 0.0) {
        gain(j) = 0.0;
        dropped = true;
      }
    }
    if (!dropped) break;
  }

  const auto& b = model.action_bounds;
  const double scale = std::max({std::hypot(command(0), command(1)) / b.ee,
                                 std::abs(command(2)) / b.yaw, 1.0});
  command /= scale;
  return {command(0), command(1), command(2), dgrip};
}

}  // namespace

std::string to_string(ExpertPhase p) {
  switch (p) {
    case ExpertPhase::ApproachAbove:
      return "ApproachAbove";
    case ExpertPhase::Descend:
      return "Descend";
    case ExpertPhase::Grasp:
      return "Grasp";
    case ExpertPhase::Lift:
      return "Lift";
    case ExpertPhase::Transport:
      return "Transport";
    case ExpertPhase::PlaceDescend:
      return "PlaceDescend";
    case ExpertPhase::Release:
      return "Release";
    case ExpertPhase::Retreat:
      return "Retreat";
  }
  return "?";
}

Vec2 expert_waypoint(const ArmState& state, const ExpertContext& ctx, const ExpertTuning& tuning) {
  const Vec2 hover{0.0, tuning.hover_height};
  switch (ctx.phase) {
    case ExpertPhase::ApproachAbove:
      return state.object_pos + hover;
    case ExpertPhase::Descend:
    case ExpertPhase::Grasp:
      return state.object_pos;
    case ExpertPhase::Lift:
      return ctx.grasp_point + Vec2{0.0, tuning.lift_height};
    case ExpertPhase::Transport:
    case ExpertPhase::Retreat:
      return state.target_pos + hover;
    case ExpertPhase::PlaceDescend:
    case ExpertPhase::Release:
      return state.target_pos;
  }
  return state.object_pos;
}

Action chase_action(const ArmModel& model, const ArmState& state, const Vec2& waypoint,
                    double dgrip, const ExpertTuning& tuning) {
  const Pose2 ee = forward_kinematics(model, state.q);
  const Vec2 d = clip_norm(waypoint - ee.position(), model.action_bounds.ee);
  const double dyaw = std::clamp(tuning.yaw_gain * (tuning.tool_yaw - ee.yaw),
                                 -model.action_bounds.yaw, model.action_bounds.yaw);
  return {d.x, d.y, dyaw, dgrip};
}

Action expert_action(const ArmModel& model, const ArmState& state, const HealthVector& health,
                     const ExpertContext& ctx, const ExpertTuning& tuning) {
  const Vec2 waypoint = expert_waypoint(state, ctx, tuning);
  const double dgrip = grip_command(ctx.phase);
  if (health.fully_healthy()) return chase_action(model, state, waypoint, dgrip, tuning);
  const Pose2 ee = forward_kinematics(model, state.q);
  const Vec2 desired = clip_norm(waypoint - ee.position(), model.action_bounds.ee);
  return shaped_action(model, state, health, desired, dgrip);
}

ExpertPhase advance_phase(const ArmModel& model, const ArmState& state, const ExpertContext& ctx,
                          const ExpertTuning& tuning) {
  switch (ctx.phase) {
    case ExpertPhase::Grasp:
      return ctx.ticks_in_phase >= tuning.grasp_dwell ? ExpertPhase::Lift : ExpertPhase::Grasp;
    case ExpertPhase::Release:
      return state.gripper >= 0.5 && ctx.ticks_in_phase >= tuning.release_dwell
                 ? ExpertPhase::Retreat
                 : ExpertPhase::Release;
    case ExpertPhase::Retreat:
      return ExpertPhase::Retreat;
    default: {
      const Vec2 ee = forward_kinematics(model, state.q).position();
      const bool reached = distance(ee, expert_waypoint(state, ctx, tuning)) < tuning.waypoint_tolerance;
      return reached ? next_in_order(ctx.phase) : ctx.phase;
    }
  }
}

void expert_update(const ArmModel& model, const ArmState& state, ExpertContext& ctx,
                   const ExpertTuning& tuning) {
  ctx.ticks_in_phase += 1;
  const ExpertPhase next = advance_phase(model, state, ctx, tuning);
  if (next != ctx.phase) {
    if (next == ExpertPhase::Lift) ctx.grasp_point = forward_kinematics(model, state.q).position();
    ctx.phase = next;
    ctx.ticks_in_phase = 0;
  }
}

Episode run_expert_episode(const ArmModel& model, int task_id, std::uint64_t seed,
                           const DegradationConfig& degradation, const ExpertTuning& tuning) {
  const HealthVector health = to_health_vector(degradation, model.joints());
  Episode ep;
  ep.meta = {task_id, seed, degradation, false, EpisodeSource::Expert};
  ArmState state = reset(model, task_id, seed, health);
  ExpertContext ctx;
  for (int t = 0; t < model.horizon; ++t) {
    Observation obs = observe(model, state);
    const Action action = expert_action(model, state, health, ctx, tuning);
    const auto proprio = obs.proprio;
    ep.steps.push_back({std::move(obs), action, proprio, health});
    state = osc_step(model, state, action, health);
    expert_update(model, state, ctx, tuning);
    if (is_success(model, state)) break;
  }
  ep.meta.success = is_success(model, state);
  return ep;
}

std::vector<Episode> collect_episodes(const ArmModel& model, const CollectOptions& options,
                                      CollectSummary* summary) {
  if (options.tasks.empty()) throw std::invalid_argument("collect_episodes: no tasks given");
  for (int t : options.tasks) {
    if (t < 0 || static_cast<std::size_t>(t) >= model.task_count()) {
      throw std::out_of_range("collect_episodes: task " + std::to_string(t) + " out of range");
    }
  }
  for (const auto& c : options.configs) c.validate(model.joints());

  const std::size_t per = options.per_config;
  const std::size_t total = options.configs.size() * per;
  std::vector<Episode> runs(total);
  parallel_for(total, options.workers, [&](std::size_t k) {
    const std::size_t c = k / per;
    const std::size_t i = k % per;
    const int task = options.tasks[i % options.tasks.size()];
    const std::uint64_t seed = mix_seed(mix_seed(options.seed, c), i);
    runs[k] = run_expert_episode(model, task, seed, options.configs[c], options.tuning);
  });

  std::vector<Episode> kept;
  CollectSummary local;
  local.attempted = total;
  for (std::size_t c = 0; c < options.configs.size(); ++c) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < per; ++i) {
      Episode& ep = runs[c * per + i];
      if (ep.meta.success) {
        kept.push_back(std::move(ep));
        ++n;
      }
    }
    local.kept_per_config.emplace_back(options.configs[c].label(), n);
    local.kept += n;
  }
  if (summary) *summary = std::move(local);
  return kept;
}

std::vector<DegradationConfig> single_joint_grid(std::size_t joints,
                                                 const std::vector<double>& levels) {
  std::vector<DegradationConfig> grid;
  for (std::size_t j = 0; j < joints; ++j)
    for (double w : levels) grid.push_back(DegradationConfig::single(j, w));
  return grid;
}

}  // namespace faultarm
