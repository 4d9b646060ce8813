#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "faultarm/arm.hpp"
#include "faultarm/episode.hpp"
#include "faultarm/health.hpp"

namespace faultarm {

enum class ExpertPhase {
  ApproachAbove,
  Descend,
  Grasp,
  Lift,
  Transport,
  PlaceDescend,
  Release,
  Retreat,
};

std::string to_string(ExpertPhase p);

struct ExpertTuning {
  double hover_height = 0.15;
  double lift_height = 0.2;
  double waypoint_tolerance = 0.02;
  int grasp_dwell = 2;
  int release_dwell = 2;
  double tool_yaw = -1.5707963267948966;  // pointing down
  double yaw_gain = 0.5;
};

/// Phase bookkeeping carried between ticks.
struct ExpertContext {
  ExpertPhase phase = ExpertPhase::ApproachAbove;
  int ticks_in_phase = 0;
  Vec2 grasp_point;
};

Vec2 expert_waypoint(const ArmState& state, const ExpertContext& ctx, const ExpertTuning& tuning);

/// Plain waypoint chase: Cartesian error clipped to the per-tick bound, yaw
/// driven toward the tool orientation. This is what a healthy-arm operator
/// commands and what the teleop gateway issues for pointer targets.
Action chase_action(const ArmModel& model, const ArmState& state, const Vec2& waypoint,
                    double dgrip, const ExpertTuning& tuning);

/// Chase with degradation-aware command shaping. With a fully healthy vector
/// this is exactly `chase_action`. Otherwise the tool yaw is left free and the
/// command is solved through the OSC map with the Jacobian scaled column-wise
/// by h_j (joints pinned at a degraded limit are dropped), so the realized
/// end-effector motion points at the waypoint.
Action expert_action(const ArmModel& model, const ArmState& state, const HealthVector& health,
                     const ExpertContext& ctx, const ExpertTuning& tuning = {});

/// Next phase after `state` was reached. Geometric transitions fire within
/// `waypoint_tolerance` of the phase waypoint; Grasp waits for its dwell;
/// Release waits for its dwell and an open gripper; Retreat is terminal.
ExpertPhase advance_phase(const ArmModel& model, const ArmState& state, const ExpertContext& ctx,
                          const ExpertTuning& tuning = {});

/// Bookkeeping after a step: counts the tick, advances the phase and records
/// the grasp point when Lift begins.
void expert_update(const ArmModel& model, const ArmState& state, ExpertContext& ctx,
                   const ExpertTuning& tuning = {});

/// Runs the expert from reset until success or the model horizon.
Episode run_expert_episode(const ArmModel& model, int task_id, std::uint64_t seed,
                           const DegradationConfig& degradation, const ExpertTuning& tuning = {});

struct CollectOptions {
  std::vector<int> tasks;
  std::vector<DegradationConfig> configs;
  std::size_t per_config = 16;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  ExpertTuning tuning;
};

struct CollectSummary {
  std::size_t attempted = 0;
  std::size_t kept = 0;
  std::vector<std::pair<std::string, std::size_t>> kept_per_config;
};

/// Episode i of config c runs task tasks[i % |tasks|] with a seed derived from
/// (seed, c, i). Only successful episodes are kept; output order is (c, i)
/// regardless of worker count.
std::vector<Episode> collect_episodes(const ArmModel& model, const CollectOptions& options,
                                      CollectSummary* summary = nullptr);

/// The default malfunction grid: every joint at every level.
std::vector<DegradationConfig> single_joint_grid(std::size_t joints,
                                                 const std::vector<double>& levels);

}  // namespace faultarm
