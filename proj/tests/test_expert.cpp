#include <doctest.h>

#include <cmath>

#include "faultarm/expert.hpp"

using namespace faultarm;

TEST_CASE("healthy transport chases the target") {
  const ArmModel m = ArmModel::desk_default();
  ArmState s = reset(m, 0, 1);
  s.object_attached = true;
  s.gripper = 0.0;
  s.object_pos = forward_kinematics(m, s.q).position();
  ExpertContext ctx;
  ctx.phase = ExpertPhase::Transport;
  const ExpertTuning tuning;
  const Vec2 ee = forward_kinematics(m, s.q).position();
  const Vec2 wp = expert_waypoint(s, ctx, tuning);
  const Action a = expert_action(m, s, HealthVector::healthy(4), ctx, tuning);
  const Vec2 dir = wp - ee;
  const double cosine = (a.dx * dir.x + a.dy * dir.y) / (std::hypot(a.dx, a.dy) * dir.norm());
  CHECK(cosine > 0.99);
  CHECK(a.dgrip < 0.0);  // keep holding
  // Healthy shaping is the plain chase.
  CHECK(a == chase_action(m, s, wp, a.dgrip, tuning));
}

TEST_CASE("a fully locked arm gets no Cartesian command") {
  const ArmModel m = ArmModel::desk_default();
  const HealthVector dead({0.0, 0.0, 0.0, 0.0});
  const ArmState s = reset(m, 0, 2, dead);
  const Action a = expert_action(m, s, dead, ExpertContext{});
  CHECK(std::abs(a.dx) < 1e-12);
  CHECK(std::abs(a.dy) < 1e-12);
}

TEST_CASE("phase transitions") {
  const ArmModel m = ArmModel::desk_default();
  const ExpertTuning tuning;
  ArmState s = reset(m, 0, 3);

  SUBCASE("approach at the hover point descends") {
    ExpertContext ctx;
    // Move the object under the current end effector at hover height.
    const Vec2 ee = forward_kinematics(m, s.q).position();
    s.object_pos = {ee.x, ee.y - tuning.hover_height};
    CHECK(advance_phase(m, s, ctx, tuning) == ExpertPhase::Descend);
    s.object_pos = {ee.x + 0.2, ee.y - tuning.hover_height};
    CHECK(advance_phase(m, s, ctx, tuning) == ExpertPhase::ApproachAbove);
  }
  SUBCASE("grasp waits for its dwell") {
    ExpertContext ctx;
    ctx.phase = ExpertPhase::Grasp;
    ctx.ticks_in_phase = 0;
    s.gripper = 0.0;
    CHECK(advance_phase(m, s, ctx, tuning) == ExpertPhase::Grasp);
  }
  SUBCASE("release with an open gripper retreats") {
    ExpertContext ctx;
    ctx.phase = ExpertPhase::Release;
    ctx.ticks_in_phase = tuning.release_dwell;
    s.gripper = 1.0;
    CHECK(advance_phase(m, s, ctx, tuning) == ExpertPhase::Retreat);
    s.gripper = 0.2;
    CHECK(advance_phase(m, s, ctx, tuning) == ExpertPhase::Release);
  }
  SUBCASE("retreat is terminal") {
    ExpertContext ctx;
    ctx.phase = ExpertPhase::Retreat;
    CHECK(advance_phase(m, s, ctx, tuning) == ExpertPhase::Retreat);
  }
}

TEST_CASE("expert phases never skip") {
  const ArmModel m = ArmModel::desk_default();
  const ExpertTuning tuning;
  for (int task = 0; task < 4; ++task) {
    ArmState s = reset(m, task, 8);
    const HealthVector h = HealthVector::healthy(4);
    ExpertContext ctx;
    for (int t = 0; t < m.horizon; ++t) {
      const auto before = static_cast<int>(ctx.phase);
      if (t > 0) expert_update(m, s, ctx, tuning);
      const auto after = static_cast<int>(ctx.phase);
      CHECK((after == before || after == before + 1));
      s = osc_step(m, s, expert_action(m, s, h, ctx, tuning), h);
      if (is_success(m, s)) break;
    }
  }
}

TEST_CASE("expert episodes are deterministic and mostly succeed when healthy") {
  const ArmModel m = ArmModel::desk_default();
  const Episode a = run_expert_episode(m, 1, 42, DegradationConfig{});
  const Episode b = run_expert_episode(m, 1, 42, DegradationConfig{});
  CHECK(a == b);
  CHECK(a.meta.success);
  CHECK(a.meta.source == EpisodeSource::Expert);
  CHECK(a.steps.size() < static_cast<std::size_t>(m.horizon));
}

TEST_CASE("collection keeps healthy successes and is worker-count independent") {
  const ArmModel m = ArmModel::desk_default();
  CollectOptions o;
  o.tasks = {0, 1, 2, 3};
  o.configs = {DegradationConfig{}};
  o.per_config = 50;
  o.seed = 9;
  CollectSummary summary;
  const auto one = collect_episodes(m, o, &summary);
  CHECK(summary.attempted == 50);
  CHECK(one.size() >= 45);
  CHECK(summary.kept == one.size());
  o.workers = 3;
  CHECK(collect_episodes(m, o) == one);
}

TEST_CASE("single joint grid covers every joint and level") {
  const auto grid = single_joint_grid(4, {0.3, 0.5});
  REQUIRE(grid.size() == 8);
  CHECK(grid[0] == DegradationConfig::single(0, 0.3));
  CHECK(grid[7] == DegradationConfig::single(3, 0.5));
}
