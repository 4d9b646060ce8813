#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "faultarm/expert.hpp"

namespace faultarm::testing {

inline std::string message(const std::string& type, nlohmann::json payload, std::int64_t tick = 0) {
  return nlohmann::json{{"type", type}, {"payload", std::move(payload)}, {"tick", tick}}.dump();
}

/// Headless operator: reads StateFrame payloads and answers with pointer and
/// gripper commands that follow the scripted pick-and-place waypoints.
class Pilot {
 public:
  explicit Pilot(ArmModel model) : model_(std::move(model)) {}

  void begin() {
    ctx_ = {};
    started_ = false;
  }

  std::vector<std::string> commands(const nlohmann::json& frame) {
    ArmState s;
    s.q = frame.at("q").get<std::vector<double>>();
    s.gripper = frame.at("gripper").get<double>();
    s.object_pos = {frame.at("object")[0].get<double>(), frame.at("object")[1].get<double>()};
    s.target_pos = {frame.at("target")[0].get<double>(), frame.at("target")[1].get<double>()};
    s.object_attached = frame.at("attached").get<bool>();
    s.task_id = frame.at("task").get<int>();
    if (started_) expert_update(model_, s, ctx_, tuning_);
    started_ = true;
    const Vec2 wp = expert_waypoint(s, ctx_, tuning_);
    const double grip = expert_action(model_, s, HealthVector::healthy(model_.joints()), ctx_, tuning_).dgrip;
    return {message("SetPointerTarget", {{"x", wp.x}, {"y", wp.y}}),
            message("GripperDelta", {{"d", grip}})};
  }

 private:
  ArmModel model_;
  ExpertTuning tuning_;
  ExpertContext ctx_;
  bool started_ = false;
};

}  // namespace faultarm::testing
