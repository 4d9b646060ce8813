#include "faultarm/teleop.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace faultarm {

namespace {

const char* const kCommandTypes[] = {"SetPointerTarget", "GripperDelta", "YawDelta",
                                     "SetDegradation",   "StartRecording", "StopRecording",
                                     "ResetScene"};

bool known_command(const std::string& type) {
  return std::find(std::begin(kCommandTypes), std::end(kCommandTypes), type) !=
         std::end(kCommandTypes);
}

double finite_number(const nlohmann::json& payload, const char* key) {
  const auto& v = payload.at(key);
  if (!v.is_number()) throw std::invalid_argument(std::string("'") + key + "' must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw std::invalid_argument(std::string("'") + key + "' must be finite");
  return d;
}

nlohmann::json vec(const Vec2& v) { return {v.x, v.y}; }

}  // namespace

TeleopSession::TeleopSession(ArmModel model, TeleopOptions options)
    : model_(std::move(model)), options_(std::move(options)) {
  model_.validate();
  if (!(options_.rate_hz > 0.0)) throw std::invalid_argument("tick rate must be positive");
  if (options_.task < 0 || static_cast<std::size_t>(options_.task) >= model_.task_count()) {
    throw std::out_of_range("teleop task out of range");
  }
  health_ = HealthVector::healthy(model_.joints());
  reset_scene();
}

double TeleopSession::world_extent() const {
  double sum = 0.0;
  for (double l : model_.link_lengths) sum += l;
  return sum;
}

void TeleopSession::reset_scene() {
  state_ = reset(model_, options_.task, options_.seed, health_);
  pointer_.reset();
  pending_grip_ = 0.0;
  pending_yaw_ = 0.0;
}

nlohmann::json TeleopSession::envelope(const std::string& type, nlohmann::json payload) const {
  return {{"type", type}, {"payload", std::move(payload)}, {"tick", tick_}};
}

nlohmann::json TeleopSession::error(const std::string& message, const std::string& received) const {
  return envelope("Error", {{"message", message}, {"received", received}});
}

std::optional<nlohmann::json> TeleopSession::submit(const std::string& text) {
  nlohmann::json msg;
  try {
    msg = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error&) {
    return error("message is not valid JSON", text);
  }
  if (!msg.is_object() || !msg.contains("type") || !msg["type"].is_string()) {
    return error("message must be an object with a string 'type'", text);
  }
  const std::string type = msg["type"].get<std::string>();
  if (!known_command(type)) return error("unknown command type '" + type + "'", text);
  nlohmann::json payload = msg.value("payload", nlohmann::json::object());
  if (!payload.is_object()) return error("'payload' must be an object", text);

  // Validate field presence and types now so a bad message never reaches the queue.
  try {
    if (type == "SetPointerTarget") {
      finite_number(payload, "x");
      finite_number(payload, "y");
    } else if (type == "GripperDelta" || type == "YawDelta") {
      finite_number(payload, "d");
    } else if (type == "SetDegradation") {
      degradation_from_json(payload).validate(model_.joints());
    } else if (type == "StartRecording") {
      const auto task = payload.at("task_id").get<int>();
      if (task < 0 || static_cast<std::size_t>(task) >= model_.task_count()) {
        throw std::out_of_range("task_id " + std::to_string(task) + " out of range");
      }
    } else if (type == "StopRecording") {
      if (!payload.at("save").is_boolean()) throw std::invalid_argument("'save' must be a boolean");
    } else if (type == "ResetScene") {
      // The parser stores every non-negative integer literal as unsigned.
      if (!payload.at("seed").is_number_unsigned()) {
        throw std::invalid_argument("'seed' must be a non-negative integer");
      }
    }
  } catch (const std::exception& e) {
    return error(type + ": " + e.what(), text);
  }
  queue_.push_back({type, std::move(payload)});
  return std::nullopt;
}

std::vector<nlohmann::json> TeleopSession::apply(const Command& c) {
  std::vector<nlohmann::json> notices;
  const auto& p = c.payload;
  const ActionBounds& b = model_.action_bounds;
  if (c.type == "SetPointerTarget") {
    const double r = world_extent();
    pointer_ = Vec2{std::clamp(p["x"].get<double>(), -r, r), std::clamp(p["y"].get<double>(), -r, r)};
  } else if (c.type == "GripperDelta") {
    pending_grip_ = std::clamp(pending_grip_ + p["d"].get<double>(), -b.grip, b.grip);
  } else if (c.type == "YawDelta") {
    pending_yaw_ = std::clamp(pending_yaw_ + p["d"].get<double>(), -b.yaw, b.yaw);
  } else if (c.type == "SetDegradation") {
    if (recording_) {
      notices.push_back(error("SetDegradation: health must stay constant while recording", p.dump()));
    } else {
      degradation_ = degradation_from_json(p);
      health_ = to_health_vector(degradation_, model_.joints());
      const auto limits = degraded_limits(model_, health_);
      for (std::size_t j = 0; j < state_.q.size(); ++j) state_.q[j] = limits[j].clamp(state_.q[j]);
    }
  } else if (c.type == "StartRecording") {
    if (recording_) {
      if (auto n = drop_recording("restarted")) notices.push_back(*n);
    }
    options_.task = p["task_id"].get<int>();
    reset_scene();
    Episode ep;
    ep.meta = {options_.task, options_.seed, degradation_, false, EpisodeSource::Teleop};
    recording_ = std::move(ep);
  } else if (c.type == "StopRecording") {
    if (!recording_) {
      notices.push_back(error("StopRecording: not recording", p.dump()));
    } else if (p["save"].get<bool>()) {
      Episode ep = std::move(*recording_);
      recording_.reset();
      ep.meta.success = is_success(model_, state_);
      std::ostringstream name;
      name << "teleop_t" << ep.meta.task_id << "_s" << ep.meta.seed << '_' << saved_count_++
           << ".jsonl";
      const auto path = options_.out_dir / name.str();
      std::filesystem::create_directories(options_.out_dir);
      save({ep}, path, model_.joints(), model_.task_count());
      notices.push_back(envelope("Saved", {{"path", path.string()},
                                           {"success", ep.meta.success},
                                           {"length", ep.steps.size()}}));
    } else {
      if (auto n = drop_recording("operator cancelled")) notices.push_back(*n);
    }
  } else if (c.type == "ResetScene") {
    if (recording_) {
      if (auto n = drop_recording("scene reset")) notices.push_back(*n);
    }
    options_.seed = p["seed"].get<std::uint64_t>();
    reset_scene();
  }
  return notices;
}

std::optional<nlohmann::json> TeleopSession::drop_recording(const std::string& reason) {
  if (!recording_) return std::nullopt;
  recording_.reset();
  return envelope("Discarded", {{"reason", reason}});
}

TeleopSession::TickResult TeleopSession::tick() {
  TickResult out;
  while (!queue_.empty()) {
    const Command c = std::move(queue_.front());
    queue_.pop_front();
    for (auto& n : apply(c)) out.notices.push_back(std::move(n));
  }

  const Pose2 ee = forward_kinematics(model_, state_.q);
  Action action{0.0, 0.0, pending_yaw_, pending_grip_};
  if (pointer_) {
    Vec2 d = *pointer_ - ee.position();
    const double n = d.norm();
    if (n > model_.action_bounds.ee) d = d * (model_.action_bounds.ee / n);
    action.dx = d.x;
    action.dy = d.y;
  }
  action = clamp_action(action, model_.action_bounds);
  pending_grip_ = 0.0;
  pending_yaw_ = 0.0;

  if (recording_) {
    Observation obs = observe(model_, state_);
    const auto proprio = obs.proprio;
    recording_->steps.push_back({std::move(obs), action, proprio, health_});
  }
  state_ = osc_step(model_, state_, action, health_);
  ++tick_;
  out.frame = state_frame(false);
  return out;
}

nlohmann::json TeleopSession::geometry() const {
  nlohmann::json limits = nlohmann::json::array();
  for (const auto& l : degraded_limits(model_, health_)) limits.push_back({l.min, l.max});
  return {{"link_lengths", model_.link_lengths}, {"limits", limits}, {"extent", world_extent()}};
}

nlohmann::json TeleopSession::state_frame(bool with_geometry) const {
  const Pose2 ee = forward_kinematics(model_, state_.q);
  nlohmann::json p = {
      {"q", state_.q},
      {"ee", {{"x", ee.x}, {"y", ee.y}, {"yaw", ee.yaw}}},
      {"gripper", state_.gripper},
      {"object", vec(state_.object_pos)},
      {"target", vec(state_.target_pos)},
      {"attached", state_.object_attached},
      {"health", std::vector<double>(health_.values().begin(), health_.values().end())},
      {"degradation", to_json(degradation_)},
      {"recording", recording_.has_value()},
      {"success", is_success(model_, state_)},
      {"task", options_.task},
      {"seed", options_.seed},
      {"pointer", pointer_ ? vec(*pointer_) : nlohmann::json(nullptr)},
  };
  if (with_geometry) p["geometry"] = geometry();
  return envelope("StateFrame", std::move(p));
}

}  // namespace faultarm
