#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "faultarm/arm.hpp"
#include "faultarm/episode.hpp"
#include "faultarm/health.hpp"

namespace faultarm {

// Wire envelope: {"type": <string>, "payload": <object>, "tick": <int>}.
//
// Client -> server types and payloads:
//   SetPointerTarget {x, y}        end-effector goal; clamped to the reachable box
//   GripperDelta     {d}           applied once on the next tick, clamped to the grip bound
//   YawDelta         {d}           applied once on the next tick, clamped to the yaw bound
//   SetDegradation   {weakness: {joint: w}}  rejected while recording
//   StartRecording   {task_id}     resets the scene (current seed) and starts capturing
//   StopRecording    {save}        ends capture; save=true writes a .jsonl episode
//   ResetScene       {seed}        new scene, current task; drops an unsaved recording
//
// Server -> client types:
//   StateFrame  every tick; the first frame sent to a client also carries "geometry"
//   Error       {message, received} for a rejected message; the session continues
//   Saved       {path, success, length} after StopRecording with save=true
//   Discarded   {reason} when an unsaved recording is dropped

struct TeleopOptions {
  double rate_hz = 20.0;
  std::filesystem::path out_dir = "data/teleop";
  std::uint64_t seed = 0;
  int task = 0;
};

/// Authoritative simulator state for one operator. Not thread-safe; the
/// server drives it from a single strand.
class TeleopSession {
 public:
  TeleopSession(ArmModel model, TeleopOptions options);

  /// Parses and validates one client message. Valid commands are queued for
  /// the next tick; an Error envelope is returned for anything else.
  std::optional<nlohmann::json> submit(const std::string& text);

  struct TickResult {
    nlohmann::json frame;
    std::vector<nlohmann::json> notices;  // Saved / Discarded / Error produced by queued commands
  };

  /// Applies queued commands in arrival order, advances the sim one step and
  /// returns the new StateFrame.
  TickResult tick();

  /// Called when the owning client disconnects.
  std::optional<nlohmann::json> drop_recording(const std::string& reason);

  nlohmann::json state_frame(bool with_geometry) const;
  nlohmann::json geometry() const;

  std::int64_t tick_count() const { return tick_; }
  bool recording() const { return recording_.has_value(); }
  const ArmState& state() const { return state_; }
  const ArmModel& model() const { return model_; }
  const TeleopOptions& options() const { return options_; }

  /// Box the pointer is clamped into: +/- total link length around the base.
  double world_extent() const;

 private:
  struct Command {
    std::string type;
    nlohmann::json payload;
  };

  std::vector<nlohmann::json> apply(const Command& c);
  void reset_scene();
  nlohmann::json envelope(const std::string& type, nlohmann::json payload) const;
  nlohmann::json error(const std::string& message, const std::string& received) const;

  ArmModel model_;
  TeleopOptions options_;
  DegradationConfig degradation_;
  HealthVector health_;
  ArmState state_;
  std::int64_t tick_ = 0;
  std::optional<Vec2> pointer_;
  double pending_grip_ = 0.0;
  double pending_yaw_ = 0.0;
  std::deque<Command> queue_;
  std::optional<Episode> recording_;
  std::size_t saved_count_ = 0;
};

}  // namespace faultarm
