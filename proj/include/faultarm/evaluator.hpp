#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "faultarm/arm.hpp"
#include "faultarm/episode.hpp"
#include "faultarm/expert.hpp"
#include "faultarm/health.hpp"
#include "faultarm/policy.hpp"

namespace faultarm {

/// Closed-loop decision maker. One instance drives one episode at a time.
class Controller {
 public:
  virtual ~Controller() = default;
  virtual void begin_episode() = 0;
  virtual Action act(const ArmModel& model, const ArmState& state, const HealthVector& health) = 0;
};

/// Queries the policy for a chunk and executes `replan_every` of its actions
/// (clamped to the chunk length) before querying again.
class PolicyController : public Controller {
 public:
  PolicyController(std::shared_ptr<const PolicyCheckpoint> checkpoint, std::size_t replan_every);
  void begin_episode() override;
  Action act(const ArmModel& model, const ArmState& state, const HealthVector& health) override;

 private:
  std::shared_ptr<const PolicyCheckpoint> ckpt_;
  std::size_t replan_every_;
  std::deque<Action> pending_;
};

class ExpertController : public Controller {
 public:
  explicit ExpertController(ExpertTuning tuning = {}) : tuning_(tuning) {}
  void begin_episode() override;
  Action act(const ArmModel& model, const ArmState& state, const HealthVector& health) override;

 private:
  ExpertTuning tuning_;
  ExpertContext ctx_;
  bool started_ = false;
};

using ControllerFactory = std::function<std::unique_ptr<Controller>()>;

/// Rolls `controller` out from reset until success or the horizon and
/// records every step.
Episode rollout(const ArmModel& model, Controller& controller, int task_id, std::uint64_t seed,
                const DegradationConfig& degradation);

struct ReplayCheck {
  bool success = false;             // re-simulated final success
  bool success_matches = false;     // equals the stored flag
  bool observations_match = false;  // every stored observation reproduced
};

/// Re-simulates the stored actions from the episode's reset scene.
ReplayCheck replay_episode(const ArmModel& model, const Episode& episode);

/// Seed of episode `index` of `task`; shared across cells so every cell sees
/// the same initial scenes.
std::uint64_t eval_seed(std::uint64_t base, int task, std::size_t index);

struct CellResult {
  std::size_t successes = 0;
  std::size_t episodes = 0;
  double rate() const { return episodes ? static_cast<double>(successes) / episodes : 0.0; }
};

struct EvalCell {
  int joint = -1;  // -1 for the healthy cell
  double weakness = 0.0;
  CellResult total;
  std::vector<CellResult> per_task;  // indexed like EvalOptions::tasks
};

struct EvalOptions {
  std::vector<double> levels{0.3, 0.5, 0.7, 0.9};
  std::vector<int> tasks;       // empty: every task in the model
  std::vector<int> joints;      // empty: every joint
  bool include_healthy = true;
  std::size_t episodes_per_task = 10;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

struct EvalMatrix {
  std::string label;
  std::vector<double> levels;
  std::vector<int> tasks;
  std::vector<int> joints;
  std::vector<EvalCell> cells;  // healthy first (if evaluated), then joint-major, level-minor

  const EvalCell* healthy() const;
  const EvalCell* find(int joint, double weakness) const;
  /// Mean of the joint's level rates; NaN if none were evaluated.
  double joint_average(int joint) const;
};

EvalCell run_cell(const ArmModel& model, const ControllerFactory& make_controller, int joint,
                  double weakness, const EvalOptions& options);

EvalMatrix run_matrix(const ArmModel& model, const ControllerFactory& make_controller,
                      const EvalOptions& options, const std::string& label = "");

/// "30.0" for 3/10.
std::string format_rate(double rate);

std::string matrix_csv(const EvalMatrix& m);
std::string matrix_markdown(const EvalMatrix& m);
std::string per_task_csv(const EvalMatrix& m);

/// Baseline vs conditioned, one row per (joint, level) plus healthy; the ">"
/// column marks cells where `ours` beats `baseline`.
std::string comparison_csv(const EvalMatrix& baseline, const EvalMatrix& ours);
std::string comparison_markdown(const EvalMatrix& baseline, const EvalMatrix& ours);

nlohmann::json to_json(const EvalMatrix& m);
EvalMatrix eval_matrix_from_json(const nlohmann::json& j);

}  // namespace faultarm
