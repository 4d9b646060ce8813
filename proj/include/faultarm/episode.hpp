#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "faultarm/arm.hpp"
#include "faultarm/health.hpp"

namespace faultarm {

enum class EpisodeSource { Expert, Teleop, PolicyRollout };

std::string to_string(EpisodeSource s);
EpisodeSource episode_source_from_string(const std::string& s);

struct StepRecord {
  Observation observation;
  Action action;
  std::array<double, 4> proprio{};
  HealthVector health;

  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

struct EpisodeMeta {
  int task_id = 0;
  std::uint64_t seed = 0;
  DegradationConfig degradation;
  bool success = false;
  EpisodeSource source = EpisodeSource::Expert;

  friend bool operator==(const EpisodeMeta&, const EpisodeMeta&) = default;
};

struct Episode {
  EpisodeMeta meta;
  std::vector<StepRecord> steps;

  friend bool operator==(const Episode&, const Episode&) = default;
};

/// Thrown by `load` with the 1-based line number of the offending record.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& message);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

constexpr int kEpisodeFormatVersion = 1;

// JSON-lines layout:
//   {"type":"header","format_version":1,"action_dim":4,"J":4,"T":4}
//   {"type":"episode","task_id":..,"seed":..,"degradation":{..},"success":..,"source":..,"length":n}
//   {"type":"step","obs":[..],"proprio":[..],"action":[..],"health":[..]}   (n times)
void save(const std::vector<Episode>& episodes, const std::filesystem::path& path,
          std::size_t joints, std::size_t tasks);
void write_episodes(std::ostream& out, const std::vector<Episode>& episodes, std::size_t joints,
                    std::size_t tasks);
std::vector<Episode> load(const std::filesystem::path& path);
std::vector<Episode> read_episodes(std::istream& in);

/// Loads every `*.jsonl` file in a directory (sorted by name), or a single file.
std::vector<Episode> load_dataset(const std::filesystem::path& path);

std::size_t total_steps(const std::vector<Episode>& episodes);

/// Per-dimension action bounds. Dimensions with `normalized == false` pass
/// through unscaled and are only clipped to [-1, 1] (the gripper channel).
struct NormStats {
  double low_quantile = 0.01;
  double high_quantile = 0.99;
  std::array<double, Action::kDim> q_low{};
  std::array<double, Action::kDim> q_high{};
  std::array<bool, Action::kDim> normalized{true, true, true, false};

  friend bool operator==(const NormStats&, const NormStats&) = default;
};

constexpr double kDegenerateWidening = 1e-6;

/// Linear interpolation between order statistics at position q * (n - 1).
double quantile(std::vector<double> values, double q);

NormStats compute_norm_stats(const std::vector<Episode>& episodes, double low_q = 0.01,
                             double high_q = 0.99);

std::array<double, Action::kDim> normalize(const Action& action, const NormStats& stats);
Action denormalize(const std::array<double, Action::kDim>& normalized, const NormStats& stats);

nlohmann::json to_json(const NormStats& stats);
NormStats norm_stats_from_json(const nlohmann::json& j);
void save_norm_stats(const NormStats& stats, const std::filesystem::path& path);
NormStats load_norm_stats(const std::filesystem::path& path);

}  // namespace faultarm
