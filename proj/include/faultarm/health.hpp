#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace faultarm {

/// Closed joint-angle interval in radians.
struct JointLimits {
  double min = 0.0;
  double max = 0.0;

  double width() const { return max - min; }
  double midpoint() const { return 0.5 * (min + max); }
  bool contains(double q) const { return q >= min && q <= max; }
  double clamp(double q) const { return q < min ? min : (q > max ? max : q); }

  friend bool operator==(const JointLimits&, const JointLimits&) = default;
};

/// Per-joint health in [0, 1]. 1 is fully functional, 0 is a locked joint.
/// The gripper is not part of the vector.
class HealthVector {
 public:
  HealthVector() = default;
  explicit HealthVector(std::vector<double> values);

  static HealthVector healthy(std::size_t joints);

  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t j) const { return values_[j]; }
  double health(std::size_t j) const { return values_.at(j); }
  double weakness(std::size_t j) const { return 1.0 - values_.at(j); }
  std::span<const double> values() const { return values_; }
  bool fully_healthy() const;

  friend bool operator==(const HealthVector&, const HealthVector&) = default;

 private:
  std::vector<double> values_;
};

/// Sparse joint -> weakness assignment; unassigned joints are healthy.
class DegradationConfig {
 public:
  DegradationConfig() = default;

  static DegradationConfig single(std::size_t joint, double weakness);

  void set(std::size_t joint, double weakness);
  const std::map<std::size_t, double>& assignments() const { return weakness_; }
  bool empty() const { return weakness_.empty(); }

  /// Throws std::out_of_range when a joint index is >= joints.
  void validate(std::size_t joints) const;

  /// Short human-readable label, e.g. "healthy" or "j1:w0.7".
  std::string label() const;

  friend bool operator==(const DegradationConfig&, const DegradationConfig&) = default;

 private:
  std::map<std::size_t, double> weakness_;
};

/// Scales a commanded joint delta by the joint's health.
double apply_gain(double health, double commanded_delta);

/// Shrinks the nominal range around its midpoint so its width is scaled by `health`.
JointLimits degraded_limits(const JointLimits& nominal, double health);

HealthVector to_health_vector(const DegradationConfig& config, std::size_t joints);

// {"weakness": {"1": 0.7}}
nlohmann::json to_json(const DegradationConfig& config);
DegradationConfig degradation_from_json(const nlohmann::json& j);

}  // namespace faultarm
