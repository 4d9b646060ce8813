#include "faultarm/health.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace faultarm {

namespace {

void check_unit(double v, const char* what) {
  if (!(v >= 0.0 && v <= 1.0)) {
    std::ostringstream os;
    os << what << " must be in [0, 1], got " << v;
    throw std::invalid_argument(os.str());
  }
}

}  // namespace

HealthVector::HealthVector(std::vector<double> values) : values_(std::move(values)) {
  for (double v : values_) check_unit(v, "health value");
}

HealthVector HealthVector::healthy(std::size_t joints) {
  return HealthVector(std::vector<double>(joints, 1.0));
}

bool HealthVector::fully_healthy() const {
  for (double v : values_)
    if (v != 1.0) return false;
  return true;
}

DegradationConfig DegradationConfig::single(std::size_t joint, double weakness) {
  DegradationConfig c;
  c.set(joint, weakness);
  return c;
}

void DegradationConfig::set(std::size_t joint, double weakness) {
  check_unit(weakness, "weakness");
  weakness_[joint] = weakness;
}

void DegradationConfig::validate(std::size_t joints) const {
  for (const auto& [joint, w] : weakness_) {
    if (joint >= joints) {
      throw std::out_of_range("degradation joint index " + std::to_string(joint) +
                              " out of range for " + std::to_string(joints) + " joints");
    }
  }
}

std::string DegradationConfig::label() const {
  if (weakness_.empty()) return "healthy";
  std::ostringstream os;
  bool first = true;
  for (const auto& [joint, w] : weakness_) {
    if (!first) os << ',';
    os << 'j' << joint << ":w" << w;
    first = false;
  }
  return os.str();
}

double apply_gain(double health, double commanded_delta) {
  check_unit(health, "health value");
  return commanded_delta * health;
}

JointLimits degraded_limits(const JointLimits& nominal, double health) {
  if (!(nominal.min < nominal.max)) {
    throw std::invalid_argument("nominal joint interval must satisfy min < max");
  }
  check_unit(health, "health value");
  // Written so that health == 1 reproduces the nominal bounds bit-for-bit.
  const double shrink = (1.0 - health) * 0.5 * nominal.width();
  JointLimits out{nominal.min + shrink, nominal.max - shrink};
  if (out.max < out.min) out.max = out.min;
  return out;
}

HealthVector to_health_vector(const DegradationConfig& config, std::size_t joints) {
  config.validate(joints);
  std::vector<double> h(joints, 1.0);
  for (const auto& [joint, w] : config.assignments()) h[joint] = 1.0 - w;
  return HealthVector(std::move(h));
}

nlohmann::json to_json(const DegradationConfig& config) {
  nlohmann::json weakness = nlohmann::json::object();
  for (const auto& [joint, w] : config.assignments()) weakness[std::to_string(joint)] = w;
  return {{"weakness", weakness}};
}

DegradationConfig degradation_from_json(const nlohmann::json& j) {
  DegradationConfig c;
  if (!j.is_object()) throw std::invalid_argument("degradation must be a JSON object");
  auto it = j.find("weakness");
  if (it == j.end()) return c;
  if (!it->is_object()) throw std::invalid_argument("\"weakness\" must be an object");
  for (const auto& [key, value] : it->items()) {
    std::size_t pos = 0;
    unsigned long joint = 0;
    try {
      joint = std::stoul(key, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != key.size() || key.empty()) {
      throw std::invalid_argument("degradation joint key must be an integer string: " + key);
    }
    c.set(joint, value.get<double>());
  }
  return c;
}

}  // namespace faultarm
