#pragma once

#include <string>

#include "faultarm/arm.hpp"
#include "faultarm/health.hpp"

namespace faultarm {

/// One debug frame as a standalone SVG document. Joints are colored from
/// green (healthy) to red (locked); the object and target are drawn as
/// filled and hollow circles.
std::string render_svg(const ArmModel& model, const ArmState& state, const HealthVector& health,
                       int width_px = 480);

}  // namespace faultarm
