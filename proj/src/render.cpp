#include "faultarm/render.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace faultarm {

namespace {

std::string health_color(double h) {
  const int r = static_cast<int>(std::lround(255.0 * (1.0 - h)));
  const int g = static_cast<int>(std::lround(200.0 * h));
  std::ostringstream os;
  os << "rgb(" << r << ',' << g << ",40)";
  return os.str();
}

}  // namespace

std::string render_svg(const ArmModel& model, const ArmState& state, const HealthVector& health,
                       int width_px) {
  double reach = 0.0;
  for (double l : model.link_lengths) reach += l;
  const double extent = 1.1 * reach;
  const double scale = width_px / (2.0 * extent);
  const int height_px = width_px;
  auto px = [&](double x) { return (x + extent) * scale; };
  auto py = [&](double y) { return (extent - y) * scale; };

  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width_px << "\" height=\""
     << height_px << "\" viewBox=\"0 0 " << width_px << ' ' << height_px << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"#fafafa\"/>\n";
  os << "<line x1=\"0\" y1=\"" << py(0.0) << "\" x2=\"" << width_px << "\" y2=\"" << py(0.0)
     << "\" stroke=\"#bbb\"/>\n";

  const double marker = std::max(3.0, model.success_tolerance * scale);
  os << "<circle cx=\"" << px(state.target_pos.x) << "\" cy=\"" << py(state.target_pos.y)
     << "\" r=\"" << marker << "\" fill=\"none\" stroke=\"#2a6\" stroke-width=\"2\"/>\n";

  double x = 0.0, y = 0.0, angle = 0.0;
  for (std::size_t j = 0; j < state.q.size(); ++j) {
    angle += state.q[j];
    const double nx = x + model.link_lengths[j] * std::cos(angle);
    const double ny = y + model.link_lengths[j] * std::sin(angle);
    os << "<line x1=\"" << px(x) << "\" y1=\"" << py(y) << "\" x2=\"" << px(nx) << "\" y2=\""
       << py(ny) << "\" stroke=\"#456\" stroke-width=\"6\" stroke-linecap=\"round\"/>\n";
    const double h = j < health.size() ? health[j] : 1.0;
    os << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y) << "\" r=\"6\" fill=\""
       << health_color(h) << "\"/>\n";
    x = nx;
    y = ny;
  }
  os << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y) << "\" r=\"5\" fill=\""
     << (state.gripper < 0.5 ? "#333" : "#fff") << "\" stroke=\"#333\"/>\n";
  os << "<circle cx=\"" << px(state.object_pos.x) << "\" cy=\"" << py(state.object_pos.y)
     << "\" r=\"7\" fill=\"#d73\"/>\n";
  os << "<text x=\"8\" y=\"18\" font-family=\"monospace\" font-size=\"13\">tick " << state.tick
     << (is_success(model, state) ? "  success" : "") << "</text>\n";
  os << "</svg>\n";
  return os.str();
}

}  // namespace faultarm
