#include "tcnn/geometry.hpp"

#include <algorithm>
#include <stdexcept>

namespace tcnn {

double iou(const Box2D& a, const Box2D& b) {
  const double aa = a.area();
  const double ab = b.area();
  if (aa <= 0.0 || ab <= 0.0) return 0.0;
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (aa + ab - inter);
}

Box2D scale_box(const Box2D& b, double sx, double sy) {
  return {b.x1 * sx, b.y1 * sy, b.x2 * sx, b.y2 * sy};
}

Box2D clamp_box(const Box2D& b, double width, double height) {
  return {std::clamp(b.x1, 0.0, width), std::clamp(b.y1, 0.0, height),
          std::clamp(b.x2, 0.0, width), std::clamp(b.y2, 0.0, height)};
}

Box2D hull(std::span<const Box2D> boxes) {
  if (boxes.empty()) throw std::invalid_argument("hull of an empty box list");
  Box2D h = boxes.front();
  for (const Box2D& b : boxes.subspan(1)) {
    h.x1 = std::min(h.x1, b.x1);
    h.y1 = std::min(h.y1, b.y1);
    h.x2 = std::max(h.x2, b.x2);
    h.y2 = std::max(h.y2, b.y2);
  }
  return h;
}

}  // namespace tcnn
