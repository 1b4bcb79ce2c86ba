#pragma once

#include <span>

namespace tcnn {

/// Axis-aligned box with corners (x1, y1) top-left and (x2, y2) bottom-right.
/// x runs along the width axis, y along the height axis.
struct Box2D {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() > 0.0 && height() > 0.0 ? width() * height() : 0.0; }
  double cx() const { return 0.5 * (x1 + x2); }
  double cy() const { return 0.5 * (y1 + y2); }
  bool valid() const { return x1 <= x2 && y1 <= y2; }

  friend bool operator==(const Box2D&, const Box2D&) = default;
};

/// Intersection over union; 0 when either box has zero area.
double iou(const Box2D& a, const Box2D& b);

Box2D scale_box(const Box2D& b, double sx, double sy);
Box2D clamp_box(const Box2D& b, double width, double height);
/// Smallest box enclosing every box in `boxes`.
Box2D hull(std::span<const Box2D> boxes);

}  // namespace tcnn
