#pragma once

#include <functional>

namespace sf {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point2 &) const = default;
};

/// Euclidean distance from p to the closed segment [a, b]. a == b is a point.
double distance_to_segment(Point2 p, Point2 a, Point2 b);

/// Calls fn(y, x) for every pixel of a height x width grid whose centre
/// (x + 0.5, y + 0.5) lies within `radius` of segment [a, b] (a round-capped
/// capsule). Pixels are visited once each, in raster order.
void for_each_capsule_pixel(Point2 a, Point2 b, double radius, int height, int width,
                            const std::function<void(int, int)> &fn);

} // namespace sf
