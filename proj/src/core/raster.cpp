#include "sketchforge/core/raster.hpp"

#include <algorithm>
#include <cmath>

namespace sf {

double distance_to_segment(Point2 p, Point2 a, Point2 b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = 0.0;
  if (len2 > 0.0)
    t = std::clamp(((p.x - a.x) * dx + (p.y - a.y) * dy) / len2, 0.0, 1.0);
  const double ex = p.x - (a.x + t * dx), ey = p.y - (a.y + t * dy);
  return std::sqrt(ex * ex + ey * ey);
}

void for_each_capsule_pixel(Point2 a, Point2 b, double radius, int height, int width,
                            const std::function<void(int, int)> &fn) {
  if (radius < 0.0)
    return;
  const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a.x, b.x) - radius - 0.5)));
  const int x1 = std::min(width - 1, static_cast<int>(std::ceil(std::max(a.x, b.x) + radius)));
  const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a.y, b.y) - radius - 0.5)));
  const int y1 = std::min(height - 1, static_cast<int>(std::ceil(std::max(a.y, b.y) + radius)));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x)
      if (distance_to_segment({x + 0.5, y + 0.5}, a, b) <= radius)
        fn(y, x);
}

} // namespace sf
