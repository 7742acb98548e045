#include "sketchforge/strokes/strokes.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

namespace sf {

StrokeError::StrokeError(int index, const std::string &what)
    : ValidationError(fmt::format("stroke {}: {}", index, what)), index_(index) {}

nlohmann::json StrokeSet::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto &s : strokes) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto &p : s.points)
      pts.push_back({p.x, p.y});
    arr.push_back({{"points", pts}, {"color", s.color}, {"width", s.width}});
  }
  return {{"strokes", arr}};
}

StrokeSet StrokeSet::from_json(const nlohmann::json &j) {
  if (!j.is_object() || !j.contains("strokes") || !j["strokes"].is_array())
    throw ValidationError("stroke set must be an object with a 'strokes' array");
  StrokeSet set;
  const auto &arr = j["strokes"];
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const auto &js = arr[i];
    const int idx = static_cast<int>(i);
    if (!js.is_object())
      throw StrokeError(idx, "not an object");
    ColorStroke s;
    if (!js.contains("points") || !js["points"].is_array())
      throw StrokeError(idx, "missing 'points' array");
    for (const auto &p : js["points"]) {
      if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
        throw StrokeError(idx, "each point must be [x, y]");
      s.points.push_back({p[0].get<double>(), p[1].get<double>()});
    }
    if (!js.contains("color") || !js["color"].is_array() || js["color"].size() != 3)
      throw StrokeError(idx, "color must be [r, g, b]");
    for (int c = 0; c < 3; ++c) {
      if (!js["color"][c].is_number())
        throw StrokeError(idx, "color components must be numbers");
      s.color[c] = js["color"][c].get<double>();
    }
    if (!js.contains("width") || !js["width"].is_number())
      throw StrokeError(idx, "missing numeric 'width'");
    s.width = js["width"].get<double>();
    set.strokes.push_back(std::move(s));
  }
  return set;
}

void StrokeSet::validate(int height, int width) const {
  for (std::size_t i = 0; i < strokes.size(); ++i) {
    const auto &s = strokes[i];
    const int idx = static_cast<int>(i);
    if (s.points.empty())
      throw StrokeError(idx, "has no points");
    if (!(s.width >= 1.0) || !std::isfinite(s.width))
      throw StrokeError(idx, fmt::format("width {} < 1", s.width));
    for (double c : s.color)
      if (!(c >= 0.0 && c <= 1.0))
        throw StrokeError(idx, fmt::format("color component {} outside [0, 1]", c));
    for (const auto &p : s.points)
      if (!(p.x >= 0.0 && p.x <= width && p.y >= 0.0 && p.y <= height))
        throw StrokeError(idx, fmt::format("point ({}, {}) outside the {}x{} canvas", p.x, p.y,
                                           width, height));
  }
}

void StrokeSamplerParams::validate() const {
  if (!(blur_sigma > 0.0) || !(max_length > 0.0) || !(step_size > 0.0) ||
      !(color_restart_threshold > 0.0) || n_strokes_lo < 0 || n_strokes_lo > n_strokes_hi ||
      !(width_lo >= 1.0) || width_lo > width_hi || !(turn_sigma >= 0.0) ||
      !(momentum >= 0.0 && momentum < 1.0))
    throw ParameterError(fmt::format("invalid stroke sampler params: {}", to_json().dump()));
}

nlohmann::json StrokeSamplerParams::to_json() const {
  return {{"blur_sigma", blur_sigma},
          {"n_strokes_range", {n_strokes_lo, n_strokes_hi}},
          {"max_length", max_length},
          {"width_range", {width_lo, width_hi}},
          {"color_restart_threshold", color_restart_threshold},
          {"step_size", step_size},
          {"momentum", momentum},
          {"turn_sigma", turn_sigma}};
}

StrokeSamplerParams StrokeSamplerParams::from_json(const nlohmann::json &j) {
  StrokeSamplerParams p;
  p.blur_sigma = j.value("blur_sigma", p.blur_sigma);
  if (j.contains("n_strokes_range")) {
    p.n_strokes_lo = j["n_strokes_range"].at(0);
    p.n_strokes_hi = j["n_strokes_range"].at(1);
  }
  p.max_length = j.value("max_length", p.max_length);
  if (j.contains("width_range")) {
    p.width_lo = j["width_range"].at(0);
    p.width_hi = j["width_range"].at(1);
  }
  p.color_restart_threshold = j.value("color_restart_threshold", p.color_restart_threshold);
  p.step_size = j.value("step_size", p.step_size);
  p.momentum = j.value("momentum", p.momentum);
  p.turn_sigma = j.value("turn_sigma", p.turn_sigma);
  p.validate();
  return p;
}

double color_distance(const Rgb &a, const Rgb &b) {
  const double dr = a[0] - b[0], dg = a[1] - b[1], db = a[2] - b[2];
  return std::sqrt(dr * dr + dg * dg + db * db);
}

Rgb sample_pixel(const ImageBuffer &img, Point2 p) {
  const int x = std::clamp(static_cast<int>(std::floor(p.x)), 0, img.width() - 1);
  const int y = std::clamp(static_cast<int>(std::floor(p.y)), 0, img.height() - 1);
  return {img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2)};
}

SampledStrokes sample_color_strokes_detailed(const ImageBuffer &gt, const StrokeSamplerParams &p,
                                             Rng &rng) {
  if (gt.channels() != 3)
    throw ShapeError("stroke sampling needs a 3-channel image, got " + gt.describe());
  p.validate();
  SampledStrokes out;
  out.blurred = gaussian_blur(to_unit(gt), p.blur_sigma);
  const ImageBuffer &bl = out.blurred;
  const double W = gt.width(), H = gt.height();
  auto &strokes = out.strokes.strokes;

  const auto k = static_cast<std::size_t>(rng.uniform_int(p.n_strokes_lo, p.n_strokes_hi));
  while (strokes.size() < k) {
    ColorStroke s;
    const Point2 start{rng.uniform(0.0, W), rng.uniform(0.0, H)};
    s.points = {start};
    s.color = sample_pixel(bl, start);
    s.width = rng.uniform(p.width_lo, p.width_hi);
    double heading = rng.uniform(0.0, 2.0 * std::numbers::pi);
    double omega = 0.0;
    double length = 0.0;
    bool budget_spent = false;

    while (length + p.step_size <= p.max_length) {
      omega = p.momentum * omega + p.turn_sigma * rng.normal();
      heading += omega;
      const Point2 &head = s.points.back();
      const Point2 q{head.x + p.step_size * std::cos(heading),
                     head.y + p.step_size * std::sin(heading)};
      if (!(q.x >= 0.0 && q.x < W && q.y >= 0.0 && q.y < H))
        break;
      const Rgb c = sample_pixel(bl, q);
      if (color_distance(c, s.color) > p.color_restart_threshold) {
        strokes.push_back(std::move(s));
        ++out.restarts;
        if (strokes.size() >= k) {
          budget_spent = true;
          break;
        }
        s = ColorStroke{{q}, c, strokes.back().width};
        length = 0.0;
        continue;
      }
      s.points.push_back(q);
      length += p.step_size;
    }
    if (!budget_spent)
      strokes.push_back(std::move(s));
  }
  return out;
}

StrokeSet sample_color_strokes(const ImageBuffer &gt, const StrokeSamplerParams &p, Rng &rng) {
  return sample_color_strokes_detailed(gt, p, rng).strokes;
}

// ---------------------------------------------------------------------------

std::size_t CoverageMask::count() const {
  return static_cast<std::size_t>(std::count(m_.begin(), m_.end(), std::uint8_t{1}));
}

CoverageMask CoverageMask::dilate(int radius) const {
  if (radius <= 0)
    return *this;
  CoverageMask out(h_, w_);
  for (int y = 0; y < h_; ++y)
    for (int x = 0; x < w_; ++x) {
      if (!at(y, x))
        continue;
      for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (dy * dy + dx * dx <= radius * radius && yy >= 0 && yy < h_ && xx >= 0 && xx < w_)
            out.set(yy, xx);
        }
    }
  return out;
}

StrokeRaster rasterize_strokes(const StrokeSet &strokes, const ImageBuffer &background) {
  if (background.channels() != 3)
    throw ShapeError("stroke background must have 3 channels, got " + background.describe());
  const int H = background.height(), W = background.width();
  strokes.validate(H, W);
  StrokeRaster r{to_unit(background), CoverageMask(H, W)};
  for (const auto &s : strokes.strokes) {
    auto paint = [&](int y, int x) {
      for (int c = 0; c < 3; ++c)
        r.image.at(y, x, c) = s.color[c];
      r.mask.set(y, x);
    };
    const double radius = 0.5 * s.width;
    if (s.points.size() == 1)
      for_each_capsule_pixel(s.points[0], s.points[0], radius, H, W, paint);
    for (std::size_t i = 1; i < s.points.size(); ++i)
      for_each_capsule_pixel(s.points[i - 1], s.points[i], radius, H, W, paint);
  }
  return r;
}

StrokeRaster rasterize_strokes(const StrokeSet &strokes, int height, int width, const Rgb &fill) {
  ImageBuffer bg(height, width, 3, ValueRange::unit);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < 3; ++c)
        bg.at(y, x, c) = fill[c];
  return rasterize_strokes(strokes, bg);
}

ImageBuffer compose_sketch_input(const ImageBuffer &sketch, const StrokeSet &strokes) {
  ImageBuffer base;
  if (sketch.channels() == 1)
    base = replicate_channels(to_unit(sketch), 3);
  else if (sketch.channels() == 3)
    base = to_unit(sketch);
  else
    throw ShapeError("sketch must have 1 or 3 channels, got " + sketch.describe());
  if (strokes.empty())
    return base;
  return rasterize_strokes(strokes, base).image;
}

ImageBuffer compose_colorization_input(const ImageBuffer &gray, const StrokeSet &strokes) {
  if (gray.channels() != 1 && gray.channels() != 3)
    throw ShapeError("colorization source must have 1 or 3 channels, got " + gray.describe());
  const ImageBuffer g = gray.channels() == 1 ? to_unit(gray) : luma(to_unit(gray));
  const StrokeRaster hints =
      rasterize_strokes(strokes, g.height(), g.width(), {kNeutralHint, kNeutralHint, kNeutralHint});
  ImageBuffer out(g.height(), g.width(), 4, ValueRange::unit);
  for (int y = 0; y < g.height(); ++y)
    for (int x = 0; x < g.width(); ++x) {
      out.at(y, x, 0) = g.at(y, x);
      for (int c = 0; c < 3; ++c)
        out.at(y, x, c + 1) = hints.image.at(y, x, c);
    }
  return out;
}

} // namespace sf
