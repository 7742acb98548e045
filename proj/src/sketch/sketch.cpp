#include "sketchforge/sketch/sketch.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "sketchforge/core/errors.hpp"
#include "sketchforge/core/logging.hpp"

namespace sf {

std::string to_string(SketchStyle s) {
  switch (s) {
  case SketchStyle::xdog_default: return "xdog_default";
  case SketchStyle::xdog_soft: return "xdog_soft";
  case SketchStyle::xdog_heavy: return "xdog_heavy";
  case SketchStyle::dodge: return "dodge";
  }
  return "?";
}

SketchStyle parse_sketch_style(const std::string &s) {
  for (auto v : {SketchStyle::xdog_default, SketchStyle::xdog_soft, SketchStyle::xdog_heavy,
                 SketchStyle::dodge})
    if (to_string(v) == s)
      return v;
  throw ConfigError("unknown sketch style '" + s + "'");
}

std::string to_string(Category c) {
  switch (c) {
  case Category::face: return "face";
  case Category::car: return "car";
  case Category::bedroom: return "bedroom";
  }
  return "?";
}

Category parse_category(const std::string &s) {
  for (auto v : {Category::face, Category::car, Category::bedroom})
    if (to_string(v) == s)
      return v;
  throw ConfigError("unknown category '" + s + "'");
}

void SketchParams::validate() const {
  auto fail = [](const std::string &m) { throw ParameterError("sketch params: " + m); };
  if (!(xdog.sigma > 0.0))
    fail(fmt::format("xdog sigma must be > 0 (got {})", xdog.sigma));
  if (!(xdog.k > 1.0))
    fail(fmt::format("xdog k must be > 1 (got {})", xdog.k));
  if (!(xdog.tau >= 0.0) || !(xdog.epsilon >= 0.0) || !(xdog.phi >= 0.0))
    fail("xdog tau, epsilon and phi must be >= 0");
  if (!(dodge_sigma > 0.0))
    fail(fmt::format("dodge sigma must be > 0 (got {})", dodge_sigma));
  if (!(dodge_delta > 0.0))
    fail("dodge delta must be > 0");
  if (!(brightness_lo >= 0.0) || !(brightness_lo <= brightness_hi))
    fail(fmt::format("brightness range [{}, {}] invalid", brightness_lo, brightness_hi));
  if (cutoff.max_strokes < 0 || !(cutoff.width_lo >= 0.0) || cutoff.width_lo > cutoff.width_hi ||
      !(cutoff.length_lo >= 0.0) || cutoff.length_lo > cutoff.length_hi)
    fail("cutoff ranges must be nonnegative with lo <= hi");
}

SketchParams SketchParams::preset(SketchStyle style) {
  SketchParams p;
  p.style = style;
  if (style == SketchStyle::xdog_soft) {
    p.xdog.tau = 0.97;
    p.xdog.phi = 5.0;
  } else if (style == SketchStyle::xdog_heavy) {
    p.xdog.tau = 0.99;
    p.xdog.phi = 20.0;
  }
  return p;
}

nlohmann::json SketchParams::to_json() const {
  return {{"style", to_string(style)},
          {"xdog",
           {{"sigma", xdog.sigma},
            {"k", xdog.k},
            {"tau", xdog.tau},
            {"epsilon", xdog.epsilon},
            {"phi", xdog.phi}}},
          {"dodge_sigma", dodge_sigma},
          {"dodge_delta", dodge_delta},
          {"brightness_range", {brightness_lo, brightness_hi}},
          {"cutoff",
           {{"max_strokes", cutoff.max_strokes},
            {"width_range", {cutoff.width_lo, cutoff.width_hi}},
            {"length_range", {cutoff.length_lo, cutoff.length_hi}}}}};
}

SketchParams SketchParams::from_json(const nlohmann::json &j) {
  SketchParams p = preset(parse_sketch_style(j.value("style", std::string("xdog_default"))));
  if (j.contains("xdog")) {
    const auto &x = j["xdog"];
    p.xdog.sigma = x.value("sigma", p.xdog.sigma);
    p.xdog.k = x.value("k", p.xdog.k);
    p.xdog.tau = x.value("tau", p.xdog.tau);
    p.xdog.epsilon = x.value("epsilon", p.xdog.epsilon);
    p.xdog.phi = x.value("phi", p.xdog.phi);
  }
  p.dodge_sigma = j.value("dodge_sigma", p.dodge_sigma);
  p.dodge_delta = j.value("dodge_delta", p.dodge_delta);
  if (j.contains("brightness_range")) {
    p.brightness_lo = j["brightness_range"].at(0);
    p.brightness_hi = j["brightness_range"].at(1);
  }
  if (j.contains("cutoff")) {
    const auto &c = j["cutoff"];
    p.cutoff.max_strokes = c.value("max_strokes", p.cutoff.max_strokes);
    if (c.contains("width_range")) {
      p.cutoff.width_lo = c["width_range"].at(0);
      p.cutoff.width_hi = c["width_range"].at(1);
    }
    if (c.contains("length_range")) {
      p.cutoff.length_lo = c["length_range"].at(0);
      p.cutoff.length_hi = c["length_range"].at(1);
    }
  }
  p.validate();
  return p;
}

// ---------------------------------------------------------------------------

namespace {

ImageBuffer gray_of(const ImageBuffer &photo) {
  if (photo.channels() != 3 && photo.channels() != 1)
    throw ShapeError("sketch source must have 1 or 3 channels, got " + photo.describe());
  return luma(to_unit(photo));
}

} // namespace

ImageBuffer xdog_sketch(const ImageBuffer &photo, const XdogParams &p) {
  if (!(p.sigma > 0.0))
    throw ParameterError(fmt::format("xdog sigma must be > 0 (got {})", p.sigma));
  if (!(p.k > 1.0))
    throw ParameterError(fmt::format("xdog k must be > 1 (got {})", p.k));
  const ImageBuffer g = gray_of(photo);
  const ImageBuffer g1 = gaussian_blur(g, p.sigma);
  const ImageBuffer g2 = gaussian_blur(g, p.k * p.sigma);

  std::vector<double> d(g.size());
  double dmax = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    d[i] = g1.values()[i] - p.tau * g2.values()[i];
    dmax = std::max(dmax, d[i]);
  }
  ImageBuffer out(g.height(), g.width(), 1, ValueRange::unit, 1.0);
  if (dmax <= 1e-12)
    return out;
  auto o = out.values();
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double u = d[i] / dmax;
    o[i] = u >= p.epsilon ? 1.0 : std::clamp(1.0 + std::tanh(p.phi * (u - p.epsilon)), 0.0, 1.0);
  }
  return out;
}

ImageBuffer xdog_sketch(const ImageBuffer &photo, const SketchParams &p) {
  return xdog_sketch(photo, p.xdog);
}

ImageBuffer dodge_sketch(const ImageBuffer &photo, const SketchParams &p) {
  if (!(p.dodge_sigma > 0.0) || !(p.dodge_delta > 0.0))
    throw ParameterError("dodge sigma and delta must be > 0");
  const ImageBuffer g = gray_of(photo);
  ImageBuffer inv = g;
  for (double &v : inv.values())
    v = 1.0 - v;
  const ImageBuffer blurred = gaussian_blur(inv, p.dodge_sigma);
  ImageBuffer out(g.height(), g.width(), 1, ValueRange::unit);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double num = g.values()[i] + p.dodge_delta;
    const double den = 1.0 - blurred.values()[i] + p.dodge_delta;
    out.values()[i] = std::clamp(num / den, 0.0, 1.0);
  }
  return out;
}

ImageBuffer synthesize_sketch(const ImageBuffer &photo, const SketchParams &p) {
  return p.style == SketchStyle::dodge ? dodge_sketch(photo, p) : xdog_sketch(photo, p.xdog);
}

// ---------------------------------------------------------------------------

int resize_target(Category c) { return c == Category::car ? 170 : 256; }

AugmentedPair resize_and_random_crop(const ImageBuffer &photo, const ImageBuffer &sketch,
                                     Category category, Rng &rng) {
  if (photo.height() != sketch.height() || photo.width() != sketch.width())
    throw ShapeError("photo " + photo.describe() + " and sketch " + sketch.describe() +
                     " are not aligned");
  const int s = resize_target(category);
  if (photo.height() < s || photo.width() < s)
    logger()->debug("upscaling {}x{} source to {}x{}", photo.height(), photo.width(), s, s);
  const ImageBuffer p = resize_bilinear(photo, s, s);
  const ImageBuffer k = resize_bilinear(sketch, s, s);
  AugmentedPair out;
  out.crop_origin.y = static_cast<int>(rng.uniform_int(0, s - kTrainResolution));
  out.crop_origin.x = static_cast<int>(rng.uniform_int(0, s - kTrainResolution));
  out.target_photo = crop(p, out.crop_origin.y, out.crop_origin.x, kTrainResolution,
                          kTrainResolution);
  out.input_sketch = crop(k, out.crop_origin.y, out.crop_origin.x, kTrainResolution,
                          kTrainResolution);
  return out;
}

ImageBuffer brightness_jitter(const ImageBuffer &sketch, double factor) {
  if (!(factor >= 0.0))
    throw ParameterError(fmt::format("brightness factor must be >= 0 (got {})", factor));
  ImageBuffer out = sketch;
  for (double &v : out.values())
    v = std::clamp(1.0 - factor * (1.0 - v), 0.0, 1.0);
  return out;
}

CutoffResult cutoff_augment_detailed(const ImageBuffer &sketch, Rng &rng, const CutoffParams &p) {
  if (sketch.channels() != 1)
    throw ShapeError("cutoff expects a single-channel sketch, got " + sketch.describe());
  CutoffResult r{sketch, {}};
  const int k = static_cast<int>(rng.uniform_int(0, p.max_strokes));
  for (int i = 0; i < k; ++i) {
    CutoffStroke s;
    s.a = {rng.uniform(0.0, sketch.width()), rng.uniform(0.0, sketch.height())};
    const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double len = rng.uniform(p.length_lo, p.length_hi);
    s.width = rng.uniform(p.width_lo, p.width_hi);
    s.b = {s.a.x + len * std::cos(theta), s.a.y + len * std::sin(theta)};
    for_each_capsule_pixel(s.a, s.b, 0.5 * s.width, sketch.height(), sketch.width(),
                           [&](int y, int x) { r.image.at(y, x) = std::max(r.image.at(y, x), 1.0); });
    r.strokes.push_back(s);
  }
  return r;
}

ImageBuffer cutoff_augment(const ImageBuffer &sketch, Rng &rng, const CutoffParams &p) {
  return cutoff_augment_detailed(sketch, rng, p).image;
}

} // namespace sf
