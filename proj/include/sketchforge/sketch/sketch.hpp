#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sketchforge/core/image.hpp"
#include "sketchforge/core/raster.hpp"
#include "sketchforge/core/rng.hpp"

namespace sf {

enum class SketchStyle { xdog_default, xdog_soft, xdog_heavy, dodge };

std::string to_string(SketchStyle s);
SketchStyle parse_sketch_style(const std::string &s);

enum class Category { face, car, bedroom };

std::string to_string(Category c);
Category parse_category(const std::string &s);

/// Extended difference of Gaussians with soft thresholding. sigma is in
/// pixels of the image being filtered.
struct XdogParams {
  double sigma = 0.5;
  double k = 1.6;
  double tau = 0.98;
  double epsilon = 0.1;
  double phi = 10.0;
};

struct CutoffParams {
  int max_strokes = 8;
  double width_lo = 1.0, width_hi = 4.0;
  double length_lo = 8.0, length_hi = 48.0;
};

struct SketchParams {
  SketchStyle style = SketchStyle::xdog_default;
  XdogParams xdog;
  double dodge_sigma = 4.0;
  double dodge_delta = 1e-3;
  double brightness_lo = 0.5, brightness_hi = 1.0;
  CutoffParams cutoff;

  /// Throws ParameterError on sigma <= 0, k <= 1, lo > hi or negative ranges.
  void validate() const;

  static SketchParams preset(SketchStyle style);
  nlohmann::json to_json() const;
  static SketchParams from_json(const nlohmann::json &j);
};

/// Single-channel sketch in [0,1], 1 = background.
///   D = G_sigma(L) - tau * G_{k sigma}(L),  u = D / max(D)
///   T = 1                          if u >= epsilon
///       1 + tanh(phi (u - epsilon)) otherwise
/// If max(D) is not positive the result is all white.
ImageBuffer xdog_sketch(const ImageBuffer &photo, const XdogParams &p);
ImageBuffer xdog_sketch(const ImageBuffer &photo, const SketchParams &p);

/// Colour-dodge of luma over the blurred inverted luma, smoothed by delta:
///   out = clamp((g + delta) / (1 - blur(1 - g) + delta), 0, 1)
ImageBuffer dodge_sketch(const ImageBuffer &photo, const SketchParams &p);

/// Dispatches on p.style.
ImageBuffer synthesize_sketch(const ImageBuffer &photo, const SketchParams &p);

inline constexpr int kTrainResolution = 128;
/// Side length the source is scaled to before cropping (170 for cars, 256 otherwise).
int resize_target(Category c);

struct CropOrigin {
  int y = 0;
  int x = 0;
  bool operator==(const CropOrigin &) const = default;
};

struct AugmentedPair {
  ImageBuffer input_sketch;
  ImageBuffer target_photo;
  CropOrigin crop_origin;
  double applied_brightness = 1.0;
  int cutoff_strokes_used = 0;
};

/// Scales both images to resize_target(category) squared, then takes the same
/// 128x128 window from each with its origin drawn uniformly from rng.
AugmentedPair resize_and_random_crop(const ImageBuffer &photo, const ImageBuffer &sketch,
                                     Category category, Rng &rng);

/// out = clamp(1 - factor (1 - in), 0, 1). Negative factor is a ParameterError.
ImageBuffer brightness_jitter(const ImageBuffer &sketch, double factor);

struct CutoffStroke {
  Point2 a, b;
  double width = 1.0;
};

struct CutoffResult {
  ImageBuffer image;
  std::vector<CutoffStroke> strokes;
};

/// Overlays k ~ U{0..max_strokes} white capsules (uniform start, direction,
/// length and width) via pointwise max.
CutoffResult cutoff_augment_detailed(const ImageBuffer &sketch, Rng &rng, const CutoffParams &p);
ImageBuffer cutoff_augment(const ImageBuffer &sketch, Rng &rng, const CutoffParams &p);

} // namespace sf
