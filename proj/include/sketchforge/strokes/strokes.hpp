#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sketchforge/core/errors.hpp"
#include "sketchforge/core/image.hpp"
#include "sketchforge/core/raster.hpp"
#include "sketchforge/core/rng.hpp"

namespace sf {

using Rgb = std::array<double, 3>;

/// Polyline in pixel coordinates (x right, y down; pixel (i, j) spans
/// [j, j+1) x [i, i+1)). Colours are RGB in [0, 1].
struct ColorStroke {
  std::vector<Point2> points;
  Rgb color{0.0, 0.0, 0.0};
  double width = 1.0;
  bool operator==(const ColorStroke &) const = default;
};

/// Rejected stroke; `index` is its position in the set.
class StrokeError : public ValidationError {
public:
  StrokeError(int index, const std::string &what);
  int index() const { return index_; }

private:
  int index_;
};

struct StrokeSet {
  std::vector<ColorStroke> strokes;

  bool empty() const { return strokes.empty(); }
  std::size_t size() const { return strokes.size(); }
  bool operator==(const StrokeSet &) const = default;

  /// {"strokes": [{"points": [[x, y], ...], "color": [r, g, b], "width": w}]}
  nlohmann::json to_json() const;
  /// Throws StrokeError naming the first malformed stroke.
  static StrokeSet from_json(const nlohmann::json &j);

  /// Checks every stroke: >= 1 point, finite coordinates inside
  /// [0, width] x [0, height], width >= 1, colour in [0, 1].
  void validate(int height, int width) const;
};

struct StrokeSamplerParams {
  double blur_sigma = 4.0;
  int n_strokes_lo = 1, n_strokes_hi = 8;
  double max_length = 48.0;
  double width_lo = 2.0, width_hi = 5.0;
  /// Euclidean RGB distance in [0, 1]^3.
  double color_restart_threshold = 0.15;
  double step_size = 1.0;
  /// Heading random walk: omega <- momentum * omega + turn_sigma * N(0, 1).
  double momentum = 0.8;
  double turn_sigma = 0.15;

  void validate() const;
  nlohmann::json to_json() const;
  static StrokeSamplerParams from_json(const nlohmann::json &j);
};

double color_distance(const Rgb &a, const Rgb &b);

/// Colour of `img` at the pixel containing p (floor of coordinates, clamped).
Rgb sample_pixel(const ImageBuffer &img, Point2 p);

struct SampledStrokes {
  StrokeSet strokes;
  ImageBuffer blurred; ///< the blurred ground truth the strokes were drawn from
  int restarts = 0;
};

/// Scribble simulation on the blurred ground truth. Each stroke starts at a
/// uniform location with the colour beneath it and grows along a smoothed
/// random heading until max_length, the canvas edge, or a pixel whose colour
/// differs by more than the restart threshold; in the last case a new stroke
/// (counted against the budget) starts there with that pixel's colour.
SampledStrokes sample_color_strokes_detailed(const ImageBuffer &gt, const StrokeSamplerParams &p,
                                             Rng &rng);
StrokeSet sample_color_strokes(const ImageBuffer &gt, const StrokeSamplerParams &p, Rng &rng);

class CoverageMask {
public:
  CoverageMask() = default;
  CoverageMask(int height, int width) : h_(height), w_(width), m_(std::size_t(height) * width) {}

  int height() const { return h_; }
  int width() const { return w_; }
  bool at(int y, int x) const { return m_[std::size_t(y) * w_ + x] != 0; }
  void set(int y, int x, bool v = true) { m_[std::size_t(y) * w_ + x] = v ? 1 : 0; }
  std::size_t count() const;
  /// Pixels within Euclidean distance `radius` of a covered pixel.
  CoverageMask dilate(int radius) const;
  bool operator==(const CoverageMask &) const = default;

private:
  int h_ = 0, w_ = 0;
  std::vector<std::uint8_t> m_;
};

struct StrokeRaster {
  ImageBuffer image; ///< 3-channel, unit range
  CoverageMask mask;
};

/// Paints opaque round-capped polylines in order over `background`
/// (3-channel, unit range). A pixel is covered when its centre lies within
/// width / 2 of the polyline.
StrokeRaster rasterize_strokes(const StrokeSet &strokes, const ImageBuffer &background);
StrokeRaster rasterize_strokes(const StrokeSet &strokes, int height, int width, const Rgb &fill);

/// Sketch (1 or 3 channels, unit range) replicated to 3 channels with the
/// stroke raster painted over it.
ImageBuffer compose_sketch_input(const ImageBuffer &sketch, const StrokeSet &strokes);

/// Stroke-free pixels of the colorization hint channels.
inline constexpr double kNeutralHint = 0.5;

/// 4 channels: luma, then the stroke raster on a kNeutralHint background.
ImageBuffer compose_colorization_input(const ImageBuffer &gray, const StrokeSet &strokes);

} // namespace sf
