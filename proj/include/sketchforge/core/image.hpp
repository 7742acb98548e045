#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "sketchforge/core/tensor.hpp"

namespace sf {

/// Declared interval of pixel values.
enum class ValueRange {
  unit,   ///< [0, 1]; codecs, sketches, stroke colors
  signed_ ///< [-1, 1]; network inputs and outputs
};

/// H x W x C interleaved float64 raster.
class ImageBuffer {
public:
  ImageBuffer() = default;
  ImageBuffer(int height, int width, int channels, ValueRange range = ValueRange::unit,
              double fill = 0.0);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  ValueRange range() const { return range_; }
  void set_range(ValueRange r) { range_ = r; }
  bool empty() const { return px_.empty(); }
  std::size_t size() const { return px_.size(); }

  double &at(int y, int x, int c = 0) { return px_[index(y, x, c)]; }
  double at(int y, int x, int c = 0) const { return px_[index(y, x, c)]; }

  std::span<double> values() { return px_; }
  std::span<const double> values() const { return px_; }

  bool same_geometry(const ImageBuffer &o) const {
    return height_ == o.height_ && width_ == o.width_ && channels_ == o.channels_;
  }
  bool operator==(const ImageBuffer &o) const = default;
  std::string describe() const;

private:
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  ValueRange range_ = ValueRange::unit;
  std::vector<double> px_;
};

/// [0,1] -> [-1,1]. No-op if already signed.
ImageBuffer to_signed(const ImageBuffer &img);
/// [-1,1] -> [0,1]. No-op if already unit.
ImageBuffer to_unit(const ImageBuffer &img);

/// ITU-R BT.601 luma: 0.299 R + 0.587 G + 0.114 B. Single-channel input is copied.
ImageBuffer luma(const ImageBuffer &rgb);

/// Repeats a single channel `channels` times.
ImageBuffer replicate_channels(const ImageBuffer &gray, int channels);

/// Copies channel `c` into a single-channel image.
ImageBuffer extract_channel(const ImageBuffer &img, int c);

ImageBuffer crop(const ImageBuffer &img, int y0, int x0, int height, int width);

/// Bilinear resize with pixel-center alignment and edge clamping:
///   src = (dst + 0.5) * (in / out) - 0.5, clamped to [0, in - 1];
///   value = lerp over the two (four in 2-d) neighbours floor(src), floor(src)+1.
ImageBuffer resize_bilinear(const ImageBuffer &img, int height, int width);

/// Normalised separable Gaussian kernel with radius ceil(3 sigma).
std::vector<double> gaussian_kernel(double sigma);

/// Separable Gaussian blur, per channel, clamp-to-edge borders. sigma <= 0 is an error.
ImageBuffer gaussian_blur(const ImageBuffer &img, double sigma);

ImageBuffer flip_horizontal(const ImageBuffer &img);

/// Rotation about the image centre by `degrees` (counter-clockwise), bilinear
/// sampling; pixels mapping outside the source take `fill`.
ImageBuffer rotate(const ImageBuffer &img, double degrees, double fill);

/// Clamps every value to the declared range.
void clamp_to_range(ImageBuffer &img);

/// Stacks same-sized images into an NCHW tensor (values copied verbatim).
Tensor to_tensor(std::span<const ImageBuffer> images);
Tensor to_tensor(const ImageBuffer &image);
/// Splits an NCHW tensor back into images tagged with `range`.
std::vector<ImageBuffer> to_images(const Tensor &t, ValueRange range);
ImageBuffer to_image(const Tensor &t, int n, ValueRange range);

} // namespace sf
