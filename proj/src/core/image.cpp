#include "sketchforge/core/image.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "sketchforge/core/errors.hpp"

namespace sf {

ImageBuffer::ImageBuffer(int height, int width, int channels, ValueRange range, double fill)
    : height_(height), width_(width), channels_(channels), range_(range),
      px_(static_cast<std::size_t>(std::max(height, 0)) * std::max(width, 0) * std::max(channels, 0),
          fill) {
  if (height < 0 || width < 0 || channels < 0)
    throw ShapeError(fmt::format("negative image geometry {}x{}x{}", height, width, channels));
}

std::string ImageBuffer::describe() const {
  return fmt::format("{}x{}x{} {}", height_, width_, channels_,
                     range_ == ValueRange::unit ? "[0,1]" : "[-1,1]");
}

ImageBuffer to_signed(const ImageBuffer &img) {
  if (img.range() == ValueRange::signed_)
    return img;
  ImageBuffer out = img;
  for (double &v : out.values())
    v = 2.0 * v - 1.0;
  out.set_range(ValueRange::signed_);
  return out;
}

ImageBuffer to_unit(const ImageBuffer &img) {
  if (img.range() == ValueRange::unit)
    return img;
  ImageBuffer out = img;
  for (double &v : out.values())
    v = 0.5 * (v + 1.0);
  out.set_range(ValueRange::unit);
  return out;
}

ImageBuffer luma(const ImageBuffer &rgb) {
  if (rgb.channels() == 1)
    return rgb;
  if (rgb.channels() < 3)
    throw ShapeError("luma: expected 1 or 3 channels, got " + std::to_string(rgb.channels()));
  ImageBuffer out(rgb.height(), rgb.width(), 1, rgb.range());
  for (int y = 0; y < rgb.height(); ++y)
    for (int x = 0; x < rgb.width(); ++x)
      out.at(y, x) = 0.299 * rgb.at(y, x, 0) + 0.587 * rgb.at(y, x, 1) + 0.114 * rgb.at(y, x, 2);
  return out;
}

ImageBuffer replicate_channels(const ImageBuffer &gray, int channels) {
  if (gray.channels() != 1)
    throw ShapeError("replicate_channels: expected 1 channel, got " +
                     std::to_string(gray.channels()));
  ImageBuffer out(gray.height(), gray.width(), channels, gray.range());
  for (int y = 0; y < gray.height(); ++y)
    for (int x = 0; x < gray.width(); ++x)
      for (int c = 0; c < channels; ++c)
        out.at(y, x, c) = gray.at(y, x);
  return out;
}

ImageBuffer extract_channel(const ImageBuffer &img, int c) {
  if (c < 0 || c >= img.channels())
    throw ShapeError(fmt::format("extract_channel: channel {} of {}", c, img.channels()));
  ImageBuffer out(img.height(), img.width(), 1, img.range());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      out.at(y, x) = img.at(y, x, c);
  return out;
}

ImageBuffer crop(const ImageBuffer &img, int y0, int x0, int height, int width) {
  if (y0 < 0 || x0 < 0 || height < 0 || width < 0 || y0 + height > img.height() ||
      x0 + width > img.width())
    throw ShapeError(fmt::format("crop window ({},{}) {}x{} outside {}x{}", y0, x0, height, width,
                                 img.height(), img.width()));
  ImageBuffer out(height, width, img.channels(), img.range());
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < img.channels(); ++c)
        out.at(y, x, c) = img.at(y0 + y, x0 + x, c);
  return out;
}

namespace {

struct Tap {
  int i0;
  int i1;
  double frac; // weight of i1
};

std::vector<Tap> bilinear_taps(int in, int out) {
  std::vector<Tap> taps(static_cast<std::size_t>(out));
  const double ratio = static_cast<double>(in) / out;
  for (int d = 0; d < out; ++d) {
    double s = (d + 0.5) * ratio - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in - 1));
    const int i0 = static_cast<int>(std::floor(s));
    const int i1 = std::min(i0 + 1, in - 1);
    taps[d] = {i0, i1, s - i0};
  }
  return taps;
}

} // namespace

ImageBuffer resize_bilinear(const ImageBuffer &img, int height, int width) {
  if (height <= 0 || width <= 0)
    throw ShapeError(fmt::format("resize to {}x{}", height, width));
  if (img.empty())
    throw ShapeError("resize of empty image");
  if (height == img.height() && width == img.width())
    return img;
  const auto ty = bilinear_taps(img.height(), height);
  const auto tx = bilinear_taps(img.width(), width);
  ImageBuffer out(height, width, img.channels(), img.range());
  for (int y = 0; y < height; ++y) {
    const Tap &a = ty[y];
    for (int x = 0; x < width; ++x) {
      const Tap &b = tx[x];
      for (int c = 0; c < img.channels(); ++c) {
        const double top = img.at(a.i0, b.i0, c) * (1.0 - b.frac) + img.at(a.i0, b.i1, c) * b.frac;
        const double bot = img.at(a.i1, b.i0, c) * (1.0 - b.frac) + img.at(a.i1, b.i1, c) * b.frac;
        out.at(y, x, c) = top * (1.0 - a.frac) + bot * a.frac;
      }
    }
  }
  return out;
}

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma))
    throw ParameterError(fmt::format("gaussian sigma must be positive, got {}", sigma));
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-(i * i) / (2.0 * sigma * sigma));
    k[i + radius] = v;
    total += v;
  }
  for (double &v : k)
    v /= total;
  return k;
}

ImageBuffer gaussian_blur(const ImageBuffer &img, double sigma) {
  const auto k = gaussian_kernel(sigma);
  const int r = static_cast<int>(k.size() / 2);
  const int h = img.height(), w = img.width(), ch = img.channels();
  ImageBuffer tmp(h, w, ch, img.range());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int i = -r; i <= r; ++i)
          acc += k[i + r] * img.at(y, std::clamp(x + i, 0, w - 1), c);
        tmp.at(y, x, c) = acc;
      }
  ImageBuffer out(h, w, ch, img.range());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int i = -r; i <= r; ++i)
          acc += k[i + r] * tmp.at(std::clamp(y + i, 0, h - 1), x, c);
        out.at(y, x, c) = acc;
      }
  return out;
}

ImageBuffer flip_horizontal(const ImageBuffer &img) {
  ImageBuffer out(img.height(), img.width(), img.channels(), img.range());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < img.channels(); ++c)
        out.at(y, x, c) = img.at(y, img.width() - 1 - x, c);
  return out;
}

ImageBuffer rotate(const ImageBuffer &img, double degrees, double fill) {
  const double th = degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(th), sn = std::sin(th);
  const double cy = img.height() / 2.0, cx = img.width() / 2.0;
  ImageBuffer out(img.height(), img.width(), img.channels(), img.range(), fill);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      // inverse map from destination pixel centre to source coordinates
      const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
      const double sx = cs * dx - sn * dy + cx - 0.5;
      const double sy = sn * dx + cs * dy + cy - 0.5;
      if (sx < 0.0 || sy < 0.0 || sx > img.width() - 1 || sy > img.height() - 1)
        continue;
      const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
      const int x1 = std::min(x0 + 1, img.width() - 1), y1 = std::min(y0 + 1, img.height() - 1);
      const double fx = sx - x0, fy = sy - y0;
      for (int c = 0; c < img.channels(); ++c) {
        const double top = img.at(y0, x0, c) * (1 - fx) + img.at(y0, x1, c) * fx;
        const double bot = img.at(y1, x0, c) * (1 - fx) + img.at(y1, x1, c) * fx;
        out.at(y, x, c) = top * (1 - fy) + bot * fy;
      }
    }
  return out;
}

void clamp_to_range(ImageBuffer &img) {
  const double lo = img.range() == ValueRange::unit ? 0.0 : -1.0;
  for (double &v : img.values())
    v = std::clamp(v, lo, 1.0);
}

Tensor to_tensor(std::span<const ImageBuffer> images) {
  if (images.empty())
    return {};
  const ImageBuffer &first = images.front();
  Shape s{static_cast<int>(images.size()), first.channels(), first.height(), first.width()};
  Tensor t(s);
  for (int n = 0; n < s.n; ++n) {
    const ImageBuffer &img = images[n];
    if (!img.same_geometry(first))
      throw ShapeError("to_tensor: image " + std::to_string(n) + " is " + img.describe() +
                       ", expected " + first.describe());
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x)
          t.at(n, c, y, x) = img.at(y, x, c);
  }
  return t;
}

Tensor to_tensor(const ImageBuffer &image) { return to_tensor(std::span(&image, 1)); }

ImageBuffer to_image(const Tensor &t, int n, ValueRange range) {
  const Shape &s = t.shape();
  ImageBuffer img(s.h, s.w, s.c, range);
  for (int c = 0; c < s.c; ++c)
    for (int y = 0; y < s.h; ++y)
      for (int x = 0; x < s.w; ++x)
        img.at(y, x, c) = t.at(n, c, y, x);
  return img;
}

std::vector<ImageBuffer> to_images(const Tensor &t, ValueRange range) {
  std::vector<ImageBuffer> out;
  out.reserve(t.shape().n);
  for (int n = 0; n < t.shape().n; ++n)
    out.push_back(to_image(t, n, range));
  return out;
}

} // namespace sf
