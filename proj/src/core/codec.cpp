#include "sketchforge/core/codec.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "sketchforge/core/errors.hpp"

namespace sf {

std::uint8_t quantize8(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

ImageBuffer decode_image(std::span<const std::uint8_t> bytes) {
  if (bytes.empty())
    throw IoError("decode_image: empty buffer");
  cv::Mat raw(1, static_cast<int>(bytes.size()), CV_8UC1, const_cast<std::uint8_t *>(bytes.data()));
  cv::Mat m = cv::imdecode(raw, cv::IMREAD_UNCHANGED);
  if (m.empty())
    throw IoError("decode_image: not a decodable PNG/JPEG");
  if (m.depth() == CV_16U)
    m.convertTo(m, CV_8U, 1.0 / 257.0);
  if (m.depth() != CV_8U)
    throw IoError("decode_image: unsupported sample depth");
  const int src_ch = m.channels();
  const int ch = src_ch == 1 ? 1 : 3;
  ImageBuffer img(m.rows, m.cols, ch, ValueRange::unit);
  for (int y = 0; y < m.rows; ++y) {
    const std::uint8_t *row = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < m.cols; ++x) {
      const std::uint8_t *p = row + static_cast<std::size_t>(x) * src_ch;
      if (ch == 1) {
        img.at(y, x) = p[0] / 255.0;
      } else {
        // OpenCV stores BGR(A)
        img.at(y, x, 0) = p[2] / 255.0;
        img.at(y, x, 1) = p[1] / 255.0;
        img.at(y, x, 2) = p[0] / 255.0;
      }
    }
  }
  return img;
}

ImageBuffer read_image(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), {});
  try {
    return decode_image(bytes);
  } catch (const IoError &e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_png(const ImageBuffer &img) {
  const ImageBuffer u = to_unit(img);
  const int ch = u.channels();
  if (ch != 1 && ch != 3)
    throw ShapeError("encode_png: expected 1 or 3 channels, got " + std::to_string(ch));
  cv::Mat m(u.height(), u.width(), ch == 1 ? CV_8UC1 : CV_8UC3);
  for (int y = 0; y < u.height(); ++y) {
    std::uint8_t *row = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < u.width(); ++x) {
      std::uint8_t *p = row + static_cast<std::size_t>(x) * ch;
      if (ch == 1) {
        p[0] = quantize8(u.at(y, x));
      } else {
        p[0] = quantize8(u.at(y, x, 2));
        p[1] = quantize8(u.at(y, x, 1));
        p[2] = quantize8(u.at(y, x, 0));
      }
    }
  }
  std::vector<std::uint8_t> out;
  // fixed compression level keeps encodings byte-stable
  if (!cv::imencode(".png", m, out, {cv::IMWRITE_PNG_COMPRESSION, 6}))
    throw IoError("encode_png failed");
  return out;
}

void write_png(const std::filesystem::path &path, const ImageBuffer &img) {
  const auto bytes = encode_png(img);
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

} // namespace sf
