#include "sketchforge/core/tensor.hpp"

#include <algorithm>
#include <numeric>

#include <fmt/format.h>

#include "sketchforge/core/errors.hpp"

namespace sf {

std::string Shape::str() const { return fmt::format("[{}, {}, {}, {}]", n, c, h, w); }

Tensor::Tensor(Shape shape, double fill) : shape_(shape), data_(shape.numel(), fill) {
  if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0)
    throw ShapeError("negative tensor dimension " + shape.str());
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(shape), data_(std::move(values)) {
  if (data_.size() != shape.numel())
    throw ShapeError(fmt::format("tensor of shape {} needs {} values, got {}", shape.str(),
                                 shape.numel(), data_.size()));
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void Tensor::add_scaled(const Tensor &other, double scale) {
  require_same_shape(*this, other, "add_scaled");
  const double *src = other.data();
  for (std::size_t i = 0; i < data_.size(); ++i)
    data_[i] += scale * src[i];
}

void Tensor::scale(double s) {
  for (double &v : data_)
    v *= s;
}

double Tensor::sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

double Tensor::min() const {
  return data_.empty() ? 0.0 : *std::min_element(data_.begin(), data_.end());
}

double Tensor::max() const {
  return data_.empty() ? 0.0 : *std::max_element(data_.begin(), data_.end());
}

Tensor Tensor::slice(int begin, int count) const {
  if (begin < 0 || count < 0 || begin + count > shape_.n)
    throw ShapeError(fmt::format("slice [{}, {}) out of batch {}", begin, begin + count, shape_.n));
  Shape s = shape_;
  s.n = count;
  std::vector<double> out(sample(begin), sample(begin) + static_cast<std::size_t>(count) * sample_size());
  return Tensor(s, std::move(out));
}

void require_same_shape(const Tensor &a, const Tensor &b, const char *what) {
  if (a.shape() != b.shape())
    throw ShapeError(fmt::format("{}: shape mismatch, expected {} got {}", what, a.shape().str(),
                                 b.shape().str()));
}

Tensor concat_batch(std::span<const Tensor> parts) {
  if (parts.empty())
    return {};
  Shape s = parts.front().shape();
  s.n = 0;
  for (const auto &p : parts) {
    const Shape &ps = p.shape();
    if (ps.c != s.c || ps.h != s.h || ps.w != s.w)
      throw ShapeError(fmt::format("concat_batch: expected [*, {}, {}, {}] got {}", s.c, s.h, s.w,
                                   ps.str()));
    s.n += ps.n;
  }
  std::vector<double> out;
  out.reserve(s.numel());
  for (const auto &p : parts)
    out.insert(out.end(), p.values().begin(), p.values().end());
  return Tensor(s, std::move(out));
}

} // namespace sf
