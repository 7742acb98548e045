#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace sf {

/// Dimensions of a 4-d NCHW tensor. Weights use (out, in, kh, kw).
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  bool operator==(const Shape &) const = default;
  std::string str() const;
};

/// Dense row-major float64 NCHW tensor with value semantics.
class Tensor {
public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  const Shape &shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double *data() { return data_.data(); }
  const double *data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  double &operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double &at(int n, int c, int h, int w) { return data_[index(n, c, h, w)]; }
  double at(int n, int c, int h, int w) const { return data_[index(n, c, h, w)]; }

  /// Pointer to the start of sample `n`.
  double *sample(int n) { return data_.data() + static_cast<std::size_t>(n) * sample_size(); }
  const double *sample(int n) const {
    return data_.data() + static_cast<std::size_t>(n) * sample_size();
  }
  std::size_t sample_size() const { return static_cast<std::size_t>(shape_.c) * shape_.plane(); }

  void fill(double v);
  /// this += scale * other; shapes must match.
  void add_scaled(const Tensor &other, double scale = 1.0);
  void scale(double s);

  double sum() const;
  double min() const;
  double max() const;

  /// Copy of samples [begin, begin + count).
  Tensor slice(int begin, int count) const;

private:
  std::size_t index(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }

  Shape shape_{};
  std::vector<double> data_;
};

/// Throws ShapeError with a message naming both shapes when they differ.
void require_same_shape(const Tensor &a, const Tensor &b, const char *what);

/// Concatenates along the batch axis. All parts must share (c, h, w).
Tensor concat_batch(std::span<const Tensor> parts);

} // namespace sf
