#include "sketchforge/model/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <Eigen/Core>
#include <fmt/format.h>

#include "sketchforge/core/errors.hpp"

namespace sf::nn {

namespace {

using MatR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;

struct ConvGeom {
  int cin, h, w, k, stride, pad, ho, wo;
  std::size_t rows() const { return static_cast<std::size_t>(cin) * k * k; }
  std::size_t cols() const { return static_cast<std::size_t>(ho) * wo; }
};

// Output rows per im2col tile, chosen so a tile stays cache resident.
int tile_rows(const ConvGeom &g) {
  constexpr std::size_t kTileDoubles = 1 << 17;
  const std::size_t per_row = g.rows() * static_cast<std::size_t>(g.wo);
  return static_cast<int>(std::clamp<std::size_t>(kTileDoubles / std::max<std::size_t>(per_row, 1),
                                                  1, static_cast<std::size_t>(g.ho)));
}

// Columns for output rows [oy0, oy1) into `col` (rows() x (oy1-oy0)*wo).
void im2col(const double *x, const ConvGeom &g, int oy0, int oy1, double *col) {
  const std::size_t hw = static_cast<std::size_t>(oy1 - oy0) * g.wo;
  for (int c = 0; c < g.cin; ++c)
    for (int ki = 0; ki < g.k; ++ki)
      for (int kj = 0; kj < g.k; ++kj) {
        double *dst = col + (static_cast<std::size_t>(c * g.k + ki) * g.k + kj) * hw;
        // valid output columns: 0 <= ox*stride - pad + kj < w
        const int lo = std::max(0, (g.pad - kj + g.stride - 1) / g.stride);
        const int hi = std::min(g.wo, (g.w - 1 + g.pad - kj) / g.stride + 1);
        for (int oy = oy0; oy < oy1; ++oy) {
          double *row = dst + static_cast<std::size_t>(oy - oy0) * g.wo;
          const int iy = oy * g.stride - g.pad + ki;
          if (iy < 0 || iy >= g.h || hi <= lo) {
            std::fill(row, row + g.wo, 0.0);
            continue;
          }
          const double *src = x + (static_cast<std::size_t>(c) * g.h + iy) * g.w;
          std::fill(row, row + lo, 0.0);
          if (g.stride == 1) {
            std::memcpy(row + lo, src + (lo - g.pad + kj), sizeof(double) * (hi - lo));
          } else {
            for (int ox = lo; ox < hi; ++ox)
              row[ox] = src[ox * g.stride - g.pad + kj];
          }
          std::fill(row + hi, row + g.wo, 0.0);
        }
      }
}

void col2im(const double *col, const ConvGeom &g, int oy0, int oy1, double *dx) {
  const std::size_t hw = static_cast<std::size_t>(oy1 - oy0) * g.wo;
  for (int c = 0; c < g.cin; ++c)
    for (int ki = 0; ki < g.k; ++ki)
      for (int kj = 0; kj < g.k; ++kj) {
        const double *srcrow = col + (static_cast<std::size_t>(c * g.k + ki) * g.k + kj) * hw;
        const int lo = std::max(0, (g.pad - kj + g.stride - 1) / g.stride);
        const int hi = std::min(g.wo, (g.w - 1 + g.pad - kj) / g.stride + 1);
        for (int oy = oy0; oy < oy1; ++oy) {
          const int iy = oy * g.stride - g.pad + ki;
          if (iy < 0 || iy >= g.h)
            continue;
          const double *row = srcrow + static_cast<std::size_t>(oy - oy0) * g.wo;
          double *dst = dx + (static_cast<std::size_t>(c) * g.h + iy) * g.w;
          for (int ox = lo; ox < hi; ++ox)
            dst[ox * g.stride - g.pad + kj] += row[ox];
        }
      }
}

using StridedMap = Eigen::Map<MatR, 0, Eigen::OuterStride<>>;
using CStridedMap = Eigen::Map<const MatR, 0, Eigen::OuterStride<>>;

} // namespace

// ---------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(std::string name, int in_channels, int out_channels, int kernel, int stride,
               int padding)
    : in_(in_channels), out_(out_channels), k_(kernel), stride_(stride),
      pad_(padding < 0 ? kernel / 2 : padding) {
  if (in_channels <= 0 || out_channels <= 0 || kernel <= 0 || stride <= 0)
    throw ConfigError(fmt::format("{}: invalid conv geometry in={} out={} k={} s={}", name,
                                  in_channels, out_channels, kernel, stride));
  weight = Param(name + ".weight", Shape{out_, in_, k_, k_});
  bias = Param(name + ".bias", Shape{out_, 1, 1, 1});
}

void Conv2d::init_he(Rng &rng, double gain) {
  const double std = gain * std::sqrt(2.0 / (static_cast<double>(in_) * k_ * k_));
  for (double &v : weight.value.values())
    v = std * rng.normal();
  bias.value.fill(0.0);
}

void Conv2d::collect(std::vector<Param *> &out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

Tensor Conv2d::forward(const Tensor &x, Cache *cache) const {
  const Shape &s = x.shape();
  if (s.c != in_)
    throw ShapeError(fmt::format("{}: expected {} input channels, got {} (input {})", weight.name,
                                 in_, s.c, s.str()));
  const ConvGeom g{in_, s.h, s.w, k_, stride_, pad_, out_size(s.h), out_size(s.w)};
  if (g.ho <= 0 || g.wo <= 0)
    throw ShapeError(fmt::format("{}: input {} too small for kernel {}", weight.name, s.str(), k_));
  Tensor y(Shape{s.n, out_, g.ho, g.wo});
  const auto K = static_cast<Eigen::Index>(g.rows());
  const auto HW = static_cast<Eigen::Index>(g.cols());
  CMapR wm(weight.value.data(), out_, K);
  const Eigen::Map<const Eigen::VectorXd> b(bias.value.data(), out_);
  const bool pointwise = k_ == 1 && stride_ == 1 && pad_ == 0;
  const int tr = tile_rows(g);
  std::vector<double> col(pointwise ? 0 : g.rows() * static_cast<std::size_t>(tr) * g.wo);
  for (int n = 0; n < s.n; ++n) {
    if (pointwise) {
      MapR ym(y.sample(n), out_, HW);
      ym.noalias() = wm * CMapR(x.sample(n), K, HW);
      ym.colwise() += b;
      continue;
    }
    for (int oy0 = 0; oy0 < g.ho; oy0 += tr) {
      const int oy1 = std::min(g.ho, oy0 + tr);
      const auto cols = static_cast<Eigen::Index>(oy1 - oy0) * g.wo;
      im2col(x.sample(n), g, oy0, oy1, col.data());
      StridedMap ym(y.sample(n) + static_cast<std::size_t>(oy0) * g.wo, out_, cols,
                    Eigen::OuterStride<>(HW));
      ym.noalias() = wm * CMapR(col.data(), K, cols);
      ym.colwise() += b;
    }
  }
  if (cache)
    cache->tensors = {x};
  return y;
}

Tensor Conv2d::backward(const Cache &cache, const Tensor &dy, bool param_grads) {
  const Tensor &x = cache.tensors.at(0);
  const Shape &s = x.shape();
  const ConvGeom g{in_, s.h, s.w, k_, stride_, pad_, out_size(s.h), out_size(s.w)};
  if (dy.shape() != Shape{s.n, out_, g.ho, g.wo})
    throw ShapeError(weight.name + ": gradient shape " + dy.shape().str());
  const auto K = static_cast<Eigen::Index>(g.rows());
  const auto HW = static_cast<Eigen::Index>(g.cols());
  const bool pointwise = k_ == 1 && stride_ == 1 && pad_ == 0;
  Tensor dx(s);
  CMapR wm(weight.value.data(), out_, K);
  MapR dwm(weight.grad.data(), out_, K);
  const int tr = tile_rows(g);
  std::vector<double> col(pointwise ? 0 : g.rows() * static_cast<std::size_t>(tr) * g.wo);
  for (int n = 0; n < s.n; ++n) {
    CMapR dym(dy.sample(n), out_, HW);
    if (param_grads)
      for (int o = 0; o < out_; ++o) {
        // plain loop: a vectorised reduction would depend on buffer alignment
        const double *row = dy.sample(n) + static_cast<std::size_t>(o) * HW;
        double acc = 0.0;
        for (Eigen::Index i = 0; i < HW; ++i)
          acc += row[i];
        bias.grad[o] += acc;
      }
    if (pointwise) {
      if (param_grads)
        dwm.noalias() += dym * CMapR(x.sample(n), K, HW).transpose();
      MapR(dx.sample(n), in_, HW).noalias() = wm.transpose() * dym;
      continue;
    }
    for (int oy0 = 0; oy0 < g.ho; oy0 += tr) {
      const int oy1 = std::min(g.ho, oy0 + tr);
      const auto cols = static_cast<Eigen::Index>(oy1 - oy0) * g.wo;
      CStridedMap dyt(dy.sample(n) + static_cast<std::size_t>(oy0) * g.wo, out_, cols,
                      Eigen::OuterStride<>(HW));
      MapR cm(col.data(), K, cols);
      if (param_grads) {
        im2col(x.sample(n), g, oy0, oy1, col.data());
        dwm.noalias() += dyt * cm.transpose();
      }
      cm.noalias() = wm.transpose() * dyt;
      col2im(col.data(), g, oy0, oy1, dx.sample(n));
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Pointwise activations

Tensor Relu::forward(const Tensor &x, Cache *cache) const {
  Tensor y = x;
  for (double &v : y.values())
    v = v > 0.0 ? v : 0.0;
  if (cache)
    cache->tensors = {x};
  return y;
}

Tensor Relu::backward(const Cache &cache, const Tensor &dy, bool) {
  const Tensor &x = cache.tensors.at(0);
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i)
    if (!(x[i] > 0.0))
      dx[i] = 0.0;
  return dx;
}

Tensor LeakyRelu::forward(const Tensor &x, Cache *cache) const {
  Tensor y = x;
  for (double &v : y.values())
    v = v > 0.0 ? v : slope_ * v;
  if (cache)
    cache->tensors = {x};
  return y;
}

Tensor LeakyRelu::backward(const Cache &cache, const Tensor &dy, bool) {
  const Tensor &x = cache.tensors.at(0);
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i)
    if (!(x[i] > 0.0))
      dx[i] *= slope_;
  return dx;
}

Tensor Tanh::forward(const Tensor &x, Cache *cache) const {
  Tensor y = x;
  for (double &v : y.values())
    v = std::tanh(v);
  if (cache)
    cache->tensors = {y};
  return y;
}

Tensor Tanh::backward(const Cache &cache, const Tensor &dy, bool) {
  const Tensor &y = cache.tensors.at(0);
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i)
    dx[i] *= 1.0 - y[i] * y[i];
  return dx;
}

// ---------------------------------------------------------------------------
// Resampling

namespace {

struct Tap {
  int i0, i1;
  double frac;
};

std::vector<Tap> taps_for(int in, int out) {
  std::vector<Tap> taps(static_cast<std::size_t>(out));
  const double ratio = static_cast<double>(in) / out;
  for (int d = 0; d < out; ++d) {
    double s = std::clamp((d + 0.5) * ratio - 0.5, 0.0, static_cast<double>(in - 1));
    const int i0 = static_cast<int>(std::floor(s));
    taps[d] = {i0, std::min(i0 + 1, in - 1), s - i0};
  }
  return taps;
}

} // namespace

Tensor bilinear_resize(const Tensor &x, int height, int width) {
  const Shape &s = x.shape();
  const auto ty = taps_for(s.h, height);
  const auto tx = taps_for(s.w, width);
  Tensor y(Shape{s.n, s.c, height, width});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const double *src = x.sample(n) + static_cast<std::size_t>(c) * s.plane();
      double *dst = y.sample(n) + static_cast<std::size_t>(c) * height * width;
      for (int oy = 0; oy < height; ++oy) {
        const Tap &a = ty[oy];
        const double *r0 = src + static_cast<std::size_t>(a.i0) * s.w;
        const double *r1 = src + static_cast<std::size_t>(a.i1) * s.w;
        for (int ox = 0; ox < width; ++ox) {
          const Tap &b = tx[ox];
          const double top = r0[b.i0] * (1.0 - b.frac) + r0[b.i1] * b.frac;
          const double bot = r1[b.i0] * (1.0 - b.frac) + r1[b.i1] * b.frac;
          dst[static_cast<std::size_t>(oy) * width + ox] = top * (1.0 - a.frac) + bot * a.frac;
        }
      }
    }
  return y;
}

Tensor bilinear_resize_backward(const Tensor &dy, const Shape &input_shape) {
  const Shape &s = input_shape;
  const int height = dy.shape().h, width = dy.shape().w;
  const auto ty = taps_for(s.h, height);
  const auto tx = taps_for(s.w, width);
  Tensor dx(s);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      double *dst = dx.sample(n) + static_cast<std::size_t>(c) * s.plane();
      const double *src = dy.sample(n) + static_cast<std::size_t>(c) * height * width;
      for (int oy = 0; oy < height; ++oy) {
        const Tap &a = ty[oy];
        double *r0 = dst + static_cast<std::size_t>(a.i0) * s.w;
        double *r1 = dst + static_cast<std::size_t>(a.i1) * s.w;
        for (int ox = 0; ox < width; ++ox) {
          const Tap &b = tx[ox];
          const double g = src[static_cast<std::size_t>(oy) * width + ox];
          const double gt = g * (1.0 - a.frac), gb = g * a.frac;
          r0[b.i0] += gt * (1.0 - b.frac);
          r0[b.i1] += gt * b.frac;
          r1[b.i0] += gb * (1.0 - b.frac);
          r1[b.i1] += gb * b.frac;
        }
      }
    }
  return dx;
}

Tensor Upsample2x::forward(const Tensor &x, Cache *cache) const {
  if (cache)
    cache->input_shape = x.shape();
  return bilinear_resize(x, 2 * x.shape().h, 2 * x.shape().w);
}

Tensor Upsample2x::backward(const Cache &cache, const Tensor &dy, bool) {
  return bilinear_resize_backward(dy, cache.input_shape);
}

Tensor MaxPool2x::forward(const Tensor &x, Cache *cache) const {
  const Shape &s = x.shape();
  const int ho = s.h / 2, wo = s.w / 2;
  if (ho == 0 || wo == 0)
    throw ShapeError("maxpool: input " + s.str() + " too small");
  Tensor y(Shape{s.n, s.c, ho, wo});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          double m = x.at(n, c, 2 * oy, 2 * ox);
          m = std::max(m, x.at(n, c, 2 * oy, 2 * ox + 1));
          m = std::max(m, x.at(n, c, 2 * oy + 1, 2 * ox));
          m = std::max(m, x.at(n, c, 2 * oy + 1, 2 * ox + 1));
          y.at(n, c, oy, ox) = m;
        }
  if (cache)
    cache->tensors = {x};
  return y;
}

Tensor MaxPool2x::backward(const Cache &cache, const Tensor &dy, bool) {
  const Tensor &x = cache.tensors.at(0);
  const Shape &s = x.shape();
  Tensor dx(s);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int oy = 0; oy < dy.shape().h; ++oy)
        for (int ox = 0; ox < dy.shape().w; ++ox) {
          // first maximum in raster order receives the gradient
          int by = 2 * oy, bx = 2 * ox;
          for (int dyy = 0; dyy < 2; ++dyy)
            for (int dxx = 0; dxx < 2; ++dxx)
              if (x.at(n, c, 2 * oy + dyy, 2 * ox + dxx) > x.at(n, c, by, bx)) {
                by = 2 * oy + dyy;
                bx = 2 * ox + dxx;
              }
          dx.at(n, c, by, bx) += dy.at(n, c, oy, ox);
        }
  return dx;
}

// ---------------------------------------------------------------------------
// Composites

ResidualBlock::ResidualBlock(const std::string &name, int in_channels, int out_channels)
    : conv1_(name + ".conv1", in_channels, out_channels, 3),
      conv2_(name + ".conv2", out_channels, out_channels, 3) {
  if (in_channels != out_channels)
    projection_ = std::make_unique<Conv2d>(name + ".shortcut", in_channels, out_channels, 1);
}

void ResidualBlock::init(Rng &rng, double branch_gain) {
  conv1_.init_he(rng);
  conv2_.init_he(rng, branch_gain);
  if (projection_)
    projection_->init_he(rng, 0.5);
}

Tensor ResidualBlock::forward(const Tensor &x, Cache *cache) const {
  Cache *c1 = nullptr, *cr = nullptr, *c2 = nullptr, *cp = nullptr;
  if (cache) {
    cache->children.resize(4);
    c1 = &cache->children[0];
    cr = &cache->children[1];
    c2 = &cache->children[2];
    cp = &cache->children[3];
  }
  Tensor branch = conv2_.forward(relu_.forward(conv1_.forward(x, c1), cr), c2);
  if (projection_)
    branch.add_scaled(projection_->forward(x, cp));
  else
    branch.add_scaled(x);
  return branch;
}

Tensor ResidualBlock::backward(const Cache &cache, const Tensor &dy, bool param_grads) {
  Tensor g = conv2_.backward(cache.children.at(2), dy, param_grads);
  g = relu_.backward(cache.children.at(1), g, param_grads);
  Tensor dx = conv1_.backward(cache.children.at(0), g, param_grads);
  if (projection_)
    dx.add_scaled(projection_->backward(cache.children.at(3), dy, param_grads));
  else
    dx.add_scaled(dy);
  return dx;
}

void ResidualBlock::collect(std::vector<Param *> &out) {
  conv1_.collect(out);
  conv2_.collect(out);
  if (projection_)
    projection_->collect(out);
}

Tensor Sequential::forward(const Tensor &x, Cache *cache) const {
  if (cache)
    cache->children.resize(layers_.size());
  Tensor h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i)
    h = layers_[i]->forward(h, cache ? &cache->children[i] : nullptr);
  return h;
}

Tensor Sequential::backward(const Cache &cache, const Tensor &dy, bool param_grads) {
  Tensor g = dy;
  for (std::size_t i = layers_.size(); i-- > 0;)
    g = layers_[i]->backward(cache.children.at(i), g, param_grads);
  return g;
}

void Sequential::collect(std::vector<Param *> &out) {
  for (auto &l : layers_)
    l->collect(out);
}

std::size_t count_parameters(const std::vector<Param *> &params) {
  std::size_t total = 0;
  for (const Param *p : params)
    total += p->value.size();
  return total;
}

void zero_grads(const std::vector<Param *> &params) {
  for (Param *p : params)
    p->grad.fill(0.0);
}

} // namespace sf::nn
