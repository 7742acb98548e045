#pragma once

// Brute-force references shared by the unit and acceptance tests.

#include <algorithm>
#include <vector>

#include "sketchforge/core/tensor.hpp"
#include "sketchforge/model/feature_extractor.hpp"

namespace sf::check {

// Naive zero-padded 3x3 convolution on one [c, h, w] sample.
inline std::vector<double> conv3(const std::vector<double> &x, int cin, int h, int w, const Tensor &wt,
                          const Tensor &b) {
  const int cout = wt.shape().n;
  std::vector<double> y(static_cast<std::size_t>(cout) * h * w);
  for (int o = 0; o < cout; ++o)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        double acc = b[o];
        for (int c = 0; c < cin; ++c)
          for (int di = -1; di <= 1; ++di)
            for (int dj = -1; dj <= 1; ++dj) {
              const int ii = i + di, jj = j + dj;
              if (ii < 0 || ii >= h || jj < 0 || jj >= w)
                continue;
              acc += wt.at(o, c, di + 1, dj + 1) * x[(c * h + ii) * w + jj];
            }
        y[(o * h + i) * w + j] = acc;
      }
  return y;
}

// Hand-rolled backbone up to relu2_2 (conv, conv, pool, conv, conv) for one image in [-1, 1].
inline std::vector<double> oracle_features(const FeatureExtractor &fx, const Tensor &img, int n) {
  const auto params = fx.parameters();
  const double mean[3] = {0.485, 0.456, 0.406}, sd[3] = {0.229, 0.224, 0.225};
  int h = img.shape().h, w = img.shape().w, c = 3;
  std::vector<double> x(static_cast<std::size_t>(3) * h * w);
  for (int ch = 0; ch < 3; ++ch)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j)
        x[(ch * h + i) * w + j] = ((img.at(n, ch, i, j) + 1.0) / 2.0 - mean[ch]) / sd[ch];
  std::size_t p = 0;
  auto conv_relu = [&] {
    const Tensor &wt = params[p]->value, &b = params[p + 1]->value;
    p += 2;
    x = conv3(x, c, h, w, wt, b);
    c = wt.shape().n;
    for (double &v : x)
      v = std::max(v, 0.0);
  };
  conv_relu();
  conv_relu();
  std::vector<double> pooled(static_cast<std::size_t>(c) * (h / 2) * (w / 2));
  for (int ch = 0; ch < c; ++ch)
    for (int i = 0; i < h / 2; ++i)
      for (int j = 0; j < w / 2; ++j) {
        double m = -1e300;
        for (int a = 0; a < 2; ++a)
          for (int bb = 0; bb < 2; ++bb)
            m = std::max(m, x[(ch * h + 2 * i + a) * w + 2 * j + bb]);
        pooled[(ch * (h / 2) + i) * (w / 2) + j] = m;
      }
  x = pooled;
  h /= 2;
  w /= 2;
  conv_relu();
  conv_relu();
  return x;
}

} // namespace sf::check
