#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "helpers.hpp"
#include "sketchforge/core/errors.hpp"
#include "sketchforge/sketch/sketch.hpp"

using namespace sf;

namespace {

ImageBuffer vertical_step(int size, int column, double left = 0.0, double right = 1.0) {
  ImageBuffer img(size, size, 3);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(y, x, c) = x < column ? left : right;
  return img;
}

// 1-d Gaussian with clamped borders, written out independently of the library.
std::vector<double> blur_row(const std::vector<double> &row, double sigma) {
  const int r = static_cast<int>(std::ceil(3 * sigma));
  std::vector<double> k;
  double sum = 0;
  for (int i = -r; i <= r; ++i) {
    k.push_back(std::exp(-(i * i) / (2 * sigma * sigma)));
    sum += k.back();
  }
  const int n = static_cast<int>(row.size());
  std::vector<double> out(n);
  for (int x = 0; x < n; ++x) {
    double acc = 0;
    for (int i = -r; i <= r; ++i)
      acc += k[i + r] / sum * row[std::clamp(x + i, 0, n - 1)];
    out[x] = acc;
  }
  return out;
}

std::vector<double> xdog_row(const std::vector<double> &g, const XdogParams &p) {
  auto a = blur_row(g, p.sigma), b = blur_row(g, p.k * p.sigma);
  std::vector<double> d(g.size());
  double mx = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    d[i] = a[i] - p.tau * b[i];
    mx = std::max(mx, d[i]);
  }
  for (double &v : d) {
    const double u = v / mx;
    v = u >= p.epsilon ? 1.0 : std::max(0.0, 1.0 + std::tanh(p.phi * (u - p.epsilon)));
  }
  return d;
}

// Pixels whose centre lies in any capsule, counted row by row from the
// closed-form chord of each capsule with the scanline.
std::size_t scanline_count(const std::vector<CutoffStroke> &strokes, int h, int w) {
  std::size_t total = 0;
  for (int y = 0; y < h; ++y) {
    const double yc = y + 0.5;
    std::vector<char> row(w, 0);
    for (const auto &s : strokes) {
      const double r = s.width / 2;
      double lo = INFINITY, hi = -INFINITY;
      for (const Point2 &e : {s.a, s.b}) {
        const double dy = yc - e.y;
        if (dy * dy <= r * r) {
          const double half = std::sqrt(r * r - dy * dy);
          lo = std::min(lo, e.x - half);
          hi = std::max(hi, e.x + half);
        }
      }
      // band: 0 <= (p-a).u <= L and |(p-a).n| <= r, linear in x on this row
      const double L = std::hypot(s.b.x - s.a.x, s.b.y - s.a.y);
      const double ux = (s.b.x - s.a.x) / L, uy = (s.b.y - s.a.y) / L;
      const double nx = -uy, ny = ux;
      double blo = -INFINITY, bhi = INFINITY;
      auto clip = [&](double coef, double offset, double lower, double upper) {
        // lower <= coef * x + offset <= upper
        if (std::abs(coef) < 1e-15) {
          if (offset < lower || offset > upper)
            blo = INFINITY;
          return;
        }
        double x0 = (lower - offset) / coef, x1 = (upper - offset) / coef;
        if (x0 > x1)
          std::swap(x0, x1);
        blo = std::max(blo, x0);
        bhi = std::min(bhi, x1);
      };
      clip(ux, -s.a.x * ux + (yc - s.a.y) * uy, 0.0, L);
      clip(nx, -s.a.x * nx + (yc - s.a.y) * ny, -r, r);
      if (blo <= bhi) {
        lo = std::min(lo, blo);
        hi = std::max(hi, bhi);
      }
      for (int x = 0; x < w; ++x)
        if (x + 0.5 >= lo && x + 0.5 <= hi)
          row[x] = 1;
    }
    total += static_cast<std::size_t>(std::count(row.begin(), row.end(), 1));
  }
  return total;
}

const SketchStyle kStyles[] = {SketchStyle::xdog_default, SketchStyle::xdog_soft,
                               SketchStyle::xdog_heavy, SketchStyle::dodge};

} // namespace

TEST(SketchParams, Validation) {
  SketchParams p;
  EXPECT_NO_THROW(p.validate());
  p.xdog.sigma = 0;
  EXPECT_THROW(p.validate(), ParameterError);
  p = {};
  p.xdog.k = 1.0;
  EXPECT_THROW(p.validate(), ParameterError);
  p = {};
  p.brightness_lo = 1.2;
  EXPECT_THROW(p.validate(), ParameterError);
  p = {};
  p.cutoff.length_lo = -1;
  EXPECT_THROW(p.validate(), ParameterError);
}

TEST(SketchParams, JsonRoundTrip) {
  auto p = SketchParams::preset(SketchStyle::xdog_heavy);
  p.cutoff.max_strokes = 3;
  auto back = SketchParams::from_json(p.to_json());
  EXPECT_EQ(back.to_json(), p.to_json());
}

TEST(Xdog, NonPositiveSigmaIsError) {
  XdogParams p;
  p.sigma = 0.0;
  EXPECT_THROW(xdog_sketch(ImageBuffer(4, 4, 3), p), ParameterError);
  p.sigma = -1.0;
  EXPECT_THROW(xdog_sketch(ImageBuffer(4, 4, 3), p), ParameterError);
}

TEST(Sketch, ConstantPhotoGivesWhite) {
  for (double v : {0.0, 0.2, 0.7, 1.0})
    for (auto style : kStyles) {
      auto out = synthesize_sketch(ImageBuffer(12, 12, 3, ValueRange::unit, v),
                                   SketchParams::preset(style));
      ASSERT_EQ(out.channels(), 1);
      for (double o : out.values())
        ASSERT_NEAR(o, 1.0, 1e-12) << to_string(style) << " v=" << v;
    }
}

TEST(Sketch, OutputsStayInUnitInterval) {
  for (std::uint64_t seed = 0; seed < 5; ++seed)
    for (auto style : kStyles) {
      auto out = synthesize_sketch(test::random_image(20, 17, 3, seed), SketchParams::preset(style));
      for (double o : out.values()) {
        ASSERT_GE(o, 0.0);
        ASSERT_LE(o, 1.0);
      }
    }
}

TEST(Xdog, StepEdgeMatchesDirectEvaluation) {
  const XdogParams p;
  auto out = xdog_sketch(vertical_step(16, 8), p);
  std::vector<double> g(16);
  for (int x = 0; x < 16; ++x)
    g[x] = x < 8 ? 0.0 : 1.0;
  auto expect = xdog_row(g, p);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x)
      ASSERT_NEAR(out.at(y, x), expect[x], 1e-12);
  const auto argmin = std::min_element(expect.begin(), expect.end()) - expect.begin();
  EXPECT_LE(std::abs(argmin - 7.5), 2.0);
  for (int x = 0; x < 16; ++x)
    EXPECT_GE(out.at(8, x), out.at(8, static_cast<int>(argmin)));
}

TEST(Dodge, BlackImageIsFinite) {
  auto out = dodge_sketch(ImageBuffer(8, 8, 3), SketchParams::preset(SketchStyle::dodge));
  for (double v : out.values())
    ASSERT_TRUE(std::isfinite(v));
}

TEST(Dodge, StepEdgeDarkRidgeMatchesFormula) {
  auto p = SketchParams::preset(SketchStyle::dodge);
  // wide enough that column 0 lies beyond the blur support of the edge
  auto out = dodge_sketch(vertical_step(48, 24, 0.2, 0.9), p);
  std::vector<double> g(48), inv(48);
  for (int x = 0; x < 48; ++x) {
    g[x] = x < 24 ? 0.2 : 0.9;
    inv[x] = 1 - g[x];
  }
  auto b = blur_row(inv, p.dodge_sigma);
  int argmin = 0;
  for (int x = 0; x < 48; ++x) {
    const double e = std::clamp((g[x] + p.dodge_delta) / (1 - b[x] + p.dodge_delta), 0.0, 1.0);
    ASSERT_NEAR(out.at(3, x), e, 1e-12);
    if (out.at(3, x) < out.at(3, argmin))
      argmin = x;
  }
  EXPECT_LT(out.at(3, argmin), 0.9);
  EXPECT_GE(argmin, 22);
  EXPECT_LE(argmin, 24);
  EXPECT_NEAR(out.at(3, 0), 1.0, 1e-12);
}

TEST(Crop, FaceGeometry) {
  auto photo = test::random_image(300, 280, 3, 1);
  auto sketch = test::random_image(300, 280, 1, 2);
  int max_origin = 0;
  for (std::uint64_t s = 0; s < 40; ++s) {
    Rng rng(s);
    auto pair = resize_and_random_crop(photo, sketch, Category::face, rng);
    ASSERT_EQ(pair.target_photo.height(), 128);
    ASSERT_EQ(pair.input_sketch.width(), 128);
    ASSERT_EQ(pair.input_sketch.channels(), 1);
    ASSERT_GE(pair.crop_origin.y, 0);
    ASSERT_LE(pair.crop_origin.y, 128);
    ASSERT_LE(pair.crop_origin.x, 128);
    max_origin = std::max({max_origin, pair.crop_origin.x, pair.crop_origin.y});
  }
  EXPECT_GT(max_origin, 42);
}

TEST(Crop, CarGeometryAndRecrop) {
  auto photo = test::random_image(120, 200, 3, 3);
  auto sketch = test::random_image(120, 200, 1, 4);
  for (std::uint64_t s = 0; s < 40; ++s) {
    Rng rng(s);
    auto pair = resize_and_random_crop(photo, sketch, Category::car, rng);
    ASSERT_LE(pair.crop_origin.y, 42);
    ASSERT_LE(pair.crop_origin.x, 42);
    auto rp = crop(resize_bilinear(photo, 170, 170), pair.crop_origin.y, pair.crop_origin.x, 128, 128);
    auto rs = crop(resize_bilinear(sketch, 170, 170), pair.crop_origin.y, pair.crop_origin.x, 128, 128);
    ASSERT_EQ(rp, pair.target_photo);
    ASSERT_EQ(rs, pair.input_sketch);
  }
}

TEST(Crop, DeterministicAndMisalignedRejected) {
  auto photo = test::random_image(256, 256, 3, 5);
  auto sketch = test::random_image(256, 256, 1, 6);
  Rng a(9), b(9);
  auto p1 = resize_and_random_crop(photo, sketch, Category::bedroom, a);
  auto p2 = resize_and_random_crop(photo, sketch, Category::bedroom, b);
  EXPECT_EQ(p1.crop_origin, p2.crop_origin);
  EXPECT_EQ(p1.target_photo, p2.target_photo);
  EXPECT_THROW(resize_and_random_crop(photo, test::random_image(255, 256, 1, 1), Category::face, a),
               ShapeError);
}

TEST(Brightness, AnalyticValues) {
  auto s = test::random_image(6, 6, 1, 7);
  EXPECT_EQ(brightness_jitter(s, 1.0), s);
  const auto white = brightness_jitter(s, 0.0);
  for (double v : white.values())
    EXPECT_EQ(v, 1.0);
  ImageBuffer px(1, 1, 1, ValueRange::unit, 0.2);
  EXPECT_NEAR(brightness_jitter(px, 0.5).at(0, 0), 0.6, 1e-15);
  EXPECT_THROW(brightness_jitter(s, -0.1), ParameterError);
  const auto dark = brightness_jitter(s, 3.0);
  for (double v : dark.values()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Cutoff, ZeroStrokesIsIdentity) {
  auto s = test::random_image(32, 32, 1, 8);
  CutoffParams p;
  p.max_strokes = 0;
  Rng rng(1);
  EXPECT_EQ(cutoff_augment(s, rng, p), s);
}

TEST(Cutoff, NeverDarkens) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto s = test::random_image(40, 40, 1, seed);
    Rng rng(seed);
    auto out = cutoff_augment(s, rng, {});
    for (std::size_t i = 0; i < s.size(); ++i)
      ASSERT_GE(out.values()[i], s.values()[i]);
  }
}

TEST(Cutoff, CoverageMatchesScanlineOracle) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    ImageBuffer black(128, 128, 1);
    Rng rng(seed);
    CutoffParams p;
    auto r = cutoff_augment_detailed(black, rng, p);
    ASSERT_LE(r.strokes.size(), 8u);
    for (const auto &s : r.strokes) {
      ASSERT_GE(s.width, p.width_lo);
      ASSERT_LE(s.width, p.width_hi);
      const double len = std::hypot(s.b.x - s.a.x, s.b.y - s.a.y);
      ASSERT_GE(len, p.length_lo - 1e-9);
      ASSERT_LE(len, p.length_hi + 1e-9);
    }
    std::size_t covered = 0;
    for (double v : r.image.values())
      covered += v == 1.0;
    EXPECT_EQ(covered, scanline_count(r.strokes, 128, 128)) << "seed " << seed;
  }
}

TEST(Cutoff, FixedSeedReproducible) {
  auto s = test::random_image(64, 64, 1, 3);
  Rng a(5), b(5);
  EXPECT_EQ(cutoff_augment(s, a, {}), cutoff_augment(s, b, {}));
}
