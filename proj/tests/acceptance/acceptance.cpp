// Acceptance suite: one PASS/FAIL line per criterion.
//
//   sf_acceptance                      run everything
//   sf_acceptance --only overfit       run one criterion
//   sf_acceptance --write-golden       regenerate tests/golden/ and exit

#include <algorithm>
#include <chrono>
#include <future>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "../common/gradcheck.hpp"
#include "../common/oracles.hpp"
#include "sketchforge/core/codec.hpp"
#include "sketchforge/core/hash.hpp"
#include "sketchforge/core/logging.hpp"
#include "sketchforge/eval/evalkit.hpp"
#include "sketchforge/service/service.hpp"
#include "sketchforge/train/trainer.hpp"

using namespace sf;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Context {
  fs::path golden_dir;
  fs::path cli;
  fs::path work;
  int bench_runs = 3;
};

// Collects failed expectations; the first few go into the report line.
class Checks {
public:
  void expect(bool ok, const std::string &what) {
    ++count_;
    if (!ok)
      failures_.push_back(what);
  }
  void near(double got, double want, double tol, const std::string &what) {
    expect(std::abs(got - want) <= tol,
           fmt::format("{}: got {:.17g}, want {:.17g} (tol {:g})", what, got, want, tol));
  }
  bool ok() const { return failures_.empty(); }
  int count() const { return count_; }
  std::string summary() const {
    if (ok())
      return fmt::format("{} checks", count_);
    std::string s = fmt::format("{}/{} checks failed", failures_.size(), count_);
    for (std::size_t i = 0; i < failures_.size() && i < 3; ++i)
      s += "; " + failures_[i];
    return s;
  }

private:
  int count_ = 0;
  std::vector<std::string> failures_;
};

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string name;
  double limit_s;
  std::function<Outcome(const Context &)> run;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Tensor random_tensor(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  Tensor t(s);
  for (double &v : t.values())
    v = rng.uniform(lo, hi);
  return t;
}

// ---------------------------------------------------------------------------
// losses

Outcome loss_suite(const Context &) {
  Checks c;
  const double ln2x2 = 2.0 * std::numbers::ln2;
  const FeatureExtractor fx = FeatureExtractor::create({});

  // pixel
  const Tensor a = random_tensor({2, 3, 8, 8}, 1), b = random_tensor({2, 3, 8, 8}, 2);
  c.near(pixel_loss(a, a), 0.0, 1e-9, "pixel identity");
  Tensor shifted = a;
  for (double &v : shifted.values())
    v += 0.5;
  c.near(pixel_loss(shifted, a), 0.25, 1e-9, "pixel offset 0.5");
  {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
      acc += (a[i] - b[i]) * (a[i] - b[i]);
    c.near(pixel_loss(a, b), acc / static_cast<double>(a.size()), 1e-12, "pixel oracle");
  }

  // feature
  c.near(feature_loss(a, a, fx), 0.0, 1e-9, "feature identity");
  c.near(feature_loss(a, b, fx), feature_loss(b, a, fx), 1e-12, "feature symmetry");
  {
    double acc = 0.0;
    std::size_t n = 0;
    for (int i = 0; i < 2; ++i) {
      const auto fa = check::oracle_features(fx, a, i), fb = check::oracle_features(fx, b, i);
      for (std::size_t k = 0; k < fa.size(); ++k)
        acc += (fa[k] - fb[k]) * (fa[k] - fb[k]);
      n += fa.size();
    }
    c.near(feature_loss(a, b, fx), acc / static_cast<double>(n), 1e-12, "feature oracle");
  }

  // adversarial
  const std::vector<double> ones(5, 1.0), zeros(5, 0.0), halves{0.5, 0.5};
  c.near(adversarial_loss_g(ones), 0.0, 1e-9, "adversarial all ones");
  c.near(adversarial_loss_g(halves), ln2x2, 1e-9, "adversarial two halves");
  Rng rng(3);
  std::vector<double> sr(7), sf_(7);
  for (double &v : sr)
    v = rng.uniform(0.01, 0.99);
  for (double &v : sf_)
    v = rng.uniform(0.01, 0.99);
  {
    double acc = 0.0;
    for (double s : sf_)
      acc -= std::log(s);
    c.near(adversarial_loss_g(sf_), acc, 1e-12, "adversarial oracle");
  }

  // discriminator
  c.near(discriminator_loss(ones, zeros), 0.0, 1e-9, "discriminator perfect");
  c.near(discriminator_loss(std::vector<double>{0.5}, std::vector<double>{0.5}), ln2x2, 1e-9,
         "discriminator halves");
  {
    double acc = 0.0;
    for (double s : sr)
      acc -= std::log(s);
    for (double s : sf_)
      acc -= std::log(1.0 - s);
    c.near(discriminator_loss(sr, sf_), acc, 1e-12, "discriminator oracle");
  }

  // total variation
  Tensor flat({1, 3, 6, 5});
  for (double &v : flat.values())
    v = 0.3;
  c.near(tv_loss(flat), 0.0, 1e-9, "tv constant");
  Tensor two({1, 1, 2, 2});
  two.at(0, 0, 0, 1) = 1.0;
  two.at(0, 0, 1, 1) = 1.0;
  c.near(tv_loss(two), 0.5, 1e-9, "tv 2x2");
  {
    const Tensor t = random_tensor({3, 2, 5, 7}, 4);
    double total = 0.0;
    for (int n = 0; n < 3; ++n) {
      double acc = 0.0;
      for (int ch = 0; ch < 2; ++ch)
        for (int i = 0; i < 5; ++i)
          for (int j = 0; j < 7; ++j) {
            if (j + 1 < 7)
              acc += std::pow(t.at(n, ch, i, j + 1) - t.at(n, ch, i, j), 2);
            if (i + 1 < 5)
              acc += std::pow(t.at(n, ch, i + 1, j) - t.at(n, ch, i, j), 2);
          }
      total += acc / 35.0;
    }
    c.near(tv_loss(t), total / 3.0, 1e-12, "tv oracle");
  }

  // combination
  const std::vector<double> scores{0.3, 0.8};
  const LossBreakdown terms = total_loss(a, b, scores, {1, 1, 1, 1}, fx);
  c.near(total_loss(a, b, scores, {}, fx).total, 0.0, 1e-9, "all weights zero");
  c.near(total_loss(a, b, scores, {1, 0, 0, 0}, fx).total, pixel_loss(a, b), 1e-9,
         "one-hot pixel");
  c.near(total_loss(a, b, scores, {0, 1, 0, 0}, fx).total, terms.feature, 1e-12,
         "one-hot feature");
  c.near(total_loss(a, b, scores, {0, 0, 1, 0}, fx).total, terms.adversarial, 1e-12,
         "one-hot adversarial");
  c.near(total_loss(a, b, scores, {0, 0, 0, 1}, fx).total, terms.tv, 1e-12, "one-hot tv");
  Rng wr(5);
  for (int trial = 0; trial < 20; ++trial) {
    const LossWeights w{wr.uniform(0, 10), wr.uniform(0, 10), wr.uniform(0, 10), wr.uniform(0, 10)};
    const LossWeights v{wr.uniform(0, 10), wr.uniform(0, 10), wr.uniform(0, 10), wr.uniform(0, 10)};
    const double alpha = wr.uniform(0.1, 100);
    const double tw = total_loss(a, b, scores, w, fx).total;
    const double tv = total_loss(a, b, scores, v, fx).total;
    const double expected = w.pixel * terms.pixel + w.feature * terms.feature +
                            w.adversarial * terms.adversarial + w.tv * terms.tv;
    const double scale = std::max(1.0, std::abs(expected));
    c.near(tw / scale, expected / scale, 1e-12, "weighted sum");
    const double scaled = total_loss(a, b, scores, w.scaled(alpha), fx).total;
    c.near(scaled / (alpha * scale), tw / scale, 1e-12, "homogeneity");
    const LossWeights sum{w.pixel + v.pixel, w.feature + v.feature,
                          w.adversarial + v.adversarial, w.tv + v.tv};
    const double additive = total_loss(a, b, scores, sum, fx).total;
    c.near(additive / std::max(1.0, std::abs(tw + tv)), (tw + tv) / std::max(1.0, std::abs(tw + tv)),
           1e-12, "additivity");
  }
  return {c.ok(), c.summary()};
}

Outcome gradcheck(const Context &) {
  std::size_t checked = 0, failed = 0;
  double worst = 0.0;
  std::string worst_name;
  for (int in : {3, 4}) {
    auto setup = check::GradcheckSetup::tiny();
    setup.generator.input_channels = in;
    const auto r = check::run_gradcheck(setup);
    checked += r.checked;
    failed += r.failed;
    if (r.worst_rel >= worst) {
      worst = r.worst_rel;
      worst_name = fmt::format("{}ch:{}", in, r.worst_param);
    }
  }
  return {checked > 0 && failed == 0,
          fmt::format("{}/{} parameters within 1e-3 (worst {:.2e} at {}; fourth-order central "
                      "difference, h 1e-5)",
                      checked - failed, checked, worst, worst_name)};
}

// ---------------------------------------------------------------------------
// architecture

Outcome architecture(const Context &) {
  Checks c;
  const Generator g(GeneratorConfig::standard(), 1);
  const std::size_t params = g.param_count();
  c.expect(params >= 7'000'000 && params <= 8'600'000,
           fmt::format("parameter count {} outside [7.0M, 8.6M]", params));
  for (int size : {128, 256}) {
    const Tensor y = g.forward(random_tensor({1, 3, size, size}, 7));
    c.expect(y.shape() == Shape{1, 3, size, size},
             fmt::format("output at {} is {}", size, y.shape().str()));
  }
  for (int in : {3, 4}) {
    Generator z(GeneratorConfig::standard(in), 2);
    Rng rng(3);
    for (nn::Param *p : z.parameters()) {
      const bool bias = static_cast<std::size_t>(p->value.shape().n) == p->value.size();
      for (double &v : p->value.values())
        v = bias ? rng.uniform(-0.5, 0.5) : 0.0;
    }
    const Tensor y = z.forward(random_tensor({2, in, 64, 64}, 8));
    double spread = 0.0;
    for (int n = 0; n < 2; ++n)
      for (int ch = 0; ch < 3; ++ch)
        for (int i = 0; i < 64; ++i)
          for (int j = 0; j < 64; ++j)
            spread = std::max(spread, std::abs(y.at(n, ch, i, j) - y.at(0, ch, 0, 0)));
    c.expect(spread == 0.0, fmt::format("zero-weight output varies by {:g}", spread));
  }
  return {c.ok(), fmt::format("{} parameters; {}", params, c.summary())};
}

// ---------------------------------------------------------------------------
// pipelines

bool same_pixels(const ImageBuffer &a, const ImageBuffer &b) {
  return a.height() == b.height() && a.width() == b.width() && a.channels() == b.channels() &&
         std::ranges::equal(a.values(), b.values());
}

std::string image_digest(const ImageBuffer &img) {
  const ImageBuffer u = to_unit(img);
  std::vector<std::uint8_t> bytes;
  bytes.reserve(u.values().size() + 12);
  for (int d : {u.height(), u.width(), u.channels()})
    for (int k = 0; k < 4; ++k)
      bytes.push_back(static_cast<std::uint8_t>(d >> (8 * k)));
  for (double v : u.values())
    bytes.push_back(quantize8(v));
  return sha256_hex(bytes);
}

StrokeSet fixture_strokes() {
  StrokeSet s;
  s.strokes.push_back({{{10.5, 12.0}, {40.0, 20.25}, {70.0, 18.0}}, {0.9, 0.1, 0.1}, 3.0});
  s.strokes.push_back({{{64.0, 64.0}}, {0.1, 0.6, 0.95}, 9.0});
  s.strokes.push_back({{{20.0, 100.0}, {100.0, 30.0}}, {0.2, 0.8, 0.3}, 5.5});
  s.strokes.push_back({{{0.0, 0.0}, {128.0, 128.0}}, {1.0, 1.0, 0.0}, 1.0});
  return s;
}

nlohmann::json pipeline_digests() {
  nlohmann::json d;
  const ImageBuffer face = procedural_face(256, 7);
  for (auto style : {SketchStyle::xdog_default, SketchStyle::xdog_soft, SketchStyle::xdog_heavy,
                     SketchStyle::dodge})
    d["sketch." + to_string(style)] = image_digest(synthesize_sketch(face, SketchParams::preset(style)));

  Rng rng(11);
  const SampledStrokes sampled = sample_color_strokes_detailed(face, {}, rng);
  d["strokes.sampled"] = sha256_hex(sampled.strokes.to_json().dump());
  d["strokes.fixture_raster"] =
      image_digest(rasterize_strokes(fixture_strokes(), 128, 128, {1.0, 1.0, 1.0}).image);

  for (Mode mode : {Mode::sketch2photo, Mode::sketch_strokes, Mode::colorization}) {
    PairParams pp;
    pp.styles = StyleMix::uniform();
    const TrainingPair p = make_training_pair(face, nullptr, "golden", mode, pp, 5);
    d["pair.face." + to_string(mode)] = sha256_hex(image_digest(p.input) + image_digest(p.target) +
                                                   p.strokes.to_json().dump());
  }
  PairParams car;
  car.category = Category::car;
  const TrainingPair p =
      make_training_pair(procedural_face(200, 8), nullptr, "golden-car", Mode::sketch2photo, car, 6);
  d["pair.car.sketch2photo"] = sha256_hex(image_digest(p.input) + image_digest(p.target));
  return d;
}

void write_golden(const fs::path &dir) {
  fs::create_directories(dir);
  std::ofstream(dir / "pipeline_digests.json") << pipeline_digests().dump(2) << "\n";
  std::ofstream(dir / "strokeset_fixture.json") << fixture_strokes().to_json().dump(2) << "\n";
  write_png(dir / "strokeset_fixture.png",
            rasterize_strokes(fixture_strokes(), 128, 128, {1.0, 1.0, 1.0}).image);
}

// Re-walks a sampled stroke against the blurred image; returns the number of
// broken rules.
int rewalk_violations(const ColorStroke &s, const ImageBuffer &blurred,
                      const StrokeSamplerParams &p) {
  int bad = 0;
  const double W = blurred.width(), H = blurred.height();
  if (s.points.empty())
    return 1;
  if (s.width < p.width_lo || s.width > p.width_hi)
    ++bad;
  if (sample_pixel(blurred, s.points.front()) != s.color)
    ++bad;
  double length = 0.0;
  for (std::size_t i = 0; i < s.points.size(); ++i) {
    const Point2 q = s.points[i];
    if (!(q.x >= 0 && q.x < W && q.y >= 0 && q.y < H))
      ++bad;
    if (color_distance(sample_pixel(blurred, q), s.color) > p.color_restart_threshold)
      ++bad;
    if (i) {
      const double step = std::hypot(q.x - s.points[i - 1].x, q.y - s.points[i - 1].y);
      if (std::abs(step - p.step_size) > 1e-9)
        ++bad;
      length += step;
    }
  }
  if (length > p.max_length + 1e-9)
    ++bad;
  return bad;
}

Outcome pipeline(const Context &ctx) {
  Checks c;

  // golden digests, computed twice for determinism
  const nlohmann::json now = pipeline_digests();
  c.expect(now == pipeline_digests(), "pipeline digests differ between two runs");
  const fs::path golden = ctx.golden_dir / "pipeline_digests.json";
  if (!fs::exists(golden)) {
    c.expect(false, "missing " + golden.string());
  } else {
    const nlohmann::json want = nlohmann::json::parse(std::ifstream(golden));
    for (const auto &[k, v] : want.items())
      c.expect(now.contains(k) && now[k] == v, "golden mismatch: " + k);
    c.expect(want.size() == now.size(), "golden key count differs");
  }
  // shared StrokeSet fixture: JSON parses to the same set and rasterizes to the stored pixels
  const fs::path fj = ctx.golden_dir / "strokeset_fixture.json";
  const fs::path fp = ctx.golden_dir / "strokeset_fixture.png";
  if (fs::exists(fj) && fs::exists(fp)) {
    const StrokeSet s = StrokeSet::from_json(nlohmann::json::parse(std::ifstream(fj)));
    c.expect(s == fixture_strokes(), "fixture JSON does not round-trip");
    const ImageBuffer raster = rasterize_strokes(s, 128, 128, {1.0, 1.0, 1.0}).image;
    const ImageBuffer stored = read_image(fp);
    c.expect(image_digest(raster) == image_digest(stored), "fixture raster differs from PNG");
  } else {
    c.expect(false, "missing stroke fixture files");
  }

  // crop geometry
  struct Geometry {
    Category category;
    int source;
  };
  for (const Geometry geo : {Geometry{Category::face, 256}, Geometry{Category::car, 170}}) {
    c.expect(resize_target(geo.category) == geo.source, "resize target " + to_string(geo.category));
    const ImageBuffer photo = procedural_face(301, 3);
    const ImageBuffer sketch = xdog_sketch(photo, XdogParams{});
    const ImageBuffer rp = resize_bilinear(photo, geo.source, geo.source);
    const ImageBuffer rs = resize_bilinear(sketch, geo.source, geo.source);
    const int span = geo.source - kTrainResolution;
    int lo_y = span, hi_y = 0, lo_x = span, hi_x = 0;
    bool exact = true;
    for (std::uint64_t seed = 0; seed < 1500; ++seed) {
      Rng rng(seed);
      const AugmentedPair ap = resize_and_random_crop(photo, sketch, geo.category, rng);
      const CropOrigin o = ap.crop_origin;
      lo_y = std::min(lo_y, o.y), hi_y = std::max(hi_y, o.y);
      lo_x = std::min(lo_x, o.x), hi_x = std::max(hi_x, o.x);
      if (o.y < 0 || o.x < 0 || o.y > span || o.x > span) {
        exact = false;
        continue;
      }
      if (seed % 50 == 0) {
        exact = exact && same_pixels(ap.target_photo,
                                     crop(rp, o.y, o.x, kTrainResolution, kTrainResolution));
        exact = exact && same_pixels(ap.input_sketch,
                                     crop(rs, o.y, o.x, kTrainResolution, kTrainResolution));
        exact = exact && ap.target_photo.height() == kTrainResolution &&
                ap.target_photo.width() == kTrainResolution;
      }
    }
    c.expect(exact, to_string(geo.category) + ": crop is not the window of the resized source");
    c.expect(lo_y == 0 && lo_x == 0 && hi_y == span && hi_x == span,
             fmt::format("{}: origins span [{},{}]x[{},{}], want [0,{}]", to_string(geo.category),
                         lo_y, hi_y, lo_x, hi_x, span));
  }

  // stroke re-walk over procedural faces at training resolution
  StrokeSamplerParams sp;
  int strokes = 0, violations = 0;
  for (std::uint64_t seed = 0; strokes < 1000 || seed < 50; ++seed) {
    const ImageBuffer img = resize_bilinear(procedural_face(256, 500 + seed), 128, 128);
    Rng rng(seed);
    const SampledStrokes r = sample_color_strokes_detailed(img, sp, rng);
    const ImageBuffer blurred = gaussian_blur(img, sp.blur_sigma);
    c.expect(same_pixels(blurred, r.blurred), "sampler blurred a different image");
    for (const auto &s : r.strokes.strokes) {
      ++strokes;
      violations += rewalk_violations(s, blurred, sp);
    }
  }
  c.expect(violations == 0, fmt::format("{} re-walk violations", violations));
  return {c.ok(), fmt::format("{} strokes re-walked, {} violations; {}", strokes, violations,
                              c.summary())};
}

// ---------------------------------------------------------------------------
// training smoke tests

// Small generator used for the CPU training criteria.
GeneratorConfig smoke_generator(Mode mode) {
  GeneratorConfig g;
  g.input_channels = input_channels(mode);
  g.base_width = 12;
  g.n_down = 3;
  g.n_up = 3;
  g.n_bottleneck_res = 2;
  g.param_band.reset();
  return g;
}

constexpr double kSmokeLr = 2e-3;
constexpr int kOverfitSteps = 500;

// 25-step linear warmup, then cosine decay to 5% of the peak
double smoke_lr(int step, int steps) {
  const double warm = std::min(1.0, (step + 1) / 25.0);
  return kSmokeLr * warm * (0.05 + 0.475 * (1.0 + std::cos(std::numbers::pi * step / steps)));
}

std::vector<TrainingPair> face_pairs(int n, Mode mode, std::uint64_t base) {
  std::vector<TrainingPair> pairs;
  PairParams pp;
  for (int i = 0; i < n; ++i)
    pairs.push_back(make_training_pair(procedural_face(256, base + i), nullptr,
                                       fmt::format("face{:03}", i), mode, pp, 77 + i));
  return pairs;
}

double mean_pixel_mse(const Generator &g, const Batch &b) {
  return pixel_loss(g.forward(b.inputs), b.targets);
}

struct OverfitResult {
  double initial = 0.0;
  double final_loss = 0.0;
  double pixel_mse = 0.0;
  int steps = 0;
  bool finite = true;
};

// Stage-1 steps on a fixed batch until both targets are met or the budget ends.
OverfitResult overfit(TrainState &st, const Batch &batch, const LossWeights &w, int max_steps,
                      double drop_target, double mse_target) {
  OverfitResult r;
  for (int s = 0; s < max_steps; ++s) {
    st.g_opt.set_lr(smoke_lr(s, max_steps));
    const StepMetrics m = train_step_content(st, batch, w);
    r.finite = r.finite && m.finite();
    if (s == 0)
      r.initial = m.loss.total;
    r.steps = s + 1;
    if ((s + 1) % 25 == 0 || s + 1 == max_steps) {
      r.final_loss = generator_loss(st.generator, *st.fx, nullptr, batch, w).total;
      r.pixel_mse = mean_pixel_mse(st.generator, batch);
      logger()->info("overfit step {} loss {:.5f} mse {:.5f}", s + 1, r.final_loss, r.pixel_mse);
      if (1.0 - r.final_loss / r.initial >= drop_target && r.pixel_mse <= mse_target)
        break;
    }
  }
  return r;
}

Outcome overfit_smoke(const Context &) {
  const Mode mode = Mode::sketch2photo;
  const auto pairs = face_pairs(8, mode, 1000);
  const Batch batch = make_batch(pairs);
  auto fx = std::make_shared<const FeatureExtractor>(FeatureExtractor::create({}));
  TrainState st(smoke_generator(mode), fx, 1);
  StageConfig sc = stage1_preset(mode);
  sc.g_learning_rate = kSmokeLr;
  st.configure_optimizers(sc);
  const auto r = overfit(st, batch, sc.weights, kOverfitSteps, 0.9, 0.01);
  const double drop = 1.0 - r.final_loss / r.initial;
  return {r.finite && drop >= 0.9 && r.pixel_mse <= 0.01,
          fmt::format("content loss {:.4f} -> {:.4f} (drop {:.1f}%, need >= 90%), pixel MSE "
                      "{:.4f} (need <= 0.01), {} steps",
                      r.initial, r.final_loss, 100 * drop, r.pixel_mse, r.steps)};
}

Outcome stroke_compliance_gate(const Context &) {
  const Mode mode = Mode::sketch_strokes;
  const auto pairs = face_pairs(8, mode, 1000);
  const Batch batch = make_batch(pairs);
  auto fx = std::make_shared<const FeatureExtractor>(FeatureExtractor::create({}));
  TrainState st(smoke_generator(mode), fx, 1);
  StageConfig sc = stage1_preset(mode);
  sc.g_learning_rate = kSmokeLr;
  st.configure_optimizers(sc);
  const auto r = overfit(st, batch, sc.weights, kOverfitSteps, 0.9, 0.01);

  const ModelFn model = generator_model(st.generator);
  const double compliance = eval_stroke_compliance(model, pairs);
  double target_compliance = 0.0;
  int n = 0;
  for (const auto &p : pairs)
    if (!p.strokes.empty()) {
      target_compliance += stroke_compliance(p.target, p.strokes);
      ++n;
    }
  target_compliance /= std::max(n, 1);

  // recolour the first stroke of the first pair that has one
  double diversity = 0.0;
  for (const auto &p : pairs) {
    if (p.strokes.empty())
      continue;
    StrokeSet changed = p.strokes;
    Rgb &col = changed.strokes[0].color;
    col = {1.0 - col[0], 1.0 - col[1], 1.0 - col[2]};
    const ImageBuffer sketch = synthesize_sketch(p.target, SketchParams{});
    diversity = eval_diversity(model, sketch, mode, {p.strokes, changed});
    break;
  }
  return {r.finite && compliance <= 0.1 && diversity > 0.0,
          fmt::format("compliance {:.4f} (need <= 0.1; ground truth itself scores {:.4f}), "
                      "diversity {:.4g} (need > 0), training loss {:.4f} -> {:.4f} in {} steps",
                      compliance, target_compliance, diversity, r.initial, r.final_loss, r.steps)};
}

Outcome adversarial_smoke(const Context &) {
  const Mode mode = Mode::sketch2photo;
  const auto pairs = face_pairs(64, mode, 2000);
  std::vector<Batch> batches;
  for (int i = 0; i < 8; ++i)
    batches.push_back(make_batch({pairs.begin() + 8 * i, pairs.begin() + 8 * (i + 1)}));
  auto fx = std::make_shared<const FeatureExtractor>(FeatureExtractor::create({}));
  TrainState st(smoke_generator(mode), fx, 1);
  StageConfig s1 = stage1_preset(mode);
  s1.g_learning_rate = kSmokeLr;
  st.configure_optimizers(s1);
  for (int s = 0; s < 40; ++s)
    train_step_content(st, batches[static_cast<std::size_t>(s) % batches.size()], s1.weights);

  StageConfig s2 = stage2_preset(mode);
  st.configure_optimizers(s2);
  st.ensure_discriminator(kTrainResolution, DiscriminatorConfig{}, s2.d_learning_rate, s2.d_adam);
  const LossWeights w = s2.effective_weights();
  bool finite = true;
  StepMetrics last;
  for (int s = 0; s < 500; ++s) {
    last = train_step_adversarial(st, batches[static_cast<std::size_t>(s) % batches.size()], w);
    finite = finite && last.finite() && std::isfinite(last.d_loss);
    if ((s + 1) % 50 == 0)
      logger()->info("adversarial step {} g {:.4f} d {:.4f} real {:.3f} fake {:.3f}", s + 1,
                 last.loss.total, last.d_loss, last.d_real_mean, last.d_fake_mean);
  }
  // end-of-run scores over all 64 pairs with the final networks
  double real = 0.0, fake = 0.0;
  for (const Batch &b : batches) {
    for (double v : st.discriminator->score(b.targets))
      real += v;
    for (double v : st.discriminator->score(st.generator.forward(b.inputs)))
      fake += v;
  }
  real /= 64.0;
  fake /= 64.0;
  auto inside = [](double v) { return v > 0.02 && v < 0.98; };
  return {finite && inside(real) && inside(fake),
          fmt::format("500 steps, all finite: {}; D mean real {:.4f}, fake {:.4f} (need both in "
                      "(0.02, 0.98)); last G loss {:.4f}, D loss {:.4f}",
                      finite ? "yes" : "no", real, fake, last.loss.total, last.d_loss)};
}

// ---------------------------------------------------------------------------
// service

Outcome service_contract(const Context &ctx) {
  Checks c;
  const fs::path dir = ctx.work / "models";
  fs::remove_all(dir);
  fs::create_directories(dir);
  CheckpointInfo info;
  info.stage = "content";
  info.mode = "sketch_strokes";
  save_generator(dir / "faces.skf", Generator(GeneratorConfig::standard(3), 4), info);

  ServiceOptions o;
  o.models_dir = dir;
  o.device = "cpu";
  o.queue_capacity = 1;
  SynthesisService svc(o);
  svc.start();
  svc.wait_ready();
  c.expect(svc.health()["status"] == "ok", "health: " + svc.health().dump());

  const ImageBuffer face = procedural_face(128, 9);
  const ImageBuffer sketch = xdog_sketch(face, XdogParams{});
  const std::string png = base64_encode(encode_png(sketch));
  nlohmann::json req = {{"mode", "sketch_strokes"},
                        {"model_id", "faces"},
                        {"output_size", 128},
                        {"image", png},
                        {"strokes", fixture_strokes().to_json()}};
  auto status = [&](const nlohmann::json &j, std::optional<int> *index = nullptr) {
    try {
      svc.synthesize(SynthesisRequest::from_json(j));
      return 200;
    } catch (const ServiceError &e) {
      if (index)
        *index = e.stroke_index();
      return e.status();
    }
  };

  const SynthesisResponse r1 = svc.synthesize(SynthesisRequest::from_json(req));
  const SynthesisResponse r2 = svc.synthesize(SynthesisRequest::from_json(req));
  c.expect(r1.image_png == r2.image_png, "repeat responses differ in image bytes");
  c.expect(r1.request_hash == r2.request_hash, "repeat responses differ in request hash");
  c.expect(r1.width == 128 && r1.height == 128, "response size");

  auto bad = req;
  bad["strokes"]["strokes"][2]["color"] = {0.2, 1.5, 0.3};
  std::optional<int> index;
  c.expect(status(bad, &index) == 400 && index == 2, "bad stroke colour -> 400 with index 2");
  bad = req;
  bad["strokes"]["strokes"][1]["points"] = {{500, 20}};
  index.reset();
  c.expect(status(bad, &index) == 400 && index == 1, "out-of-canvas stroke -> 400 with index 1");
  bad = req;
  bad["image"] = "***";
  c.expect(status(bad) == 400, "bad base64 -> 400");
  bad = req;
  bad["output_size"] = 100;
  c.expect(status(bad) == 400, "output size 100 -> 400");
  bad = req;
  bad.erase("mode");
  c.expect(status(bad) == 400, "missing mode -> 400");
  bad = req;
  bad["model_id"] = "nope";
  c.expect(status(bad) == 404, "unknown model -> 404");

  // queue of 1 with a single worker: a burst must see at least one 503
  std::vector<std::future<int>> burst;
  for (int i = 0; i < 6; ++i)
    burst.push_back(std::async(std::launch::async, [&] { return status(req); }));
  int ok = 0, busy = 0;
  for (auto &f : burst) {
    const int s = f.get();
    ok += s == 200;
    busy += s == 503;
  }
  c.expect(ok >= 1 && busy >= 1, fmt::format("burst: {} ok, {} 503", ok, busy));

  // latency report from the CLI
  std::string bench_detail = "bench not run";
  const fs::path report = ctx.work / "bench.json";
  const std::string cmd = fmt::format("\"{}\" bench --size 256 --runs {} --warmup 1 --report \"{}\" > /dev/null",
                                      ctx.cli.string(), ctx.bench_runs, report.string());
  const int rc = std::system(cmd.c_str());
  if (rc != 0 || !fs::exists(report)) {
    c.expect(false, fmt::format("bench exited with {}", rc));
  } else {
    const auto j = nlohmann::json::parse(std::ifstream(report));
    const bool has = j.contains("latency_ms") && j.contains("hardware");
    c.expect(has, "bench report lacks latency_ms or hardware");
    if (has)
      bench_detail = fmt::format("bench 256px: latency p50 {:.1f} ms, mean {:.1f} ms (reference "
                                 "20 ms, informational) on {}, {} thread(s)",
                                 j["latency_ms"]["p50"].get<double>(),
                                 j["latency_ms"]["mean"].get<double>(),
                                 j["hardware"].value("cpu", "unknown cpu"),
                                 j["hardware"].value("hardware_threads", 0));
  }
  return {c.ok(), c.summary() + "; " + bench_detail};
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"sketchforge acceptance suite"};
  std::string only;
  bool golden = false;
  Context ctx;
  ctx.golden_dir = SF_GOLDEN_DIR;
  ctx.cli = SF_CLI_PATH;
  ctx.work = fs::temp_directory_path() / "sketchforge_acceptance";
  app.add_option("--only", only, "run a single criterion");
  app.add_flag("--write-golden", golden, "regenerate the golden pipeline files");
  app.add_option("--golden-dir", ctx.golden_dir);
  app.add_option("--cli", ctx.cli, "sketchforge binary used for the bench report");
  app.add_option("--bench-runs", ctx.bench_runs);
  CLI11_PARSE(app, argc, argv);

  if (golden) {
    write_golden(ctx.golden_dir);
    fmt::print("golden files written to {}\n", ctx.golden_dir.string());
    return 0;
  }
  fs::create_directories(ctx.work);

  const std::vector<Criterion> criteria = {
      {"loss_suite", 10, loss_suite},
      {"gradcheck", 120, gradcheck},
      {"architecture", 60, architecture},
      {"pipeline", 120, pipeline},
      {"overfit", 900, overfit_smoke},
      {"adversarial", 1800, adversarial_smoke},
      {"stroke_compliance", 1200, stroke_compliance_gate},
      {"service", 300, service_contract},
  };

  int failed = 0, ran = 0;
  for (const auto &cr : criteria) {
    if (!only.empty() && cr.name != only)
      continue;
    ++ran;
    const auto t0 = Clock::now();
    Outcome out;
    try {
      out = cr.run(ctx);
    } catch (const std::exception &e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = seconds_since(t0);
    if (secs > cr.limit_s) {
      out.pass = false;
      out.detail += fmt::format("; took {:.1f} s, limit {:.0f} s", secs, cr.limit_s);
    }
    fmt::print("{} {} ({:.1f} s): {}\n", out.pass ? "PASS" : "FAIL", cr.name, secs, out.detail);
    std::fflush(stdout);
    failed += !out.pass;
  }
  if (ran == 0) {
    fmt::print(stderr, "no criterion named '{}'\n", only);
    return 2;
  }
  return failed == 0 ? 0 : 1;
}
