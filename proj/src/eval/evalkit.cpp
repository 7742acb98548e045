#include "sketchforge/eval/evalkit.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include <fmt/format.h>

#include "sketchforge/core/errors.hpp"
#include "sketchforge/core/hash.hpp"
#include "sketchforge/core/raster.hpp"
#include "sketchforge/losses/losses.hpp"

namespace fs = std::filesystem;

namespace sf {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double rgb_dist(const ImageBuffer &img, int y, int x, const Rgb &c) {
  const double dr = img.at(y, x, 0) - c[0], dg = img.at(y, x, 1) - c[1],
               db = img.at(y, x, 2) - c[2];
  return std::sqrt(dr * dr + dg * dg + db * db);
}

StrokeSet widened(const StrokeSet &s, double by) {
  StrokeSet out = s;
  for (auto &st : out.strokes)
    st.width += 2.0 * by;
  return out;
}

ImageBuffer run_one(const ModelFn &model, const ImageBuffer &input) {
  const Tensor y = model(to_tensor(to_signed(input)));
  if (y.shape().n != 1 || y.shape().c != 3 || y.shape().h != input.height() ||
      y.shape().w != input.width())
    throw ShapeError("model output " + y.shape().str() + " does not match input " +
                     input.describe());
  return to_unit(to_image(y, 0, ValueRange::signed_));
}

double nan_mean(const std::vector<double> &v) {
  double s = 0.0;
  int n = 0;
  for (double x : v)
    if (!std::isnan(x)) {
      s += x;
      ++n;
    }
  return n ? s / n : kNaN;
}

nlohmann::json num(double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); }

} // namespace

ModelFn generator_model(const Generator &g) {
  return [&g](const Tensor &x) { return g.forward(x); };
}

double stroke_compliance(const ImageBuffer &output, const StrokeSet &strokes, int dilation) {
  if (output.channels() != 3)
    throw ShapeError("stroke compliance needs an RGB output, got " + output.describe());
  if (dilation < 0)
    throw ParameterError("dilation must be >= 0");
  const StrokeRaster r =
      rasterize_strokes(widened(strokes, dilation), output.height(), output.width(), {0, 0, 0});
  double sum = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < output.height(); ++y)
    for (int x = 0; x < output.width(); ++x)
      if (r.mask.at(y, x)) {
        sum += rgb_dist(output, y, x,
                        {r.image.at(y, x, 0), r.image.at(y, x, 1), r.image.at(y, x, 2)});
        ++n;
      }
  return n ? sum / static_cast<double>(n) : kNaN;
}

double color_spread(const ImageBuffer &output, const StrokeSet &strokes, int reach,
                    double tolerance) {
  if (strokes.strokes.empty())
    return kNaN;
  const int h = output.height(), w = output.width();
  std::vector<double> per_stroke;
  for (const auto &s : strokes.strokes) {
    StrokeSet one{{s}};
    const StrokeRaster core = rasterize_strokes(one, h, w, {0, 0, 0});
    const StrokeRaster ring = rasterize_strokes(widened(one, reach), h, w, {0, 0, 0});
    std::size_t hit = 0, total = 0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if (ring.mask.at(y, x) && !core.mask.at(y, x)) {
          ++total;
          hit += rgb_dist(output, y, x, s.color) <= tolerance;
        }
    if (total)
      per_stroke.push_back(static_cast<double>(hit) / static_cast<double>(total));
  }
  return nan_mean(per_stroke);
}

double mean_rgb_distance(const ImageBuffer &a, const ImageBuffer &b) {
  if (!a.same_geometry(b) || a.channels() != 3)
    throw ShapeError("cannot compare " + a.describe() + " with " + b.describe());
  double sum = 0.0;
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x)
      sum += rgb_dist(a, y, x, {b.at(y, x, 0), b.at(y, x, 1), b.at(y, x, 2)});
  return sum / (static_cast<double>(a.height()) * a.width());
}

// ---------------------------------------------------------------------------

nlohmann::json EvalRow::to_json() const {
  return {{"id", id},
          {"pixel_mse", pixel_mse},
          {"feature_loss", feature_loss},
          {"stroke_compliance", num(stroke_compliance)},
          {"color_spread", num(color_spread)},
          {"stroke_count", stroke_count}};
}

nlohmann::json EvalReport::aggregates() const {
  std::vector<double> mse, feat, comp, spread;
  for (const auto &r : rows) {
    mse.push_back(r.pixel_mse);
    feat.push_back(r.feature_loss);
    comp.push_back(r.stroke_compliance);
    spread.push_back(r.color_spread);
  }
  return {{"count", rows.size()},
          {"pixel_mse", num(nan_mean(mse))},
          {"feature_loss", num(nan_mean(feat))},
          {"stroke_compliance", num(nan_mean(comp))},
          {"color_spread", num(nan_mean(spread))}};
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json rj = nlohmann::json::array();
  for (const auto &r : rows)
    rj.push_back(r.to_json());
  nlohmann::json by = nlohmann::json::array();
  for (double v : compliance_by_dilation)
    by.push_back(num(v));
  bool monotone = true;
  for (std::size_t i = 1; i < compliance_by_dilation.size(); ++i)
    if (!(compliance_by_dilation[i] >= compliance_by_dilation[i - 1]))
      monotone = false;
  return {{"config", config},
          {"config_hash", config_hash},
          {"aggregates", aggregates()},
          {"compliance_by_dilation", by},
          {"compliance_monotone_in_dilation", monotone},
          {"rows", rj}};
}

std::string EvalReport::to_csv() const {
  auto f = [](double v) { return std::isnan(v) ? std::string() : fmt::format("{:.17g}", v); };
  std::string out = "id,pixel_mse,feature_loss,stroke_compliance,color_spread,stroke_count\n";
  for (const auto &r : rows)
    out += fmt::format("{},{},{},{},{},{}\n", r.id, f(r.pixel_mse), f(r.feature_loss),
                       f(r.stroke_compliance), f(r.color_spread), r.stroke_count);
  return out;
}

void EvalReport::write(const fs::path &dir, const std::string &stem) const {
  fs::create_directories(dir);
  std::ofstream(dir / (stem + ".json")) << to_json().dump(2) << "\n";
  std::ofstream(dir / (stem + ".csv")) << to_csv();
  if (!fs::exists(dir / (stem + ".csv")))
    throw IoError("could not write report to " + dir.string());
}

EvalReport eval_pairs(const ModelFn &model, const std::vector<TrainingPair> &pairs,
                      const FeatureExtractor &fx, nlohmann::json config) {
  EvalReport rep;
  std::vector<ImageBuffer> outputs;
  for (const auto &p : pairs) {
    const ImageBuffer out = run_one(model, p.input);
    EvalRow row;
    row.id = p.provenance.record_id;
    const ImageBuffer o_s = to_signed(out), t_s = to_signed(p.target);
    row.pixel_mse = pixel_loss(o_s, t_s);
    row.feature_loss = feature_loss(o_s, t_s, fx);
    row.stroke_count = static_cast<int>(p.strokes.strokes.size());
    row.stroke_compliance = p.strokes.strokes.empty() ? kNaN : stroke_compliance(out, p.strokes);
    row.color_spread = color_spread(out, p.strokes);
    rep.rows.push_back(row);
    outputs.push_back(out);
  }
  for (int r = 0; r <= 2; ++r) {
    std::vector<double> v;
    for (std::size_t i = 0; i < pairs.size(); ++i)
      if (!pairs[i].strokes.strokes.empty())
        v.push_back(stroke_compliance(outputs[i], pairs[i].strokes, r));
    rep.compliance_by_dilation.push_back(nan_mean(v));
  }
  config["feature_extractor"] = {{"backbone", fx.spec().backbone},
                                 {"tap", fx.spec().tap},
                                 {"fingerprint", to_hex(fx.weights_fingerprint())}};
  rep.config = config;
  rep.config_hash = sha256_hex(config.dump());
  return rep;
}

EvalReport eval_reconstruction(const ModelFn &model, const Manifest &manifest, Mode mode,
                               const FeatureExtractor &fx, const EvalOptions &options) {
  std::vector<TrainingPair> pairs;
  PairParams params = options.pairs;
  params.category = manifest.category;
  for (const auto &rec : manifest.split(options.split))
    pairs.push_back(make_training_pair(rec, mode, params, pair_seed(options.seed, 0, rec.id)));
  if (pairs.empty())
    throw ValidationError("split '" + options.split + "' has no records");
  nlohmann::json config = {{"mode", to_string(mode)},
                           {"split", options.split},
                           {"seed", options.seed},
                           {"category", to_string(manifest.category)},
                           {"pairs", params.to_json()},
                           {"model", options.model_tag}};
  return eval_pairs(model, pairs, fx, config);
}

double eval_stroke_compliance(const ModelFn &model, const std::vector<TrainingPair> &pairs,
                              int dilation) {
  std::vector<double> v;
  for (const auto &p : pairs) {
    if (p.strokes.strokes.empty())
      continue;
    v.push_back(stroke_compliance(run_one(model, p.input), p.strokes, dilation));
  }
  return nan_mean(v);
}

double eval_diversity(const ModelFn &model, const ImageBuffer &sketch, Mode mode,
                      const std::vector<StrokeSet> &variations) {
  std::vector<ImageBuffer> outs;
  for (const auto &s : variations) {
    const ImageBuffer in = mode == Mode::colorization ? compose_colorization_input(sketch, s)
                                                      : compose_sketch_input(sketch, s);
    outs.push_back(run_one(model, in));
  }
  double sum = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < outs.size(); ++i)
    for (std::size_t j = i + 1; j < outs.size(); ++j) {
      sum += mean_rgb_distance(outs[i], outs[j]);
      ++n;
    }
  return n ? sum / n : 0.0;
}

} // namespace sf
