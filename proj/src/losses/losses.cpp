#include "sketchforge/losses/losses.hpp"

#include <atomic>
#include <cmath>

#include <fmt/format.h>

#include "sketchforge/core/errors.hpp"
#include "sketchforge/core/logging.hpp"

namespace sf {

namespace {

std::atomic<std::uint64_t> g_clamp_events{0};

void check_score(double s) {
  if (!(s >= 0.0 && s <= 1.0))
    throw DomainError(fmt::format("discriminator score {} outside [0, 1]", s));
}

// log(max(v, eps)); v is s or 1 - s
double safe_log(double v) {
  if (v < kScoreEpsilon) {
    g_clamp_events.fetch_add(1, std::memory_order_relaxed);
    logger()->debug("log argument {} floored at {}", v, kScoreEpsilon);
    return std::log(kScoreEpsilon);
  }
  return std::log(v);
}

// d/dv log(max(v, eps))
double safe_log_grad(double v) { return v < kScoreEpsilon ? 0.0 : 1.0 / v; }

} // namespace

std::uint64_t score_clamp_events() { return g_clamp_events.load(); }

void LossWeights::validate() const {
  for (double w : {pixel, feature, adversarial, tv})
    if (!std::isfinite(w) || w < 0.0)
      throw ParameterError(fmt::format("loss weights must be finite and >= 0 (got p={}, f={}, "
                                       "adv={}, tv={})",
                                       pixel, feature, adversarial, tv));
}

LossWeights LossWeights::scaled(double alpha) const {
  return {alpha * pixel, alpha * feature, alpha * adversarial, alpha * tv};
}

nlohmann::json LossWeights::to_json() const {
  return {{"w_p", pixel}, {"w_f", feature}, {"w_adv", adversarial}, {"w_tv", tv}};
}

LossWeights LossWeights::from_json(const nlohmann::json &j) {
  LossWeights w{j.at("w_p").get<double>(), j.at("w_f").get<double>(), j.at("w_adv").get<double>(),
                j.at("w_tv").get<double>()};
  w.validate();
  return w;
}

bool LossBreakdown::finite() const {
  return std::isfinite(pixel) && std::isfinite(feature) && std::isfinite(adversarial) &&
         std::isfinite(tv) && std::isfinite(total);
}

nlohmann::json LossBreakdown::to_json() const {
  return {{"l_p", pixel}, {"l_f", feature}, {"l_adv", adversarial}, {"l_tv", tv}, {"total", total}};
}

// ---------------------------------------------------------------------------

double pixel_loss(const Tensor &pred, const Tensor &gt) {
  require_same_shape(gt, pred, "pixel_loss");
  if (pred.empty())
    return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - gt[i];
    acc += d * d;
  }
  return acc / static_cast<double>(pred.size());
}

double pixel_loss(const ImageBuffer &pred, const ImageBuffer &gt) {
  if (!pred.same_geometry(gt))
    throw ShapeError("pixel_loss: " + pred.describe() + " vs " + gt.describe());
  return pixel_loss(to_tensor(pred), to_tensor(gt));
}

Tensor pixel_loss_grad(const Tensor &pred, const Tensor &gt) {
  require_same_shape(gt, pred, "pixel_loss");
  Tensor g(pred.shape());
  const double k = 2.0 / static_cast<double>(std::max<std::size_t>(pred.size(), 1));
  for (std::size_t i = 0; i < pred.size(); ++i)
    g[i] = k * (pred[i] - gt[i]);
  return g;
}

// ---------------------------------------------------------------------------

ValueAndGrad feature_loss_with_grad(const Tensor &pred, const Tensor &gt_features,
                                    const FeatureExtractor &fx, bool need_grad) {
  nn::Cache cache;
  const Tensor f = need_grad ? fx.extract(pred, cache) : fx.extract(pred);
  require_same_shape(gt_features, f, "feature_loss");
  ValueAndGrad out;
  out.value = pixel_loss(f, gt_features);
  if (need_grad)
    out.grad = fx.backward(cache, pixel_loss_grad(f, gt_features));
  return out;
}

ValueAndGrad feature_loss_with_grad(const Tensor &pred, const Tensor &gt,
                                    const FeatureExtractor &fx) {
  require_same_shape(gt, pred, "feature_loss");
  return feature_loss_with_grad(pred, fx.extract(gt), fx, true);
}

double feature_loss(const Tensor &pred, const Tensor &gt, const FeatureExtractor &fx) {
  require_same_shape(gt, pred, "feature_loss");
  return pixel_loss(fx.extract(pred), fx.extract(gt));
}

double feature_loss(const ImageBuffer &pred, const ImageBuffer &gt, const FeatureExtractor &fx) {
  return feature_loss(to_tensor(to_signed(pred)), to_tensor(to_signed(gt)), fx);
}

// ---------------------------------------------------------------------------

double adversarial_loss_g(std::span<const double> scores) {
  double acc = 0.0;
  for (double s : scores) {
    check_score(s);
    acc -= safe_log(s);
  }
  return acc;
}

std::vector<double> adversarial_loss_g_grad(std::span<const double> scores) {
  std::vector<double> g;
  g.reserve(scores.size());
  for (double s : scores) {
    check_score(s);
    g.push_back(-safe_log_grad(s));
  }
  return g;
}

double discriminator_loss(std::span<const double> d_real, std::span<const double> d_fake) {
  double acc = 0.0;
  for (double s : d_real) {
    check_score(s);
    acc -= safe_log(s);
  }
  for (double s : d_fake) {
    check_score(s);
    acc -= safe_log(1.0 - s);
  }
  return acc;
}

DiscriminatorLossGrad discriminator_loss_grad(std::span<const double> d_real,
                                              std::span<const double> d_fake) {
  DiscriminatorLossGrad g;
  for (double s : d_real) {
    check_score(s);
    g.d_real.push_back(-safe_log_grad(s));
  }
  for (double s : d_fake) {
    check_score(s);
    g.d_fake.push_back(safe_log_grad(1.0 - s));
  }
  return g;
}

// ---------------------------------------------------------------------------

double tv_loss(const Tensor &img) {
  const Shape &s = img.shape();
  if (s.h <= 0 || s.w <= 0)
    throw ShapeError("tv_loss: empty image " + s.str());
  double total = 0.0;
  for (int n = 0; n < s.n; ++n) {
    double acc = 0.0;
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) {
          const double v = img.at(n, c, y, x);
          if (x + 1 < s.w) {
            const double d = img.at(n, c, y, x + 1) - v;
            acc += d * d;
          }
          if (y + 1 < s.h) {
            const double d = img.at(n, c, y + 1, x) - v;
            acc += d * d;
          }
        }
    total += acc / static_cast<double>(s.plane());
  }
  return s.n > 0 ? total / s.n : 0.0;
}

double tv_loss(const ImageBuffer &img) { return tv_loss(to_tensor(img)); }

Tensor tv_loss_grad(const Tensor &img) {
  const Shape &s = img.shape();
  Tensor g(s);
  const double k = 2.0 / (static_cast<double>(s.plane()) * std::max(s.n, 1));
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) {
          const double v = img.at(n, c, y, x);
          if (x + 1 < s.w) {
            const double d = img.at(n, c, y, x + 1) - v;
            g.at(n, c, y, x + 1) += k * d;
            g.at(n, c, y, x) -= k * d;
          }
          if (y + 1 < s.h) {
            const double d = img.at(n, c, y + 1, x) - v;
            g.at(n, c, y + 1, x) += k * d;
            g.at(n, c, y, x) -= k * d;
          }
        }
  return g;
}

// ---------------------------------------------------------------------------

double combine(const LossWeights &w, const LossBreakdown &t) {
  return w.pixel * t.pixel + w.feature * t.feature + w.adversarial * t.adversarial + w.tv * t.tv;
}

LossBreakdown total_loss(const Tensor &pred, const Tensor &gt, std::span<const double> d_scores,
                         const LossWeights &weights, const FeatureExtractor &fx) {
  weights.validate();
  LossBreakdown b;
  b.pixel = pixel_loss(pred, gt);
  b.feature = feature_loss(pred, gt, fx);
  b.adversarial = adversarial_loss_g(d_scores);
  b.tv = tv_loss(pred);
  b.total = combine(weights, b);
  return b;
}

TotalLossResult total_loss_with_grad(const Tensor &pred, const Tensor &gt,
                                     std::span<const double> d_scores, const LossWeights &weights,
                                     const FeatureExtractor &fx) {
  weights.validate();
  TotalLossResult r;
  LossBreakdown &b = r.breakdown;
  r.grad_pred = Tensor(pred.shape());

  b.pixel = pixel_loss(pred, gt);
  if (weights.pixel > 0.0)
    r.grad_pred.add_scaled(pixel_loss_grad(pred, gt), weights.pixel);

  require_same_shape(gt, pred, "feature_loss");
  const auto f = feature_loss_with_grad(pred, fx.extract(gt), fx, weights.feature > 0.0);
  b.feature = f.value;
  if (weights.feature > 0.0)
    r.grad_pred.add_scaled(f.grad, weights.feature);

  b.tv = tv_loss(pred);
  if (weights.tv > 0.0)
    r.grad_pred.add_scaled(tv_loss_grad(pred), weights.tv);

  b.adversarial = adversarial_loss_g(d_scores);
  r.grad_scores.assign(d_scores.size(), 0.0);
  if (weights.adversarial > 0.0) {
    r.grad_scores = adversarial_loss_g_grad(d_scores);
    for (double &g : r.grad_scores)
      g *= weights.adversarial;
  }

  b.total = combine(weights, b);
  return r;
}

} // namespace sf
