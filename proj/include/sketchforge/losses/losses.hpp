#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "sketchforge/core/image.hpp"
#include "sketchforge/model/feature_extractor.hpp"

namespace sf {

/// Weights of the combined objective
///   L = w_p L_p + w_f L_f + w_adv L_adv + w_tv L_tv.
struct LossWeights {
  double pixel = 0.0;
  double feature = 0.0;
  double adversarial = 0.0;
  double tv = 0.0;

  /// Throws ParameterError unless every weight is finite and >= 0.
  void validate() const;
  LossWeights scaled(double alpha) const;
  bool operator==(const LossWeights &) const = default;

  nlohmann::json to_json() const;
  static LossWeights from_json(const nlohmann::json &j);
};

struct LossBreakdown {
  double pixel = 0.0;
  double feature = 0.0;
  double adversarial = 0.0;
  double tv = 0.0;
  double total = 0.0;

  bool finite() const;
  nlohmann::json to_json() const;
};

/// Floor applied to the argument of every log in the adversarial terms.
inline constexpr double kScoreEpsilon = 1e-7;

/// Number of log arguments floored at kScoreEpsilon since start-up.
std::uint64_t score_clamp_events();

// Pixel loss: mean over all elements of (pred - gt)^2.
double pixel_loss(const Tensor &pred, const Tensor &gt);
double pixel_loss(const ImageBuffer &pred, const ImageBuffer &gt);
Tensor pixel_loss_grad(const Tensor &pred, const Tensor &gt);

// Feature loss: mean over all tap activations of (phi(pred) - phi(gt))^2.
double feature_loss(const Tensor &pred, const Tensor &gt, const FeatureExtractor &fx);
double feature_loss(const ImageBuffer &pred, const ImageBuffer &gt, const FeatureExtractor &fx);

struct ValueAndGrad {
  double value = 0.0;
  Tensor grad;
};
ValueAndGrad feature_loss_with_grad(const Tensor &pred, const Tensor &gt, const FeatureExtractor &fx);
/// Variant reusing precomputed ground-truth features.
ValueAndGrad feature_loss_with_grad(const Tensor &pred, const Tensor &gt_features,
                                    const FeatureExtractor &fx, bool need_grad);

// Generator adversarial loss: -sum_i log D(G(x_i)) over the batch.
// Scores must lie in [0, 1] (DomainError otherwise).
double adversarial_loss_g(std::span<const double> scores);
std::vector<double> adversarial_loss_g_grad(std::span<const double> scores);

// Discriminator loss: -sum log d_real - sum log(1 - d_fake).
double discriminator_loss(std::span<const double> d_real, std::span<const double> d_fake);
struct DiscriminatorLossGrad {
  std::vector<double> d_real;
  std::vector<double> d_fake;
};
DiscriminatorLossGrad discriminator_loss_grad(std::span<const double> d_real,
                                              std::span<const double> d_fake);

// Total-variation loss: per image, sum over channels of squared horizontal and
// vertical neighbour differences divided by H*W; averaged over the batch.
// A single row (or column) contributes no vertical (horizontal) term.
double tv_loss(const Tensor &img);
double tv_loss(const ImageBuffer &img);
Tensor tv_loss_grad(const Tensor &img);

/// Weighted sum in the fixed order pixel, feature, adversarial, tv.
double combine(const LossWeights &w, const LossBreakdown &terms);

LossBreakdown total_loss(const Tensor &pred, const Tensor &gt, std::span<const double> d_scores,
                         const LossWeights &weights, const FeatureExtractor &fx);

struct TotalLossResult {
  LossBreakdown breakdown;
  Tensor grad_pred;                ///< dL/dpred from the pixel, feature and tv terms
  std::vector<double> grad_scores; ///< dL/dscore from the adversarial term
};

/// total_loss plus gradients. Terms with zero weight are evaluated for
/// reporting but contribute no gradient.
TotalLossResult total_loss_with_grad(const Tensor &pred, const Tensor &gt,
                                     std::span<const double> d_scores, const LossWeights &weights,
                                     const FeatureExtractor &fx);

} // namespace sf
