#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "sketchforge/model/layers.hpp"

namespace sf {

/// Shallow unconditional critic: `n_layers` stride-2 convolutions with leaky
/// ReLU, no normalisation and no fully-connected layer, followed by a 3x3
/// convolution to a one-channel logit map.
struct DiscriminatorConfig {
  int input_channels = 3;
  int base_width = 32;
  int n_layers = 4;
  int kernel = 4;
  int max_width = 256;
  double leaky_slope = 0.2;

  int min_resolution() const { return 1 << n_layers; }
  int receptive_field() const;
  void validate() const;

  nlohmann::json to_json() const;
  static DiscriminatorConfig from_json(const nlohmann::json &j);
};

/// Logits are clamped to +-kLogitClamp before the sigmoid so every score
/// stays strictly inside (0, 1).
inline constexpr double kLogitClamp = 30.0;

class Discriminator {
public:
  struct Pass {
    Tensor logits;               ///< [N, 1, h, w]
    std::vector<double> scores;  ///< per-image realism in (0, 1)
    nn::Cache cache;
  };

  /// Throws ConfigError if `input_resolution` is below the minimum.
  Discriminator(DiscriminatorConfig config, int input_resolution, std::uint64_t seed = 0);
  Discriminator(Discriminator &&) = default;
  Discriminator &operator=(Discriminator &&) = default;

  const DiscriminatorConfig &config() const { return config_; }
  int input_resolution() const { return resolution_; }

  /// Per-image scalar scores (spatial mean of the sigmoid score map).
  std::vector<double> score(const Tensor &images) const;
  Tensor logits(const Tensor &images) const;
  Pass forward(const Tensor &images) const;
  /// Given dL/dscore per image, returns dL/dimages; accumulates parameter
  /// gradients when `param_grads` is set.
  Tensor backward(const Pass &pass, std::span<const double> dscores, bool param_grads);

  /// sigmoid(clamp(logit)) averaged over each image's map.
  static std::vector<double> aggregate(const Tensor &logits);

  std::vector<nn::Param *> parameters();
  std::vector<const nn::Param *> parameters() const;
  std::size_t param_count() const;

private:
  void check_input(const Shape &s) const;

  DiscriminatorConfig config_;
  int resolution_;
  nn::Sequential net_;
};

Discriminator build_discriminator(int input_resolution, const DiscriminatorConfig &config = {},
                                  std::uint64_t seed = 0);

} // namespace sf
