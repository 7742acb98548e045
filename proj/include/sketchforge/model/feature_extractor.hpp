#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

#include "sketchforge/core/image.hpp"
#include "sketchforge/model/layers.hpp"

namespace sf {

/// Which frozen network backs the perceptual loss.
///
/// `vgg19` loads converted ImageNet weights (tensor names "conv1_1.weight",
/// ...) from `weights`; `tiny` uses the same VGG layer naming with channel
/// widths `tiny_width << stage` and He-normal weights drawn from `seed`.
struct FeatureExtractorSpec {
  std::string backbone = "tiny";
  std::string tap = "relu2_2";
  std::filesystem::path weights;
  std::uint64_t seed = 1234;
  int tiny_width = 8;
};

/// Frozen convolutional feature map used by the perceptual loss.
///
/// Inputs are signed-range RGB tensors; an adapter maps them to the
/// backbone's expected normalisation ((x + 1) / 2 - mean) / std with the
/// ImageNet statistics. Parameters never receive gradients.
class FeatureExtractor {
public:
  static FeatureExtractor create(const FeatureExtractorSpec &spec);

  FeatureExtractor(FeatureExtractor &&) = default;
  FeatureExtractor &operator=(FeatureExtractor &&) = default;

  const FeatureExtractorSpec &spec() const { return spec_; }
  const std::string &tap() const { return spec_.tap; }
  /// Spatial reduction factor between input and tap (2 for relu2_2).
  int downscale() const { return downscale_; }
  int channels() const { return channels_; }

  Tensor extract(const Tensor &images) const;
  Tensor extract(const Tensor &images, nn::Cache &cache) const;
  Tensor extract(const ImageBuffer &image) const;
  /// dL/dimages given dL/dfeatures; never touches parameter gradients.
  Tensor backward(const nn::Cache &cache, const Tensor &dfeatures) const;

  /// FNV hash over all weights; used to verify the network stays frozen.
  std::uint64_t weights_fingerprint() const;
  /// Read-only view of the frozen weights.
  std::vector<const nn::Param *> parameters() const;
  std::size_t param_count() const;

  static constexpr std::array<double, 3> kMean{0.485, 0.456, 0.406};
  static constexpr std::array<double, 3> kStd{0.229, 0.224, 0.225};

private:
  FeatureExtractor() = default;
  Tensor adapt(const Tensor &images) const;

  FeatureExtractorSpec spec_;
  nn::Sequential net_;
  int downscale_ = 1;
  int channels_ = 0;
};

/// The VGG-19 layer names in order (conv1_1, relu1_1, ..., relu5_4, pool5).
const std::vector<std::string> &vgg19_layer_names();

} // namespace sf
