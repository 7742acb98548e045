#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "sketchforge/core/image.hpp"
#include "sketchforge/model/layers.hpp"

namespace sf {

/// Encoder / residual bottleneck / bilinear decoder layout.
///
/// Level widths are `base_width << level`: a stride-1 stem at level 0,
/// `n_down` stride-2 convolutions up to the bottleneck width
/// `base_width << n_down`, `n_bottleneck_res` residual blocks, then `n_up`
/// stages of (bilinear x2, residual block narrowing one level, residual
/// block) and a 3x3 head with tanh.
struct GeneratorConfig {
  int input_channels = 3;
  int base_width = 29;
  int n_down = 3;
  int n_bottleneck_res = 7;
  int n_up = 3;
  int output_channels = 3;
  ValueRange output_range = ValueRange::signed_;
  /// Residual-branch init gain; smaller keeps deep stacks near identity at start.
  double residual_init_gain = 0.2;
  /// Optional accepted parameter-count band, checked at construction.
  std::optional<std::pair<std::size_t, std::size_t>> param_band;

  int level_width(int level) const { return base_width << level; }
  int downscale() const { return 1 << n_down; }
  void validate() const;

  /// Face/car/bedroom production layout (about 7.8M parameters).
  static GeneratorConfig standard(int input_channels = 3);

  nlohmann::json to_json() const;
  static GeneratorConfig from_json(const nlohmann::json &j);
};

class Generator {
public:
  /// Builds and initialises the network (He-normal weights from `seed`).
  explicit Generator(GeneratorConfig config, std::uint64_t seed = 0);
  Generator(Generator &&) = default;
  Generator &operator=(Generator &&) = default;

  const GeneratorConfig &config() const { return config_; }

  /// Inference pass; safe to call concurrently.
  Tensor forward(const Tensor &x) const;
  /// Training pass recording activations into `cache`.
  Tensor forward(const Tensor &x, nn::Cache &cache) const;
  /// Back-propagates dL/dy, accumulating parameter gradients; returns dL/dx.
  Tensor backward(const nn::Cache &cache, const Tensor &dy);

  /// forward_generator on images; inputs may be unit or signed range.
  std::vector<ImageBuffer> forward(std::span<const ImageBuffer> batch) const;

  std::vector<nn::Param *> parameters();
  std::vector<const nn::Param *> parameters() const;
  std::size_t param_count() const;

  /// Throws ShapeError naming expected vs actual when `s` is not a valid input.
  void check_input(const Shape &s) const;

private:
  GeneratorConfig config_;
  nn::Sequential net_;
};

Generator build_generator(const GeneratorConfig &config, std::uint64_t seed = 0);

} // namespace sf
