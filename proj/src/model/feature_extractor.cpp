#include "sketchforge/model/feature_extractor.hpp"

#include <algorithm>
#include <cstring>

#include <fmt/format.h>

#include "sketchforge/core/archive.hpp"
#include "sketchforge/core/errors.hpp"
#include "sketchforge/core/hash.hpp"

namespace sf {

namespace {

struct VggStage {
  int width;
  int convs;
};

constexpr VggStage kVgg19[] = {{64, 2}, {128, 2}, {256, 4}, {512, 4}, {512, 4}};

} // namespace

const std::vector<std::string> &vgg19_layer_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (int s = 0; s < 5; ++s) {
      for (int i = 1; i <= kVgg19[s].convs; ++i) {
        v.push_back(fmt::format("conv{}_{}", s + 1, i));
        v.push_back(fmt::format("relu{}_{}", s + 1, i));
      }
      v.push_back(fmt::format("pool{}", s + 1));
    }
    return v;
  }();
  return names;
}

FeatureExtractor FeatureExtractor::create(const FeatureExtractorSpec &spec) {
  const auto &names = vgg19_layer_names();
  if (std::find(names.begin(), names.end(), spec.tap) == names.end())
    throw ConfigError("feature extractor: unknown tap layer '" + spec.tap + "'");
  const bool tiny = spec.backbone == "tiny";
  if (!tiny && spec.backbone != "vgg19")
    throw ConfigError("feature extractor: unknown backbone '" + spec.backbone + "'");
  if (tiny && spec.tiny_width <= 0)
    throw ConfigError("feature extractor: tiny_width must be positive");

  FeatureExtractor fx;
  fx.spec_ = spec;
  Rng rng(spec.seed);
  int in = 3;
  bool done = false;
  for (int s = 0; s < 5 && !done; ++s) {
    const int width = tiny ? spec.tiny_width << std::min(s, 3) : kVgg19[s].width;
    for (int i = 1; i <= kVgg19[s].convs && !done; ++i) {
      const auto conv_name = fmt::format("conv{}_{}", s + 1, i);
      fx.net_.add<nn::Conv2d>(conv_name, in, width, 3).init_he(rng);
      in = width;
      fx.channels_ = width;
      if (spec.tap == conv_name) {
        done = true;
        break;
      }
      fx.net_.add<nn::Relu>();
      if (spec.tap == fmt::format("relu{}_{}", s + 1, i))
        done = true;
    }
    if (done)
      break;
    fx.net_.add<nn::MaxPool2x>();
    fx.downscale_ *= 2;
    if (spec.tap == fmt::format("pool{}", s + 1))
      done = true;
  }

  if (!tiny) {
    if (spec.weights.empty())
      throw ConfigError("feature extractor: vgg19 backbone needs a weights archive");
    const Archive a = Archive::load(spec.weights);
    std::vector<nn::Param *> params;
    fx.net_.collect(params);
    for (nn::Param *p : params) {
      const Tensor &src = a.tensor(p->name);
      if (src.shape() != p->value.shape())
        throw ConfigError(fmt::format("vgg19 weights: {} has shape {}, expected {}", p->name,
                                      src.shape().str(), p->value.shape().str()));
      p->value = src;
    }
  }
  return fx;
}

Tensor FeatureExtractor::adapt(const Tensor &images) const {
  const Shape &s = images.shape();
  if (s.c != 3)
    throw ShapeError(fmt::format("feature extractor expects 3-channel images, got {}", s.str()));
  Tensor out = images;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < 3; ++c) {
      double *p = out.sample(n) + static_cast<std::size_t>(c) * s.plane();
      for (std::size_t i = 0; i < s.plane(); ++i)
        p[i] = (0.5 * (p[i] + 1.0) - kMean[c]) / kStd[c];
    }
  return out;
}

Tensor FeatureExtractor::extract(const Tensor &images) const {
  return net_.forward(adapt(images), nullptr);
}

Tensor FeatureExtractor::extract(const Tensor &images, nn::Cache &cache) const {
  return net_.forward(adapt(images), &cache);
}

Tensor FeatureExtractor::extract(const ImageBuffer &image) const {
  return extract(to_tensor(to_signed(image)));
}

Tensor FeatureExtractor::backward(const nn::Cache &cache, const Tensor &dfeatures) const {
  // param_grads = false: the layers only read their weights
  Tensor g = const_cast<nn::Sequential &>(net_).backward(cache, dfeatures, false);
  const Shape &s = g.shape();
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < 3; ++c) {
      double *p = g.sample(n) + static_cast<std::size_t>(c) * s.plane();
      const double k = 0.5 / kStd[c];
      for (std::size_t i = 0; i < s.plane(); ++i)
        p[i] *= k;
    }
  return g;
}

std::uint64_t FeatureExtractor::weights_fingerprint() const {
  std::vector<nn::Param *> params;
  const_cast<nn::Sequential &>(net_).collect(params);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const nn::Param *p : params) {
    const auto *bytes = reinterpret_cast<const std::uint8_t *>(p->value.data());
    h = fnv1a64(std::span(bytes, p->value.size() * sizeof(double)), h);
  }
  return h;
}

std::vector<const nn::Param *> FeatureExtractor::parameters() const {
  std::vector<nn::Param *> params;
  const_cast<nn::Sequential &>(net_).collect(params);
  return {params.begin(), params.end()};
}

std::size_t FeatureExtractor::param_count() const {
  std::vector<nn::Param *> params;
  const_cast<nn::Sequential &>(net_).collect(params);
  return nn::count_parameters(params);
}

} // namespace sf
