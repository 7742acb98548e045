#include "sketchforge/model/discriminator.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "sketchforge/core/errors.hpp"

namespace sf {

int DiscriminatorConfig::receptive_field() const {
  int rf = 1, jump = 1;
  for (int i = 0; i < n_layers; ++i) {
    rf += (kernel - 1) * jump;
    jump *= 2;
  }
  return rf + 2 * jump; // final 3x3 stride-1 score conv
}

void DiscriminatorConfig::validate() const {
  if (input_channels <= 0 || base_width <= 0 || n_layers < 1 || kernel < 2 || max_width <= 0)
    throw ConfigError(fmt::format("discriminator: invalid config (in={}, base={}, layers={}, k={})",
                                  input_channels, base_width, n_layers, kernel));
  if (kernel % 2 != 0)
    throw ConfigError("discriminator: kernel must be even so stride-2 layers halve exactly");
}

nlohmann::json DiscriminatorConfig::to_json() const {
  return {{"input_channels", input_channels}, {"base_width", base_width},
          {"n_layers", n_layers},             {"kernel", kernel},
          {"max_width", max_width},           {"leaky_slope", leaky_slope}};
}

DiscriminatorConfig DiscriminatorConfig::from_json(const nlohmann::json &j) {
  try {
    DiscriminatorConfig c;
    c.input_channels = j.at("input_channels").get<int>();
    c.base_width = j.at("base_width").get<int>();
    c.n_layers = j.at("n_layers").get<int>();
    c.kernel = j.at("kernel").get<int>();
    c.max_width = j.at("max_width").get<int>();
    c.leaky_slope = j.at("leaky_slope").get<double>();
    c.validate();
    return c;
  } catch (const nlohmann::json::exception &e) {
    throw ConfigError(std::string("discriminator config: ") + e.what());
  }
}

Discriminator::Discriminator(DiscriminatorConfig config, int input_resolution, std::uint64_t seed)
    : config_(config), resolution_(input_resolution) {
  config_.validate();
  if (input_resolution < config_.min_resolution())
    throw ConfigError(fmt::format("discriminator: resolution {} below minimum {} for {} layers",
                                  input_resolution, config_.min_resolution(), config_.n_layers));
  Rng rng(seed);
  int in = config_.input_channels;
  for (int i = 0; i < config_.n_layers; ++i) {
    const int out = std::min(config_.base_width << i, config_.max_width);
    // padding k/2 - 1 halves even sizes exactly for even kernels
    net_.add<nn::Conv2d>(fmt::format("d{}", i), in, out, config_.kernel, 2, config_.kernel / 2 - 1)
        .init_he(rng);
    net_.add<nn::LeakyRelu>(config_.leaky_slope);
    in = out;
  }
  net_.add<nn::Conv2d>("score", in, 1, 3).init_he(rng, 0.5);
}

void Discriminator::check_input(const Shape &s) const {
  if (s.c != config_.input_channels)
    throw ShapeError(fmt::format("discriminator expects {} channels, got {}", config_.input_channels,
                                 s.c));
  if (s.h < config_.min_resolution() || s.w < config_.min_resolution())
    throw ShapeError(fmt::format("discriminator input {}x{} below minimum {}", s.h, s.w,
                                 config_.min_resolution()));
}

std::vector<double> Discriminator::aggregate(const Tensor &logits) {
  const Shape &s = logits.shape();
  std::vector<double> scores(static_cast<std::size_t>(s.n), 0.0);
  const std::size_t m = logits.sample_size();
  for (int n = 0; n < s.n; ++n) {
    const double *l = logits.sample(n);
    double acc = 0.0;
    for (std::size_t i = 0; i < m; ++i)
      acc += 1.0 / (1.0 + std::exp(-std::clamp(l[i], -kLogitClamp, kLogitClamp)));
    scores[n] = acc / static_cast<double>(m);
  }
  return scores;
}

Tensor Discriminator::logits(const Tensor &images) const {
  check_input(images.shape());
  return net_.forward(images, nullptr);
}

std::vector<double> Discriminator::score(const Tensor &images) const {
  return aggregate(logits(images));
}

Discriminator::Pass Discriminator::forward(const Tensor &images) const {
  check_input(images.shape());
  Pass p;
  p.logits = net_.forward(images, &p.cache);
  p.scores = aggregate(p.logits);
  return p;
}

Tensor Discriminator::backward(const Pass &pass, std::span<const double> dscores, bool param_grads) {
  const Shape &s = pass.logits.shape();
  if (dscores.size() != static_cast<std::size_t>(s.n))
    throw ShapeError(fmt::format("discriminator backward: {} score gradients for batch {}",
                                 dscores.size(), s.n));
  Tensor dlogits(s);
  const std::size_t m = pass.logits.sample_size();
  for (int n = 0; n < s.n; ++n) {
    const double *l = pass.logits.sample(n);
    double *g = dlogits.sample(n);
    for (std::size_t i = 0; i < m; ++i) {
      if (l[i] < -kLogitClamp || l[i] > kLogitClamp)
        continue;
      const double sg = 1.0 / (1.0 + std::exp(-l[i]));
      g[i] = dscores[n] * sg * (1.0 - sg) / static_cast<double>(m);
    }
  }
  return net_.backward(pass.cache, dlogits, param_grads);
}

std::vector<nn::Param *> Discriminator::parameters() {
  std::vector<nn::Param *> out;
  net_.collect(out);
  return out;
}

std::vector<const nn::Param *> Discriminator::parameters() const {
  std::vector<nn::Param *> tmp;
  const_cast<nn::Sequential &>(net_).collect(tmp);
  return {tmp.begin(), tmp.end()};
}

std::size_t Discriminator::param_count() const {
  std::size_t total = 0;
  for (const auto *p : parameters())
    total += p->value.size();
  return total;
}

Discriminator build_discriminator(int input_resolution, const DiscriminatorConfig &config,
                                  std::uint64_t seed) {
  return Discriminator(config, input_resolution, seed);
}

} // namespace sf
