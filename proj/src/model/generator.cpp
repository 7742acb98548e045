#include "sketchforge/model/generator.hpp"

#include <fmt/format.h>

#include "sketchforge/core/errors.hpp"

namespace sf {

void GeneratorConfig::validate() const {
  if (input_channels <= 0 || output_channels <= 0 || base_width <= 0)
    throw ConfigError(fmt::format("generator: widths must be positive (in={}, out={}, base={})",
                                  input_channels, output_channels, base_width));
  if (n_down != n_up)
    throw ConfigError(fmt::format("generator: n_down ({}) must equal n_up ({})", n_down, n_up));
  if (n_down < 0 || n_down > 8)
    throw ConfigError(fmt::format("generator: n_down {} out of range", n_down));
  if (n_bottleneck_res < 1)
    throw ConfigError("generator: need at least one bottleneck residual block");
  if (output_range != ValueRange::signed_)
    throw ConfigError("generator: tanh head produces signed-range output only");
}

GeneratorConfig GeneratorConfig::standard(int input_channels) {
  GeneratorConfig c;
  c.input_channels = input_channels;
  c.param_band = std::make_pair<std::size_t, std::size_t>(7'000'000, 8'600'000);
  return c;
}

nlohmann::json GeneratorConfig::to_json() const {
  nlohmann::json j{{"input_channels", input_channels},
                   {"base_width", base_width},
                   {"n_down", n_down},
                   {"n_bottleneck_res", n_bottleneck_res},
                   {"n_up", n_up},
                   {"output_channels", output_channels},
                   {"output_range", "[-1,1]"},
                   {"residual_init_gain", residual_init_gain}};
  std::vector<int> widths;
  for (int l = 0; l <= n_down; ++l)
    widths.push_back(level_width(l));
  j["level_widths"] = widths;
  if (param_band)
    j["param_band"] = {param_band->first, param_band->second};
  return j;
}

GeneratorConfig GeneratorConfig::from_json(const nlohmann::json &j) {
  try {
    GeneratorConfig c;
    c.input_channels = j.at("input_channels").get<int>();
    c.base_width = j.at("base_width").get<int>();
    c.n_down = j.at("n_down").get<int>();
    c.n_bottleneck_res = j.at("n_bottleneck_res").get<int>();
    c.n_up = j.at("n_up").get<int>();
    c.output_channels = j.at("output_channels").get<int>();
    c.residual_init_gain = j.value("residual_init_gain", 0.2);
    if (j.contains("param_band"))
      c.param_band = std::make_pair(j["param_band"][0].get<std::size_t>(),
                                    j["param_band"][1].get<std::size_t>());
    c.validate();
    return c;
  } catch (const nlohmann::json::exception &e) {
    throw ConfigError(std::string("generator config: ") + e.what());
  }
}

Generator::Generator(GeneratorConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  Rng rng(seed);
  const int n = config_.n_down;

  auto &stem = net_.add<nn::Conv2d>("stem", config_.input_channels, config_.level_width(0), 3);
  stem.init_he(rng);
  net_.add<nn::Relu>();

  for (int i = 1; i <= n; ++i) {
    auto &down = net_.add<nn::Conv2d>(fmt::format("down{}", i), config_.level_width(i - 1),
                                      config_.level_width(i), 3, 2);
    down.init_he(rng);
    net_.add<nn::Relu>();
  }

  for (int i = 0; i < config_.n_bottleneck_res; ++i) {
    auto &block = net_.add<nn::ResidualBlock>(fmt::format("res{}", i), config_.level_width(n),
                                              config_.level_width(n));
    block.init(rng, config_.residual_init_gain);
  }

  for (int j = 1; j <= n; ++j) {
    const int from = config_.level_width(n - j + 1), to = config_.level_width(n - j);
    net_.add<nn::Upsample2x>();
    net_.add<nn::ResidualBlock>(fmt::format("up{}.res0", j), from, to).init(rng,
                                                                            config_.residual_init_gain);
    net_.add<nn::ResidualBlock>(fmt::format("up{}.res1", j), to, to).init(rng,
                                                                        config_.residual_init_gain);
  }

  net_.add<nn::Relu>();
  net_.add<nn::Conv2d>("head", config_.level_width(0), config_.output_channels, 3).init_he(rng, 0.5);
  net_.add<nn::Tanh>();

  if (config_.param_band) {
    const auto count = param_count();
    if (count < config_.param_band->first || count > config_.param_band->second)
      throw ConfigError(fmt::format("generator has {} parameters, outside band [{}, {}]", count,
                                    config_.param_band->first, config_.param_band->second));
  }
}

void Generator::check_input(const Shape &s) const {
  if (s.c != config_.input_channels)
    throw ShapeError(fmt::format("generator expects {} input channels, got {} (input {})",
                                 config_.input_channels, s.c, s.str()));
  const int d = config_.downscale();
  if (s.h <= 0 || s.w <= 0 || s.h % d != 0 || s.w % d != 0)
    throw ShapeError(fmt::format(
        "generator expects spatial size divisible by {}, got {}x{}", d, s.h, s.w));
}

Tensor Generator::forward(const Tensor &x) const {
  check_input(x.shape());
  return net_.forward(x, nullptr);
}

Tensor Generator::forward(const Tensor &x, nn::Cache &cache) const {
  check_input(x.shape());
  return net_.forward(x, &cache);
}

Tensor Generator::backward(const nn::Cache &cache, const Tensor &dy) {
  return net_.backward(cache, dy, true);
}

std::vector<ImageBuffer> Generator::forward(std::span<const ImageBuffer> batch) const {
  if (batch.empty())
    return {};
  std::vector<ImageBuffer> signed_inputs;
  signed_inputs.reserve(batch.size());
  for (const auto &img : batch)
    signed_inputs.push_back(to_signed(img));
  return to_images(forward(to_tensor(signed_inputs)), ValueRange::signed_);
}

std::vector<nn::Param *> Generator::parameters() {
  std::vector<nn::Param *> out;
  net_.collect(out);
  return out;
}

std::vector<const nn::Param *> Generator::parameters() const {
  std::vector<nn::Param *> tmp;
  const_cast<nn::Sequential &>(net_).collect(tmp);
  return {tmp.begin(), tmp.end()};
}

std::size_t Generator::param_count() const {
  std::size_t total = 0;
  for (const auto *p : parameters())
    total += p->value.size();
  return total;
}

Generator build_generator(const GeneratorConfig &config, std::uint64_t seed) {
  return Generator(config, seed);
}

} // namespace sf
