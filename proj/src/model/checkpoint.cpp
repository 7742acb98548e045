#include "sketchforge/model/checkpoint.hpp"

#include "sketchforge/core/errors.hpp"

namespace sf {

void store_params(Archive &archive, const std::string &prefix,
                  const std::vector<const nn::Param *> &params) {
  for (const nn::Param *p : params)
    archive.tensors[prefix + p->name] = p->value;
}

void restore_params(const Archive &archive, const std::string &prefix,
                    const std::vector<nn::Param *> &params) {
  for (nn::Param *p : params) {
    const Tensor &t = archive.tensor(prefix + p->name);
    if (t.shape() != p->value.shape())
      throw CheckpointError(prefix + p->name + ": stored shape " + t.shape().str() +
                            " does not match network shape " + p->value.shape().str());
    p->value = t;
  }
}

Archive generator_archive(const Generator &generator, const CheckpointInfo &info) {
  Archive a;
  a.meta = {{"kind", kCheckpointKind},
            {"generator_config", generator.config().to_json()},
            {"stage", info.stage},
            {"mode", info.mode},
            {"rng_state", info.rng_state},
            {"init_seed", info.init_seed},
            {"param_count", generator.param_count()},
            {"extra", info.extra}};
  store_params(a, "generator.", generator.parameters());
  return a;
}

LoadedGenerator generator_from_archive(const Archive &a) {
  if (a.meta.value("kind", "") != kCheckpointKind)
    throw CheckpointError("archive is not a generator checkpoint");
  try {
    CheckpointInfo info;
    info.stage = a.meta.at("stage").get<std::string>();
    info.mode = a.meta.at("mode").get<std::string>();
    info.rng_state = a.meta.value("rng_state", "");
    info.init_seed = a.meta.value("init_seed", std::uint64_t{0});
    info.extra = a.meta.value("extra", nlohmann::json::object());
    auto config = GeneratorConfig::from_json(a.meta.at("generator_config"));
    Generator g(config, info.init_seed);
    restore_params(a, "generator.", g.parameters());
    return {std::move(g), std::move(info)};
  } catch (const nlohmann::json::exception &e) {
    throw CheckpointError(std::string("checkpoint metadata: ") + e.what());
  } catch (const ConfigError &e) {
    throw CheckpointError(std::string("checkpoint config: ") + e.what());
  }
}

void save_generator(const std::filesystem::path &path, const Generator &generator,
                    const CheckpointInfo &info) {
  generator_archive(generator, info).save(path);
}

LoadedGenerator load_generator(const std::filesystem::path &path) {
  return generator_from_archive(Archive::load(path));
}

} // namespace sf
