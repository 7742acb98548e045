#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sketchforge/core/archive.hpp"
#include "sketchforge/model/generator.hpp"

namespace sf {

/// Descriptive fields stored next to the generator weights.
struct CheckpointInfo {
  std::string stage = "untrained"; ///< "content", "adversarial" or "untrained"
  std::string mode = "sketch2photo";
  std::string rng_state;
  std::uint64_t init_seed = 0;
  nlohmann::json extra = nlohmann::json::object();
};

struct LoadedGenerator {
  Generator generator;
  CheckpointInfo info;
};

inline constexpr const char *kCheckpointKind = "sketchforge.checkpoint";

/// Writes parameters as "<prefix><param name>" tensors.
void store_params(Archive &archive, const std::string &prefix,
                  const std::vector<const nn::Param *> &params);
/// Restores parameters; throws CheckpointError on a missing tensor or shape mismatch.
void restore_params(const Archive &archive, const std::string &prefix,
                    const std::vector<nn::Param *> &params);

/// Archive holding the generator config, weights and info (see docs/checkpoint_format.md).
Archive generator_archive(const Generator &generator, const CheckpointInfo &info);
LoadedGenerator generator_from_archive(const Archive &archive);

void save_generator(const std::filesystem::path &path, const Generator &generator,
                    const CheckpointInfo &info);
LoadedGenerator load_generator(const std::filesystem::path &path);

} // namespace sf
