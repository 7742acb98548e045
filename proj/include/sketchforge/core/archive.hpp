#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <vector>
#include <string>

#include <nlohmann/json.hpp>

#include "sketchforge/core/tensor.hpp"

namespace sf {

/// Versioned container of a JSON header plus named float64 tensors.
///
/// Byte layout (all integers little-endian):
///
///     offset 0   8 bytes   magic "SKFARCH\0"
///     offset 8   u32       format_version (currently 1)
///     offset 12  u64       header length L
///     offset 20  L bytes   UTF-8 JSON header
///     offset 20+L          tensor blob
///
/// The header holds the caller's metadata under "meta" and a "tensors" array
/// of {name, dtype: "f64", shape: [n,c,h,w], offset, nbytes}; offsets are
/// relative to the start of the blob and tensors are stored row-major.
struct Archive {
  static constexpr std::uint32_t kFormatVersion = 1;

  nlohmann::json meta = nlohmann::json::object();
  std::map<std::string, Tensor> tensors;

  std::vector<std::uint8_t> serialize() const;
  static Archive deserialize(std::span<const std::uint8_t> bytes);

  /// Writes to `path` via a temporary file and atomic rename.
  void save(const std::filesystem::path &path) const;
  static Archive load(const std::filesystem::path &path);

  const Tensor &tensor(const std::string &name) const;
};

} // namespace sf
