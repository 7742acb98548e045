#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "sketchforge/core/image.hpp"
#include "sketchforge/core/rng.hpp"
#include "sketchforge/core/tensor.hpp"

namespace sf::test {

inline Tensor random_tensor(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  Tensor t(s);
  for (double &v : t.values())
    v = rng.uniform(lo, hi);
  return t;
}

inline ImageBuffer random_image(int h, int w, int c, std::uint64_t seed,
                                ValueRange r = ValueRange::unit) {
  Rng rng(seed);
  ImageBuffer img(h, w, c, r);
  const double lo = r == ValueRange::unit ? 0.0 : -1.0;
  for (double &v : img.values())
    v = rng.uniform(lo, 1.0);
  return img;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string &name) {
  auto p = std::filesystem::temp_directory_path() / ("sketchforge_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

} // namespace sf::test
