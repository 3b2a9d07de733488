#pragma once

#include <filesystem>
#include <string>

#include "dvton/image.hpp"
#include "dvton/latent.hpp"
#include "dvton/rng.hpp"

namespace dvton::test {

inline Image random_image(RandomStream& rng, int h, int w) {
  Image img(h, w);
  for (float& v : img.data) v = static_cast<float>(rng.uniform());
  return img;
}

inline Mask random_mask(RandomStream& rng, int h, int w, double keep_prob = 0.5) {
  Mask m(h, w);
  for (auto& v : m.data) v = rng.uniform() < keep_prob ? 1 : 0;
  return m;
}

inline LatentGrid random_latent(RandomStream& rng, int h, int w, int c) {
  LatentGrid g(h, w, c);
  for (float& v : g.data) v = static_cast<float>(rng.normal());
  return g;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("dvton_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace dvton::test
