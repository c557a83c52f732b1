#pragma once

// Writes small on-disk evaluation fixtures: feature NPYs, PNG masks and a
// manifest that ties them together.

#include <fstream>

#include "ecstat/pipeline.hpp"
#include "test_support.hpp"

namespace ecstat::testing {

struct FixtureOptions {
  std::size_t entries = 3;
  std::size_t height = 8;
  std::size_t width = 8;
  bool masks = true;
  bool identical = false; // transferred features equal to the style features
  std::uint64_t seed = 1;
};

// Returns the manifest path. Methods alternate gatys/acg. R11 maps have the VGG channel count (64).
inline std::filesystem::path write_fixture(const std::filesystem::path& dir, const FixtureOptions& o) {
  std::filesystem::create_directories(dir / "feat");
  std::filesystem::create_directories(dir / "masks");
  Manifest m;
  for (std::size_t i = 0; i < o.entries; ++i) {
    const auto tag = std::to_string(i);
    const auto style = random_map(o.height, o.width, 64, o.seed * 1000 + 2 * i);
    const auto transferred =
        o.identical ? style : random_map(o.height, o.width, 64, o.seed * 1000 + 2 * i + 1, 0.1 * double(i), 1.0);
    save_feature_map(style, dir / "feat" / ("style" + tag + ".npy"));
    save_feature_map(transferred, dir / "feat" / ("transfer" + tag + ".npy"));
    ManifestEntry e;
    e.method = i % 2 ? "acg" : "gatys";
    // entries 2k and 2k+1 share a triplet across the two methods
    e.style_id = "style" + std::to_string(i / 2);
    e.content_id = "content" + std::to_string(i / 2);
    e.style_weight = 100.0 * double(i / 2 + 1);
    e.transferred_features["R11"] = "feat/transfer" + tag + ".npy";
    e.style_features["R11"] = "feat/style" + tag + ".npy";
    if (o.masks) {
      std::vector<unsigned> labels(o.height * 2 * o.width * 2);
      for (std::size_t y = 0; y < o.height * 2; ++y)
        for (std::size_t x = 0; x < o.width * 2; ++x)
          labels[y * o.width * 2 + x] = (x < o.width ? 0u : 1u) + (y < (i % 3 + 1) * 2 ? 2u : 0u);
      save_mask_png(dir / "masks" / ("content" + tag + ".png"), o.height * 2, o.width * 2, labels);
      e.mask = "masks/content" + tag + ".png";
    }
    m.entries.push_back(std::move(e));
  }
  const auto path = dir / "manifest.json";
  std::ofstream(path) << manifest_to_json(m).dump(2);
  return path;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

} // namespace ecstat::testing
