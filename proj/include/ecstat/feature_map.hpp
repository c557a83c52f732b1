#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "errors.hpp"

namespace ecstat {

// Network layers known to the toolkit, in canonical order. The index of a
// layer in this list is used to derive per-layer seeds.
inline constexpr std::array<std::string_view, 6> kLayerNames = {"R11", "R21", "R31",
                                                                "R41", "R51", "R42"};
inline constexpr std::array<std::size_t, 6> kVggChannels = {64, 128, 256, 512, 512, 512};

inline std::optional<std::size_t> layer_index(std::string_view name) {
  for (std::size_t i = 0; i < kLayerNames.size(); ++i)
    if (kLayerNames[i] == name) return i;
  return std::nullopt;
}

inline std::optional<std::size_t> expected_channels(std::string_view layer) {
  if (auto i = layer_index(layer)) return kVggChannels[*i];
  return std::nullopt;
}

// H x W x C feature tensor, row-major (h, w, c), double precision.
class FeatureMap {
public:
  FeatureMap() = default;

  FeatureMap(std::size_t height, std::size_t width, std::size_t channels, std::string_view layer = {})
      : layer_(layer), height_(height), width_(width), channels_(channels),
        values_(height * width * channels, 0.0) {
    if (height == 0 || width == 0 || channels == 0)
      throw ShapeError("feature map dimensions must be positive");
  }

  FeatureMap(std::size_t height, std::size_t width, std::size_t channels, std::vector<double> values,
             std::string layer = {})
      : layer_(std::move(layer)), height_(height), width_(width), channels_(channels),
        values_(std::move(values)) {
    if (height == 0 || width == 0 || channels == 0)
      throw ShapeError("feature map dimensions must be positive");
    if (values_.size() != height * width * channels)
      throw ShapeError("feature map value count " + std::to_string(values_.size()) +
                       " does not match H*W*C = " + std::to_string(height * width * channels));
  }

  const std::string& layer() const { return layer_; }
  void set_layer(std::string layer) { layer_ = std::move(layer); }

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t channels() const { return channels_; }
  std::size_t locations() const { return height_ * width_; }

  double& at(std::size_t h, std::size_t w, std::size_t c) {
    return values_[(h * width_ + w) * channels_ + c];
  }
  double at(std::size_t h, std::size_t w, std::size_t c) const {
    return values_[(h * width_ + w) * channels_ + c];
  }

  // Channel vector at flat location p = h*W + w.
  std::span<const double> location(std::size_t p) const {
    return {values_.data() + p * channels_, channels_};
  }
  std::span<double> location(std::size_t p) { return {values_.data() + p * channels_, channels_}; }

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  bool all_finite() const {
    for (double v : values_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;

private:
  std::string layer_;
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t channels_ = 0;
  std::vector<double> values_;
};

} // namespace ecstat
