#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "meg/geometry.hpp"

namespace meg::genmodel {

/// Pixel-space image, values nominally in [0,1], layout [C][H][W].
struct PixelImage {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> values;

  static PixelImage zeros(const ImageGeometry& g) {
    return {g.channels, g.height, g.width, std::vector<float>(g.pixel_count(), 0.0f)};
  }

  std::size_t size() const noexcept { return values.size(); }

  /// 8-bit view used by metrics (i_max = 255).
  std::vector<std::uint8_t> to_u8() const {
    std::vector<std::uint8_t> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
      const float v = values[i] < 0.f ? 0.f : (values[i] > 1.f ? 1.f : values[i]);
      out[i] = static_cast<std::uint8_t>(v * 255.0f + 0.5f);
    }
    return out;
  }

  friend bool operator==(const PixelImage&, const PixelImage&) = default;
};

/// Latent feature z, layout [Z][h][w].
struct LatentFeature {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> values;

  static LatentFeature zeros(const ImageGeometry& g) {
    return {g.latent_channels, g.latent_height(), g.latent_width(), std::vector<float>(g.latent_count(), 0.0f)};
  }

  std::size_t size() const noexcept { return values.size(); }

  friend bool operator==(const LatentFeature&, const LatentFeature&) = default;
};

}  // namespace meg::genmodel
