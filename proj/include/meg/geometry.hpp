#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include "meg/errors.hpp"

namespace meg {

/// Pixel and latent dimensions of one deployment. The latent grid is the
/// pixel grid down-sampled by `downsample` in height and width.
struct ImageGeometry {
  std::size_t channels = 1;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t latent_channels = 2;
  std::size_t downsample = 4;

  std::size_t pixel_count() const noexcept { return channels * height * width; }
  std::size_t latent_height() const noexcept { return height / downsample; }
  std::size_t latent_width() const noexcept { return width / downsample; }
  std::size_t latent_count() const noexcept { return latent_channels * latent_height() * latent_width(); }

  void validate() const {
    if (channels == 0 || height == 0 || width == 0 || latent_channels == 0) {
      throw ArgumentError("geometry: dimensions must be positive");
    }
    if (downsample < 2) throw ArgumentError("geometry: down-sampling factor must exceed 1");
    if (height % downsample != 0 || width % downsample != 0) {
      throw ArgumentError("geometry: image " + std::to_string(height) + "x" + std::to_string(width) +
                          " is not divisible by down-sampling factor " + std::to_string(downsample));
    }
    if (latent_count() >= pixel_count()) {
      throw ArgumentError("geometry: latent element count " + std::to_string(latent_count()) +
                          " must be smaller than pixel count " + std::to_string(pixel_count()));
    }
  }

  friend bool operator==(const ImageGeometry&, const ImageGeometry&) = default;
};

/// Seed length for a latent of `latent_size` elements at compression rate f_c:
/// round-to-nearest(f_c * latent_size), which must land in (0, latent_size).
inline std::size_t seed_length(std::size_t latent_size, double compression_rate) {
  if (!(compression_rate > 0.0 && compression_rate < 1.0)) {
    throw ArgumentError("seed_length: compression rate must lie in (0,1), got " + std::to_string(compression_rate));
  }
  const auto n = static_cast<std::size_t>(std::llround(compression_rate * static_cast<double>(latent_size)));
  if (n == 0 || n >= latent_size) {
    throw ArgumentError("seed_length: f_c=" + std::to_string(compression_rate) + " on " +
                        std::to_string(latent_size) + " latents gives an empty or uncompressed seed");
  }
  return n;
}

}  // namespace meg
