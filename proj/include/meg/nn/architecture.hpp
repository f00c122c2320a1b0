#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>

#include "meg/nn/layers.hpp"

namespace meg::nn {

enum class LayerKind : std::uint8_t { dense = 1, layernorm = 2, normalize = 3 };

std::string to_string(LayerKind kind);

/// Metadata-only description of a layer; enough to count parameters
/// without allocating weights.
struct LayerSpec {
  LayerKind kind = LayerKind::dense;
  std::size_t in_features = 0;
  std::size_t out_features = 0;
  Activation activation = Activation::none;
  std::string label;
};

std::size_t parameter_count(const LayerSpec& spec);
std::size_t parameter_count(std::span<const LayerSpec> specs);

}  // namespace meg::nn
