#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "meg/nn/architecture.hpp"
#include "meg/nn/layers.hpp"
#include "meg/nn/mlp.hpp"

namespace meg::nn {

inline constexpr std::uint16_t kNetworkFormatVersion = 1;

struct LayerRecord {
  LayerKind kind = LayerKind::dense;
  std::string name;
  std::uint32_t in_features = 0;
  std::uint32_t out_features = 0;
  Activation activation = Activation::none;
  float epsilon = 0.0f;
  std::vector<float> params;

  friend bool operator==(const LayerRecord&, const LayerRecord&) = default;
};

/// A serialized network: free-form string metadata plus ordered layers.
///
/// Byte layout (all little-endian):
///   "MEGN" | u16 version | u16 reserved(0)
///   u32 metadata count | { str16 key | str16 value }*
///   u32 layer count | { u8 kind | u8 activation | u16 reserved | str16 name |
///                       u32 in | u32 out | f32 epsilon | u64 n | f32 x n }*
struct NetworkFile {
  std::vector<std::pair<std::string, std::string>> metadata;
  std::vector<LayerRecord> layers;

  const std::string* find(const std::string& key) const;
  const std::string& get(const std::string& key) const;

  friend bool operator==(const NetworkFile&, const NetworkFile&) = default;
};

std::vector<std::uint8_t> encode_network(const NetworkFile& file);
NetworkFile decode_network(std::span<const std::uint8_t> bytes);

void save_network(const std::string& path, const NetworkFile& file);
NetworkFile load_network(const std::string& path);

LayerRecord to_record(const DenseLayer<float>& layer);
LayerRecord to_record(const LayerNormLayer<float>& layer);
DenseLayer<float> dense_from_record(const LayerRecord& rec);
LayerNormLayer<float> layernorm_from_record(const LayerRecord& rec);

void append_records(const Mlp<float>& mlp, std::vector<LayerRecord>& out);
/// Every record must be a dense layer.
Mlp<float> mlp_from_records(std::span<const LayerRecord> records);

}  // namespace meg::nn
