#include "meg/nn/serialize.hpp"

#include <algorithm>
#include <array>

#include "meg/bytes.hpp"

namespace meg::nn {

namespace {

constexpr std::array<std::uint8_t, 4> kMagic{'M', 'E', 'G', 'N'};

LayerKind parse_kind(std::uint8_t v) {
  switch (v) {
    case 1:
      return LayerKind::dense;
    case 2:
      return LayerKind::layernorm;
    case 3:
      return LayerKind::normalize;
    default:
      throw FrameError("network file: unknown layer kind " + std::to_string(v));
  }
}

Activation parse_activation(std::uint8_t v) {
  if (v > 2) throw FrameError("network file: unknown activation " + std::to_string(v));
  return static_cast<Activation>(v);
}

}  // namespace

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::dense:
      return "dense";
    case LayerKind::layernorm:
      return "layernorm";
    case LayerKind::normalize:
      return "normalize";
  }
  return "unknown";
}

std::size_t parameter_count(const LayerSpec& spec) {
  switch (spec.kind) {
    case LayerKind::dense:
      return spec.in_features * spec.out_features + spec.out_features;
    case LayerKind::layernorm:
      return 2 * spec.in_features;
    case LayerKind::normalize:
      return 0;
  }
  return 0;
}

std::size_t parameter_count(std::span<const LayerSpec> specs) {
  std::size_t n = 0;
  for (const auto& s : specs) n += parameter_count(s);
  return n;
}

const std::string* NetworkFile::find(const std::string& key) const {
  for (const auto& [k, v] : metadata) {
    if (k == key) return &v;
  }
  return nullptr;
}

const std::string& NetworkFile::get(const std::string& key) const {
  if (const auto* v = find(key)) return *v;
  throw FrameError("network file: missing metadata key '" + key + "'");
}

std::vector<std::uint8_t> encode_network(const NetworkFile& file) {
  ByteWriter w;
  w.bytes(kMagic);
  w.u16(kNetworkFormatVersion);
  w.u16(0);
  w.u32(static_cast<std::uint32_t>(file.metadata.size()));
  for (const auto& [k, v] : file.metadata) {
    w.str16(k);
    w.str16(v);
  }
  w.u32(static_cast<std::uint32_t>(file.layers.size()));
  for (const auto& l : file.layers) {
    w.u8(static_cast<std::uint8_t>(l.kind));
    w.u8(static_cast<std::uint8_t>(l.activation));
    w.u16(0);
    w.str16(l.name);
    w.u32(l.in_features);
    w.u32(l.out_features);
    w.f32(l.epsilon);
    w.u64(l.params.size());
    for (float p : l.params) w.f32(p);
  }
  return w.take();
}

NetworkFile decode_network(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  auto magic = r.bytes(4);
  if (!std::equal(magic.begin(), magic.end(), kMagic.begin())) {
    throw FrameError("network file: bad magic");
  }
  const auto version = r.u16();
  if (version != kNetworkFormatVersion) {
    throw FrameError("network file: unsupported version " + std::to_string(version));
  }
  r.u16();
  NetworkFile file;
  const auto nmeta = r.u32();
  for (std::uint32_t i = 0; i < nmeta; ++i) {
    auto k = r.str16();
    auto v = r.str16();
    file.metadata.emplace_back(std::move(k), std::move(v));
  }
  const auto nlayers = r.u32();
  for (std::uint32_t i = 0; i < nlayers; ++i) {
    LayerRecord l;
    l.kind = parse_kind(r.u8());
    l.activation = parse_activation(r.u8());
    r.u16();
    l.name = r.str16();
    l.in_features = r.u32();
    l.out_features = r.u32();
    l.epsilon = r.f32();
    const auto n = r.u64();
    if (n > r.remaining() / 4) throw FrameError("network file: payload length exceeds file size");
    l.params.resize(n);
    for (auto& p : l.params) p = r.f32();
    file.layers.push_back(std::move(l));
  }
  if (r.remaining() != 0) throw FrameError("network file: trailing bytes");
  return file;
}

void save_network(const std::string& path, const NetworkFile& file) {
  write_file_bytes(path, encode_network(file));
}

NetworkFile load_network(const std::string& path) {
  return decode_network(read_file_bytes(path));
}

LayerRecord to_record(const DenseLayer<float>& layer) {
  LayerRecord r;
  r.kind = LayerKind::dense;
  r.name = layer.name();
  r.in_features = static_cast<std::uint32_t>(layer.in_features());
  r.out_features = static_cast<std::uint32_t>(layer.out_features());
  r.activation = layer.activation();
  r.params = layer.weights().values();
  r.params.insert(r.params.end(), layer.bias().values().begin(), layer.bias().values().end());
  return r;
}

LayerRecord to_record(const LayerNormLayer<float>& layer) {
  LayerRecord r;
  r.kind = layer.affine() ? LayerKind::layernorm : LayerKind::normalize;
  r.name = layer.name();
  r.in_features = static_cast<std::uint32_t>(layer.normalized_size());
  r.out_features = r.in_features;
  r.epsilon = static_cast<float>(layer.epsilon());
  if (layer.affine()) {
    r.params = layer.gain().values();
    r.params.insert(r.params.end(), layer.offset().values().begin(), layer.offset().values().end());
  }
  return r;
}

DenseLayer<float> dense_from_record(const LayerRecord& rec) {
  if (rec.kind != LayerKind::dense) throw FrameError("network file: expected dense layer, got " + to_string(rec.kind));
  const std::size_t in = rec.in_features;
  const std::size_t out = rec.out_features;
  if (rec.params.size() != in * out + out) {
    throw FrameError("network file: dense layer " + rec.name + " has wrong parameter count");
  }
  DenseLayer<float> layer(in, out, rec.activation, rec.name);
  std::copy_n(rec.params.begin(), in * out, layer.weights().values().begin());
  std::copy(rec.params.begin() + static_cast<std::ptrdiff_t>(in * out), rec.params.end(),
            layer.bias().values().begin());
  return layer;
}

LayerNormLayer<float> layernorm_from_record(const LayerRecord& rec) {
  if (rec.kind != LayerKind::layernorm && rec.kind != LayerKind::normalize) {
    throw FrameError("network file: expected normalization layer, got " + to_string(rec.kind));
  }
  const bool affine = rec.kind == LayerKind::layernorm;
  const std::size_t n = rec.in_features;
  if (rec.params.size() != (affine ? 2 * n : 0)) {
    throw FrameError("network file: normalization layer " + rec.name + " has wrong parameter count");
  }
  LayerNormLayer<float> layer(n, rec.epsilon, affine, rec.name);
  if (affine) {
    std::copy_n(rec.params.begin(), n, layer.gain().values().begin());
    std::copy_n(rec.params.begin() + static_cast<std::ptrdiff_t>(n), n, layer.offset().values().begin());
  }
  return layer;
}

void append_records(const Mlp<float>& mlp, std::vector<LayerRecord>& out) {
  for (const auto& l : mlp.layers()) out.push_back(to_record(l));
}

Mlp<float> mlp_from_records(std::span<const LayerRecord> records) {
  std::vector<DenseLayer<float>> layers;
  for (const auto& r : records) layers.push_back(dense_from_record(r));
  if (layers.empty()) throw FrameError("network file: empty layer stack");
  return Mlp<float>(std::move(layers));
}

}  // namespace meg::nn
