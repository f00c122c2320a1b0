#include "meg/protocol/frame.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <string>

#include "meg/bytes.hpp"
#include "meg/errors.hpp"

namespace meg::protocol {

namespace {

constexpr std::uint8_t kMagic[4] = {'M', 'E', 'G', 'S'};

std::uint32_t header_crc(std::span<const std::uint8_t> bytes) {
  return static_cast<std::uint32_t>(crc32(0L, bytes.data(), 28));
}

}  // namespace

std::uint16_t compression_to_q16(double compression_rate) {
  if (!(compression_rate > 0.0 && compression_rate < 1.0)) {
    throw ArgumentError("frame: compression rate " + std::to_string(compression_rate) + " is outside (0,1)");
  }
  const long q = std::lround(compression_rate * 65536.0);
  return static_cast<std::uint16_t>(std::clamp<long>(q, 1, 65535));
}

std::vector<std::uint8_t> encode_frame(const SeedFrame& frame) {
  ByteWriter w;
  w.bytes(kMagic);
  w.u16(frame.version);
  w.u16(frame.compression_q16);
  w.u16(frame.latent_channels);
  w.u16(frame.latent_height);
  w.u16(frame.latent_width);
  w.u16(0);
  w.f32(frame.scale);
  w.u32(frame.block_length);
  w.u32(static_cast<std::uint32_t>(frame.payload.size()));
  std::vector<std::uint8_t> out = w.take();
  const std::uint32_t crc = header_crc(out);
  ByteWriter tail;
  tail.u32(crc);
  for (float v : frame.payload) tail.f32(v);
  const auto t = tail.take();
  out.insert(out.end(), t.begin(), t.end());
  return out;
}

SeedFrame decode_frame_header(std::span<const std::uint8_t> bytes, std::uint32_t* symbol_count) {
  if (bytes.size() < kFrameHeaderSize) {
    throw FrameError("frame: " + std::to_string(bytes.size()) + " bytes is shorter than the 32-byte header");
  }
  if (!std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) throw FrameError("frame: bad magic");
  ByteReader r(bytes.subspan(4));
  SeedFrame f;
  f.version = r.u16();
  if (f.version != kFrameVersion) throw FrameError("frame: unsupported version " + std::to_string(f.version));
  f.compression_q16 = r.u16();
  f.latent_channels = r.u16();
  f.latent_height = r.u16();
  f.latent_width = r.u16();
  if (r.u16() != 0) throw FrameError("frame: reserved header field is not zero");
  f.scale = r.f32();
  f.block_length = r.u32();
  const std::uint32_t count = r.u32();
  const std::uint32_t crc = r.u32();
  if (crc != header_crc(bytes)) throw FrameError("frame: header checksum mismatch");
  if (f.block_length == 0) throw FrameError("frame: block length is zero");
  if (symbol_count) *symbol_count = count;
  return f;
}

SeedFrame decode_frame(std::span<const std::uint8_t> bytes) {
  std::uint32_t count = 0;
  SeedFrame f = decode_frame_header(bytes, &count);
  const std::size_t expected = kFrameHeaderSize + std::size_t{4} * count;
  if (bytes.size() != expected) {
    throw FrameError("frame: " + std::to_string(bytes.size()) + " bytes, header announces " +
                     std::to_string(expected));
  }
  ByteReader r(bytes.subspan(kFrameHeaderSize));
  f.payload.resize(count);
  for (auto& v : f.payload) v = r.f32();
  return f;
}

std::vector<std::vector<float>> chunk_seed(std::span<const float> symbols, std::size_t block_length) {
  if (block_length == 0) throw ArgumentError("chunk_seed: block length must be at least 1");
  std::vector<std::vector<float>> out;
  for (std::size_t start = 0; start < symbols.size(); start += block_length) {
    const std::size_t n = std::min(block_length, symbols.size() - start);
    out.emplace_back(symbols.begin() + static_cast<std::ptrdiff_t>(start),
                     symbols.begin() + static_cast<std::ptrdiff_t>(start + n));
  }
  return out;
}

}  // namespace meg::protocol
