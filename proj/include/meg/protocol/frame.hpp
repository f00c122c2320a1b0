#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace meg::protocol {

inline constexpr std::uint16_t kFrameVersion = 1;
inline constexpr std::size_t kFrameHeaderSize = 32;

/// Seed wire format, all fields little-endian:
///
///   offset  size  field
///        0     4  magic "MEGS"
///        4     2  format version (1)
///        6     2  f_c as unsigned Q0.16 (round(f_c * 65536))
///        8     2  latent channels
///       10     2  latent height
///       12     2  latent width
///       14     2  reserved, zero
///       16     4  normalization scale (f32)
///       20     4  block length (u32)
///       24     4  symbol count (u32)
///       28     4  CRC-32 of bytes 0..27
///       32   4*n  payload symbols (f32)
///
/// The header travels noise-free; only the payload crosses the channel, so
/// the checksum covers the header alone.
struct SeedFrame {
  std::uint16_t version = kFrameVersion;
  std::uint16_t compression_q16 = 0;
  std::uint16_t latent_channels = 0;
  std::uint16_t latent_height = 0;
  std::uint16_t latent_width = 0;
  float scale = 1.0f;
  std::uint32_t block_length = 1;
  std::vector<float> payload;

  double compression_rate() const noexcept { return compression_q16 / 65536.0; }
  std::size_t latent_size() const noexcept {
    return std::size_t{latent_channels} * latent_height * latent_width;
  }

  friend bool operator==(const SeedFrame&, const SeedFrame&) = default;
};

std::uint16_t compression_to_q16(double compression_rate);

std::vector<std::uint8_t> encode_frame(const SeedFrame& frame);
/// Throws FrameError on bad magic, version, checksum or length.
SeedFrame decode_frame(std::span<const std::uint8_t> bytes);

/// Header only (payload left empty, symbol count returned separately).
SeedFrame decode_frame_header(std::span<const std::uint8_t> bytes, std::uint32_t* symbol_count);

/// Contiguous blocks of `block_length` symbols; the last may be shorter.
std::vector<std::vector<float>> chunk_seed(std::span<const float> symbols, std::size_t block_length);

}  // namespace meg::protocol
