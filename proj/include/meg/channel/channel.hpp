#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace meg::channel {

enum class ChannelKind { awgn, rayleigh_block };

std::string to_string(ChannelKind kind);
ChannelKind parse_channel_kind(const std::string& s);

struct ChannelModel {
  ChannelKind kind = ChannelKind::rayleigh_block;
  std::size_t block_length = 16;  // symbols per coherence block
  double noise_std = 0.0;
};

/// Per-block real channel magnitudes h_t. Gains are strictly positive.
struct FadingTrace {
  std::vector<double> gains;
  std::size_t block_length = 1;
  std::uint64_t seed = 0;

  std::size_t num_blocks() const noexcept { return gains.size(); }
  friend bool operator==(const FadingTrace&, const FadingTrace&) = default;
};

/// sigma_n = sqrt(signal_power / 10^(snr_db/10)); +inf dB gives 0.
double snr_to_noise_std(double snr_db, double signal_power = 1.0);

/// Number of coherence blocks needed for `symbols` symbols.
std::size_t block_count(std::size_t symbols, std::size_t block_length);

/// AWGN: all gains 1. Rayleigh: h = |g|, g complex Gaussian with E[h^2] = 1.
FadingTrace sample_fading_trace(const ChannelModel& model, std::size_t num_blocks, std::uint64_t seed);

/// y = h * sqrt(p) * x + n, n ~ N(0, sigma^2) i.i.d. per symbol.
std::vector<float> transmit(std::span<const float> x, double gain, double power, double noise_std,
                            std::mt19937_64& rng);

/// Zero-forcing: x_hat = y / (h * sqrt(p)). Throws ErasureError when h*sqrt(p) == 0.
std::vector<float> equalize(std::span<const float> y, double gain, double power);

/// Trace-set CSV: "# meg-fading-traces v1 block_length=N" then "trace,seed,block,gain" rows.
void write_traces_csv(std::ostream& out, std::span<const FadingTrace> traces);
std::vector<FadingTrace> read_traces_csv(std::istream& in);
void save_traces_csv(const std::string& path, std::span<const FadingTrace> traces);
std::vector<FadingTrace> load_traces_csv(const std::string& path);

}  // namespace meg::channel
