#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "meg/channel/channel.hpp"
#include "meg/genmodel/types.hpp"
#include "meg/geometry.hpp"
#include "meg/nn/adam.hpp"
#include "meg/nn/architecture.hpp"
#include "meg/nn/serialize.hpp"
#include "meg/seedcodec/codec_net.hpp"

namespace meg::seedcodec {

/// Compressed latent, power-normalized to unit mean square.
struct Seed {
  std::vector<float> symbols;
  float scale = 1.0f;  // rms of the encoder output, sent as metadata
  std::size_t latent_channels = 0;
  std::size_t latent_height = 0;
  std::size_t latent_width = 0;
  double compression_rate = 0.0;

  friend bool operator==(const Seed&, const Seed&) = default;
};

struct CodecTrainConfig {
  std::size_t epochs = 40;
  std::size_t batch_size = 16;
  double learning_rate = 1e-3;
  double training_snr_db = 20.0;  // +inf trains without noise
  channel::ChannelKind channel = channel::ChannelKind::rayleigh_block;
  std::size_t block_length = 16;
  std::size_t bottleneck = 96;
  double max_grad_norm = 5.0;
  std::uint64_t seed = 3;
  std::uint64_t corpus_seed = 0;  // recorded in the codec file
};

/// A trained (or initialized) encoder/decoder pair for one (f_c, tau).
class CodecPair {
 public:
  CodecPair() = default;
  CodecPair(std::size_t latent_channels, std::size_t latent_height, std::size_t latent_width,
            double compression_rate, std::size_t bottleneck, std::uint64_t init_seed);

  std::size_t latent_size() const noexcept { return latent_channels * latent_height * latent_width; }
  std::size_t seed_length() const noexcept { return net.seed_length(); }

  nn::NetworkFile to_file() const;
  static CodecPair from_file(const nn::NetworkFile& file);

  CodecNet<float> net;
  std::size_t latent_channels = 0;
  std::size_t latent_height = 0;
  std::size_t latent_width = 0;
  double compression_rate = 0.0;
  double training_snr_db = 0.0;
  std::uint64_t corpus_seed = 0;
};

Seed compress(const CodecPair& pair, const genmodel::LatentFeature& z);

/// Decodes received (equalized) symbols with the scale carried by the seed
/// metadata. Throws FrameError on a wrong symbol count.
genmodel::LatentFeature decompress(const CodecPair& pair, std::span<const float> received, float scale);

/// Layer shapes of a codec with the given sizes, for parameter accounting.
std::vector<nn::LayerSpec> codec_layer_specs(std::size_t latent_size, std::size_t seed_length,
                                             std::size_t bottleneck);

/// Equalized noise n / h for `rows` seeds of `length` symbols at unit power,
/// with fresh fading per row.
nn::Tensor sample_equalized_noise(const channel::ChannelModel& model, std::size_t rows, std::size_t length,
                                  std::mt19937_64& rng);

struct CodecTrainLog {
  std::vector<double> epoch_losses;
};

CodecPair train_codec(const std::vector<std::vector<float>>& latents, const genmodel::LatentFeature& shape,
                      double compression_rate, const CodecTrainConfig& config, CodecTrainLog* log = nullptr);

/// Mean squared latent error of the pair at a test SNR, averaged over
/// `draws` channel realizations per latent.
double codec_loss(const CodecPair& pair, const std::vector<std::vector<float>>& latents, double snr_db,
                  channel::ChannelKind kind, std::size_t block_length, std::size_t draws, std::uint64_t seed);

}  // namespace meg::seedcodec
