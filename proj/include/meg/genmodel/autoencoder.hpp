#pragma once

#include <cstdint>
#include <vector>

#include "meg/genmodel/types.hpp"
#include "meg/nn/mlp.hpp"
#include "meg/nn/serialize.hpp"

namespace meg::genmodel {

struct AutoencoderConfig {
  std::vector<nn::MlpLayerSpec> encoder_hidden;                            // before the latent projection
  std::vector<nn::MlpLayerSpec> decoder_hidden{{256, nn::Activation::tanh}};  // before the pixel projection
  double latent_penalty = 1e-3;  // lambda on mean(z^2)
  std::size_t epochs = 60;
  std::size_t batch_size = 16;
  double learning_rate = 1e-3;
  std::uint64_t seed = 1;
};

/// Pixel <-> latent map. Encoder outputs are multiplied by `latent_scale`
/// (fixed after training to give unit-RMS latents); the decoder divides it out.
class Autoencoder {
 public:
  Autoencoder() = default;
  Autoencoder(const ImageGeometry& geometry, const AutoencoderConfig& config);

  const ImageGeometry& geometry() const noexcept { return geometry_; }
  float latent_scale() const noexcept { return latent_scale_; }
  void set_latent_scale(float s) { latent_scale_ = s; }

  nn::Mlp<float>& encoder() noexcept { return encoder_; }
  const nn::Mlp<float>& encoder() const noexcept { return encoder_; }
  nn::Mlp<float>& decoder() noexcept { return decoder_; }
  const nn::Mlp<float>& decoder() const noexcept { return decoder_; }

  LatentFeature encode(const PixelImage& image) const;
  /// Clamped to [0,1].
  PixelImage decode(const LatentFeature& latent) const;
  /// Unclamped decoder output.
  std::vector<float> decode_raw(const LatentFeature& latent) const;
  /// Encoder output before latent scaling.
  std::vector<float> encode_unscaled(const PixelImage& image) const;

  nn::NetworkFile to_file() const;
  static Autoencoder from_file(const nn::NetworkFile& file);

 private:
  ImageGeometry geometry_;
  nn::Mlp<float> encoder_;
  nn::Mlp<float> decoder_;
  float latent_scale_ = 1.0f;
};

struct TrainingLog {
  std::vector<double> losses;  // one entry per epoch (or step, per trainer)
};

Autoencoder train_autoencoder(const std::vector<PixelImage>& dataset, const ImageGeometry& geometry,
                              const AutoencoderConfig& config, TrainingLog* log = nullptr);

double reconstruction_mse(const Autoencoder& ae, const std::vector<PixelImage>& dataset);

}  // namespace meg::genmodel
