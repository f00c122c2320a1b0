#pragma once

// Small deployment with freshly initialized (untrained) models for protocol
// and power-allocation tests.

#include <memory>

#include "meg/protocol/protocol.hpp"

namespace meg::testing {

inline protocol::Deployment untrained_deployment(std::initializer_list<double> rates = {0.25, 0.5}) {
  protocol::Deployment d;
  d.geometry = ImageGeometry{};
  d.schedule = genmodel::NoiseSchedule::linear(4);
  d.autoencoder = std::make_shared<genmodel::Autoencoder>(d.geometry, genmodel::AutoencoderConfig{});
  genmodel::DenoiserConfig dc;
  dc.hidden = {{32, nn::Activation::relu}};
  d.denoiser = std::make_shared<genmodel::Denoiser>(d.geometry.latent_count(), d.embedder.embedding_size, dc);
  std::uint64_t seed = 10;
  for (double r : rates) {
    d.codecs.push_back(std::make_shared<seedcodec::CodecPair>(
        d.geometry.latent_channels, d.geometry.latent_height(), d.geometry.latent_width(), r, 24, seed++));
  }
  d.extractor = std::make_shared<metrics::FeatureExtractor>(d.geometry.pixel_count());
  d.validate();
  return d;
}

}  // namespace meg::testing
