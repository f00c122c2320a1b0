#include "meg/genmodel/autoencoder.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <random>

#include "meg/nn/adam.hpp"

namespace meg::genmodel {

namespace {

void check_image(const ImageGeometry& g, const PixelImage& img) {
  if (img.channels != g.channels || img.height != g.height || img.width != g.width ||
      img.values.size() != g.pixel_count()) {
    throw DimensionError("autoencoder: image " + std::to_string(img.channels) + "x" + std::to_string(img.height) +
                         "x" + std::to_string(img.width) + " does not match model geometry");
  }
}

std::vector<nn::MlpLayerSpec> stack(std::vector<nn::MlpLayerSpec> hidden, std::size_t out) {
  hidden.push_back({out, nn::Activation::none});
  return hidden;
}

std::string geometry_string(const ImageGeometry& g) {
  return std::to_string(g.channels) + "," + std::to_string(g.height) + "," + std::to_string(g.width) + "," +
         std::to_string(g.latent_channels) + "," + std::to_string(g.downsample);
}

ImageGeometry parse_geometry(const std::string& s) {
  ImageGeometry g;
  std::size_t vals[5];
  std::size_t pos = 0;
  for (auto& v : vals) {
    const auto next = s.find(',', pos);
    v = std::stoul(s.substr(pos, next - pos));
    pos = next == std::string::npos ? next : next + 1;
  }
  g.channels = vals[0];
  g.height = vals[1];
  g.width = vals[2];
  g.latent_channels = vals[3];
  g.downsample = vals[4];
  return g;
}

}  // namespace

Autoencoder::Autoencoder(const ImageGeometry& geometry, const AutoencoderConfig& config)
    : geometry_(geometry),
      encoder_(geometry.pixel_count(), stack(config.encoder_hidden, geometry.latent_count()), "ae.enc"),
      decoder_(geometry.latent_count(), stack(config.decoder_hidden, geometry.pixel_count()), "ae.dec") {
  geometry_.validate();
  std::mt19937_64 rng(config.seed);
  encoder_.initialize(rng);
  decoder_.initialize(rng);
}

std::vector<float> Autoencoder::encode_unscaled(const PixelImage& image) const {
  check_image(geometry_, image);
  nn::Tensor z = encoder_.apply(nn::Tensor({image.values.size()}, image.values));
  return z.values();
}

LatentFeature Autoencoder::encode(const PixelImage& image) const {
  LatentFeature z = LatentFeature::zeros(geometry_);
  z.values = encode_unscaled(image);
  for (auto& v : z.values) v *= latent_scale_;
  return z;
}

std::vector<float> Autoencoder::decode_raw(const LatentFeature& latent) const {
  if (latent.values.size() != geometry_.latent_count()) {
    throw DimensionError("autoencoder: latent has " + std::to_string(latent.values.size()) + " values, expected " +
                         std::to_string(geometry_.latent_count()));
  }
  nn::Tensor z({latent.values.size()}, latent.values);
  for (auto& v : z.values()) v /= latent_scale_;
  return decoder_.apply(z).values();
}

PixelImage Autoencoder::decode(const LatentFeature& latent) const {
  PixelImage img = PixelImage::zeros(geometry_);
  img.values = decode_raw(latent);
  for (auto& v : img.values) v = std::clamp(v, 0.0f, 1.0f);
  return img;
}

nn::NetworkFile Autoencoder::to_file() const {
  nn::NetworkFile f;
  f.metadata = {{"model", "autoencoder"},
                {"geometry", geometry_string(geometry_)},
                {"encoder_layers", std::to_string(encoder_.layers().size())},
                {"latent_scale", std::to_string(std::bit_cast<std::uint32_t>(latent_scale_))}};
  nn::append_records(encoder_, f.layers);
  nn::append_records(decoder_, f.layers);
  return f;
}

Autoencoder Autoencoder::from_file(const nn::NetworkFile& file) {
  if (file.get("model") != "autoencoder") throw FrameError("model file is not an autoencoder");
  Autoencoder ae;
  ae.geometry_ = parse_geometry(file.get("geometry"));
  const std::size_t ne = std::stoul(file.get("encoder_layers"));
  if (ne == 0 || ne >= file.layers.size()) throw FrameError("autoencoder file: bad encoder layer count");
  ae.encoder_ = nn::mlp_from_records(std::span(file.layers).first(ne));
  ae.decoder_ = nn::mlp_from_records(std::span(file.layers).subspan(ne));
  ae.latent_scale_ = std::bit_cast<float>(static_cast<std::uint32_t>(std::stoul(file.get("latent_scale"))));
  if (ae.encoder_.in_features() != ae.geometry_.pixel_count() ||
      ae.encoder_.out_features() != ae.geometry_.latent_count() ||
      ae.decoder_.out_features() != ae.geometry_.pixel_count()) {
    throw FrameError("autoencoder file: layer sizes disagree with geometry");
  }
  return ae;
}

Autoencoder train_autoencoder(const std::vector<PixelImage>& dataset, const ImageGeometry& geometry,
                              const AutoencoderConfig& config, TrainingLog* log) {
  if (dataset.empty()) throw ArgumentError("train_autoencoder: empty dataset");
  for (const auto& img : dataset) check_image(geometry, img);
  Autoencoder ae(geometry, config);
  nn::AdamState adam(nn::AdamConfig{config.learning_rate});
  auto params = ae.encoder().parameters();
  auto dec_params = ae.decoder().parameters();
  params.insert(params.end(), dec_params.begin(), dec_params.end());

  const std::size_t P = geometry.pixel_count();
  const std::size_t Z = geometry.latent_count();
  std::mt19937_64 rng(config.seed ^ 0x5eedull);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t B = std::min(config.batch_size, order.size() - start);
      nn::Tensor x({B, P});
      for (std::size_t b = 0; b < B; ++b) {
        const auto& img = dataset[order[start + b]].values;
        std::copy(img.begin(), img.end(), x.values().begin() + static_cast<std::ptrdiff_t>(b * P));
      }
      ae.encoder().zero_grad();
      ae.decoder().zero_grad();
      nn::Tensor z = ae.encoder().forward(x);
      nn::Tensor y = ae.decoder().forward(z);

      double rec = 0, reg = 0;
      nn::Tensor gy({B, P});
      for (std::size_t i = 0; i < y.size(); ++i) {
        const double d = static_cast<double>(y[i]) - x[i];
        rec += d * d;
        gy[i] = static_cast<float>(2.0 * d / static_cast<double>(B * P));
      }
      nn::Tensor gz = ae.decoder().backward(gy);
      for (std::size_t i = 0; i < z.size(); ++i) {
        reg += static_cast<double>(z[i]) * z[i];
        gz[i] += static_cast<float>(2.0 * config.latent_penalty * z[i] / static_cast<double>(B * Z));
      }
      const double loss = rec / static_cast<double>(B * P) + config.latent_penalty * reg / static_cast<double>(B * Z);
      if (!std::isfinite(loss)) throw TrainingError("train_autoencoder: loss diverged at epoch " + std::to_string(epoch));
      (void)ae.encoder().backward(gz);
      nn::adam_step(adam, params);
      epoch_loss += loss * static_cast<double>(B);
      seen += B;
    }
    if (log) log->losses.push_back(epoch_loss / static_cast<double>(seen));
  }

  double sq = 0;
  std::size_t n = 0;
  for (const auto& img : dataset) {
    for (float v : ae.encode_unscaled(img)) {
      sq += static_cast<double>(v) * v;
      ++n;
    }
  }
  const double rms = std::sqrt(sq / static_cast<double>(n));
  ae.set_latent_scale(rms > 0 ? static_cast<float>(1.0 / rms) : 1.0f);
  return ae;
}

double reconstruction_mse(const Autoencoder& ae, const std::vector<PixelImage>& dataset) {
  double s = 0;
  std::size_t n = 0;
  for (const auto& img : dataset) {
    auto rec = ae.decode_raw(ae.encode(img));
    for (std::size_t i = 0; i < rec.size(); ++i) {
      const double d = static_cast<double>(rec[i]) - img.values[i];
      s += d * d;
      ++n;
    }
  }
  return s / static_cast<double>(n);
}

}  // namespace meg::genmodel
