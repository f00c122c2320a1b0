#include "meg/seedcodec/codec.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>

#include "meg/errors.hpp"

namespace meg::seedcodec {

namespace {

std::string double_bits(double v) { return std::to_string(std::bit_cast<std::uint64_t>(v)); }
double bits_double(const std::string& s) { return std::bit_cast<double>(static_cast<std::uint64_t>(std::stoull(s))); }

channel::ChannelModel training_channel(const CodecTrainConfig& c) {
  return {c.channel, c.block_length, channel::snr_to_noise_std(c.training_snr_db)};
}

}  // namespace

CodecPair::CodecPair(std::size_t channels, std::size_t height, std::size_t width, double rate,
                     std::size_t bottleneck, std::uint64_t init_seed)
    : latent_channels(channels), latent_height(height), latent_width(width), compression_rate(rate) {
  if (bottleneck == 0) throw ArgumentError("codec: bottleneck width must be positive");
  const std::size_t Z = channels * height * width;
  net = CodecNet<float>(Z, meg::seed_length(Z, rate), bottleneck);
  std::mt19937_64 rng(init_seed);
  net.initialize(rng);
}

nn::NetworkFile CodecPair::to_file() const {
  nn::NetworkFile f;
  f.metadata = {{"model", "codec"},
                {"compression_rate", double_bits(compression_rate)},
                {"training_snr_db", double_bits(training_snr_db)},
                {"latent_shape", std::to_string(latent_channels) + "x" + std::to_string(latent_height) + "x" +
                                     std::to_string(latent_width)},
                {"corpus_seed", std::to_string(corpus_seed)},
                {"f_c", std::to_string(compression_rate)},
                {"tau_db", std::to_string(training_snr_db)}};
  f.layers = {nn::to_record(net.encoder()),   nn::to_record(net.dense(0)),     nn::to_record(net.normalize(0)),
              nn::to_record(net.dense(1)),    nn::to_record(net.normalize(1)), nn::to_record(net.dense(2)),
              nn::to_record(net.layernorm())};
  return f;
}

CodecPair CodecPair::from_file(const nn::NetworkFile& file) {
  if (file.get("model") != "codec") throw FrameError("model file is not a codec");
  if (file.layers.size() != 7) throw FrameError("codec file: expected 7 layers");
  CodecPair p;
  p.compression_rate = bits_double(file.get("compression_rate"));
  p.training_snr_db = bits_double(file.get("training_snr_db"));
  p.corpus_seed = std::stoull(file.get("corpus_seed"));
  const std::string& shape = file.get("latent_shape");
  const auto x1 = shape.find('x');
  const auto x2 = shape.find('x', x1 + 1);
  if (x1 == std::string::npos || x2 == std::string::npos) throw FrameError("codec file: bad latent shape");
  p.latent_channels = std::stoul(shape.substr(0, x1));
  p.latent_height = std::stoul(shape.substr(x1 + 1, x2 - x1 - 1));
  p.latent_width = std::stoul(shape.substr(x2 + 1));
  p.net.encoder() = nn::dense_from_record(file.layers[0]);
  p.net.dense(0) = nn::dense_from_record(file.layers[1]);
  p.net.normalize(0) = nn::layernorm_from_record(file.layers[2]);
  p.net.dense(1) = nn::dense_from_record(file.layers[3]);
  p.net.normalize(1) = nn::layernorm_from_record(file.layers[4]);
  p.net.dense(2) = nn::dense_from_record(file.layers[5]);
  p.net.layernorm() = nn::layernorm_from_record(file.layers[6]);
  const std::size_t Z = p.latent_size();
  const std::size_t L = p.net.seed_length();
  if (p.net.latent_size() != Z || p.net.dense(0).in_features() != L || p.net.dense(0).out_features() != Z ||
      p.net.normalize(0).normalized_size() != Z || p.net.dense(1).in_features() != Z ||
      p.net.normalize(1).normalized_size() != p.net.bottleneck() || p.net.dense(2).in_features() != p.net.bottleneck() ||
      p.net.dense(2).out_features() != Z || p.net.layernorm().normalized_size() != Z ||
      L != meg::seed_length(Z, p.compression_rate)) {
    throw FrameError("codec file: layer sizes disagree with latent shape and compression rate");
  }
  return p;
}

Seed compress(const CodecPair& pair, const genmodel::LatentFeature& z) {
  if (z.values.size() != pair.latent_size() || z.channels != pair.latent_channels ||
      z.height != pair.latent_height || z.width != pair.latent_width) {
    throw DimensionError("compress: latent " + std::to_string(z.channels) + "x" + std::to_string(z.height) + "x" +
                         std::to_string(z.width) + " does not match codec latent " +
                         std::to_string(pair.latent_channels) + "x" + std::to_string(pair.latent_height) + "x" +
                         std::to_string(pair.latent_width));
  }
  nn::Tensor d = pair.net.encode(nn::Tensor({z.values.size()}, z.values));
  double sq = 0;
  for (float v : d.values()) sq += static_cast<double>(v) * v;
  const double s = std::sqrt(sq / static_cast<double>(d.size()));
  if (!(s > 0.0) || !std::isfinite(s)) throw NumericError("compress: encoder output has no usable power");
  Seed seed;
  seed.symbols.resize(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) seed.symbols[i] = static_cast<float>(d[i] / s);
  seed.scale = static_cast<float>(s);
  seed.latent_channels = pair.latent_channels;
  seed.latent_height = pair.latent_height;
  seed.latent_width = pair.latent_width;
  seed.compression_rate = pair.compression_rate;
  return seed;
}

genmodel::LatentFeature decompress(const CodecPair& pair, std::span<const float> received, float scale) {
  if (received.size() != pair.seed_length()) {
    throw FrameError("decompress: received " + std::to_string(received.size()) + " symbols, codec expects " +
                     std::to_string(pair.seed_length()));
  }
  nn::Tensor u({received.size()});
  for (std::size_t i = 0; i < received.size(); ++i) u[i] = scale * received[i];
  genmodel::LatentFeature z{pair.latent_channels, pair.latent_height, pair.latent_width, {}};
  z.values = pair.net.decode(u).values();
  return z;
}

std::vector<nn::LayerSpec> codec_layer_specs(std::size_t latent_size, std::size_t seed_len, std::size_t bottleneck) {
  using nn::Activation;
  using nn::LayerKind;
  return {
      {LayerKind::dense, latent_size, seed_len, Activation::none, "encoder"},
      {LayerKind::dense, seed_len, latent_size, Activation::relu, "decoder.0"},
      {LayerKind::normalize, latent_size, latent_size, Activation::none, "decoder.1"},
      {LayerKind::dense, latent_size, bottleneck, Activation::relu, "decoder.2"},
      {LayerKind::normalize, bottleneck, bottleneck, Activation::none, "decoder.3"},
      {LayerKind::dense, bottleneck, latent_size, Activation::relu, "decoder.4"},
      {LayerKind::layernorm, latent_size, latent_size, Activation::none, "decoder.5"},
  };
}

nn::Tensor sample_equalized_noise(const channel::ChannelModel& model, std::size_t rows, std::size_t length,
                                  std::mt19937_64& rng) {
  nn::Tensor out({rows, length});
  if (model.noise_std == 0.0) return out;
  std::normal_distribution<double> normal;
  const std::size_t blocks = channel::block_count(length, model.block_length);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto trace = channel::sample_fading_trace(model, blocks, rng());
    for (std::size_t i = 0; i < length; ++i) {
      out[r * length + i] = static_cast<float>(model.noise_std * normal(rng) / trace.gains[i / model.block_length]);
    }
  }
  return out;
}

CodecPair train_codec(const std::vector<std::vector<float>>& latents, const genmodel::LatentFeature& shape,
                      double compression_rate, const CodecTrainConfig& config, CodecTrainLog* log) {
  if (latents.empty()) throw ArgumentError("train_codec: empty latent dataset");
  if (config.epochs == 0 || config.batch_size == 0) throw ArgumentError("train_codec: epochs and batch size must be positive");
  if (std::isnan(config.training_snr_db) || config.training_snr_db == -std::numeric_limits<double>::infinity()) {
    throw ArgumentError("train_codec: training SNR must be a number or +inf");
  }
  CodecPair pair(shape.channels, shape.height, shape.width, compression_rate, config.bottleneck, config.seed);
  pair.training_snr_db = config.training_snr_db;
  pair.corpus_seed = config.corpus_seed;
  const std::size_t Z = pair.latent_size();
  for (const auto& z : latents) {
    if (z.size() != Z) {
      throw DimensionError("train_codec: latent of " + std::to_string(z.size()) + " values, expected " +
                           std::to_string(Z));
    }
  }
  const std::size_t L = pair.seed_length();
  const auto model = training_channel(config);
  nn::AdamConfig ac;
  ac.learning_rate = config.learning_rate;
  ac.max_grad_norm = config.max_grad_norm;
  nn::AdamState adam(ac);
  auto params = pair.net.parameters();

  std::mt19937_64 rng(config.seed ^ 0xc0dec0deull);
  std::vector<std::size_t> order(latents.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t B = std::min(config.batch_size, order.size() - start);
      nn::Tensor z({B, Z});
      for (std::size_t b = 0; b < B; ++b) {
        const auto& src = latents[order[start + b]];
        std::copy(src.begin(), src.end(), z.values().begin() + static_cast<std::ptrdiff_t>(b * Z));
      }
      const nn::Tensor noise = sample_equalized_noise(model, B, L, rng);
      pair.net.zero_grad();
      const double loss = codec_batch_loss(pair.net, z, noise, true);
      if (!std::isfinite(loss)) {
        throw TrainingError("train_codec: loss diverged at epoch " + std::to_string(epoch) + " (f_c=" +
                            std::to_string(compression_rate) + ")");
      }
      nn::adam_step(adam, params);
      total += loss * static_cast<double>(B);
    }
    if (log) log->epoch_losses.push_back(total / static_cast<double>(latents.size()));
  }
  return pair;
}

double codec_loss(const CodecPair& pair, const std::vector<std::vector<float>>& latents, double snr_db,
                  channel::ChannelKind kind, std::size_t block_length, std::size_t draws, std::uint64_t seed) {
  if (latents.empty() || draws == 0) throw ArgumentError("codec_loss: nothing to evaluate");
  const channel::ChannelModel model{kind, block_length, channel::snr_to_noise_std(snr_db)};
  CodecNet<float> net = pair.net;
  std::mt19937_64 rng(seed);
  const std::size_t Z = pair.latent_size();
  double total = 0;
  for (std::size_t k = 0; k < draws; ++k) {
    nn::Tensor z({latents.size(), Z});
    for (std::size_t b = 0; b < latents.size(); ++b) {
      std::copy(latents[b].begin(), latents[b].end(), z.values().begin() + static_cast<std::ptrdiff_t>(b * Z));
    }
    total += codec_batch_loss(net, z, sample_equalized_noise(model, latents.size(), pair.seed_length(), rng), false);
  }
  return total / static_cast<double>(draws);
}

}  // namespace meg::seedcodec
