#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "meg/seedcodec/codec.hpp"
#include "support/gradcheck.hpp"

using namespace meg;
using namespace meg::seedcodec;

namespace {

genmodel::LatentFeature shape_2x8x8() { return {2, 8, 8, std::vector<float>(128, 0.0f)}; }

// Latents on a random rank-`rank` subspace with unit per-element variance.
std::vector<std::vector<float>> low_rank_latents(std::size_t n, std::size_t rank, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  std::vector<std::vector<double>> basis(rank, std::vector<double>(128));
  for (auto& b : basis)
    for (auto& v : b) v = nd(rng) / std::sqrt(double(rank));
  std::vector<std::vector<float>> out(n, std::vector<float>(128));
  for (auto& z : out) {
    for (std::size_t r = 0; r < rank; ++r) {
      const double c = nd(rng);
      for (std::size_t i = 0; i < 128; ++i) z[i] += static_cast<float>(c * basis[r][i]);
    }
  }
  return out;
}

double variance(const std::vector<std::vector<float>>& zs) {
  double s = 0, sq = 0, n = 0;
  for (const auto& z : zs)
    for (float v : z) {
      s += v;
      sq += double(v) * v;
      ++n;
    }
  return sq / n - (s / n) * (s / n);
}

genmodel::LatentFeature as_latent(const std::vector<float>& v) { return {2, 8, 8, v}; }

}  // namespace

TEST_CASE("seed length follows round-to-nearest f_c times latent size") {
  CHECK(seed_length(16384, 0.5) == 8192);
  CHECK(seed_length(16384, 0.1) == 1638);
  CHECK(seed_length(16384, 0.3) == 4915);
  CHECK(seed_length(16384, 0.7) == 11469);
  CHECK(seed_length(16384, 0.9) == 14746);
  CHECK(seed_length(128, 0.5) == 64);
  CHECK_THROWS_AS(seed_length(128, 0.0), ArgumentError);
  CHECK_THROWS_AS(seed_length(128, 1.0), ArgumentError);
  CHECK_THROWS_AS(seed_length(128, -0.2), ArgumentError);
  CHECK_THROWS_AS(seed_length(128, 0.001), ArgumentError);
}

TEST_CASE("seed length stays inside the pixel-derived bound") {
  for (double fc : {0.1, 0.3, 0.5, 0.7, 0.9}) {
    ImageGeometry paper{4, 512, 512, 4, 8};
    const std::size_t L = seed_length(paper.latent_count(), fc);
    CHECK(L > 0);
    CHECK(L * paper.downsample * paper.downsample < paper.pixel_count());
    ImageGeometry desk;
    const std::size_t l = seed_length(desk.latent_count(), fc);
    CHECK(l > 0);
    CHECK(l < desk.latent_count());
  }
}

TEST_CASE("appendix architecture parameter counts") {
  const auto specs = codec_layer_specs(16384, 8192, 9000);
  REQUIRE(specs.size() == 7);
  CHECK(nn::parameter_count(specs[0]) == 134225920);
  CHECK(nn::parameter_count(specs[1]) == 134234112);
  CHECK(nn::parameter_count(specs[2]) == 0);
  CHECK(nn::parameter_count(specs[3]) == 147465000);
  CHECK(nn::parameter_count(specs[4]) == 0);
  CHECK(nn::parameter_count(specs[5]) == 147472384);
  CHECK(nn::parameter_count(specs[6]) == 32768);
  CHECK(nn::parameter_count(specs) == 563430184);

  CodecPair small(2, 8, 8, 0.5, 96, 1);
  CHECK(small.net.parameter_count() == nn::parameter_count(codec_layer_specs(128, 64, 96)));
}

TEST_CASE("compress emits a unit-power seed of the right length") {
  CodecPair pair(2, 8, 8, 0.3, 96, 4);
  auto zs = low_rank_latents(5, 8, 1);
  for (const auto& v : zs) {
    Seed s = compress(pair, as_latent(v));
    CHECK(s.symbols.size() == seed_length(128, 0.3));
    double sq = 0;
    for (float x : s.symbols) sq += double(x) * x;
    CHECK(std::abs(sq / s.symbols.size() - 1.0) < 1e-5);
    CHECK(compress(pair, as_latent(v)) == s);
    CHECK(s.latent_channels == 2);
    CHECK(s.compression_rate == 0.3);
    auto back = decompress(pair, s.symbols, s.scale);
    CHECK(back.values.size() == 128);
    CHECK(back.channels == 2);
    CHECK(back.width == 8);
  }
  genmodel::LatentFeature wrong{2, 4, 16, std::vector<float>(128)};
  CHECK_THROWS_AS(compress(pair, wrong), DimensionError);
  CHECK_THROWS_AS(decompress(pair, std::vector<float>(10), 1.0f), FrameError);
  auto zero = decompress(pair, std::vector<float>(pair.seed_length(), 0.0f), 1.0f);
  for (float v : zero.values) CHECK(std::isfinite(v));
}

TEST_CASE("codec file round trip") {
  CodecTrainConfig cfg;
  cfg.epochs = 1;
  cfg.training_snr_db = 7.5;
  cfg.corpus_seed = 42;
  auto zs = low_rank_latents(20, 8, 2);
  CodecPair pair = train_codec(zs, shape_2x8x8(), 0.7, cfg);
  CodecPair back = CodecPair::from_file(nn::decode_network(nn::encode_network(pair.to_file())));
  CHECK(back.compression_rate == 0.7);
  CHECK(back.training_snr_db == 7.5);
  CHECK(back.corpus_seed == 42);
  CHECK(back.latent_height == 8);
  Seed a = compress(pair, as_latent(zs[0]));
  CHECK(compress(back, as_latent(zs[0])) == a);
  CHECK(decompress(back, a.symbols, a.scale) == decompress(pair, a.symbols, a.scale));
}

TEST_CASE("encoder-channel-decoder composition gradients match finite differences") {
  CodecNet<double> net(12, 6, 5);
  std::mt19937_64 rng(77);
  net.initialize(rng);
  std::uniform_real_distribution<double> u(-1, 1);
  for (auto& p : net.parameters())
    if (p.name.find("codec.dec.5") != std::string::npos)
      for (auto& v : p.value) v = 1.0 + 0.3 * u(rng);
  nn::Tensor64 z({3, 12});
  nn::Tensor64 noise({3, 6});
  for (auto& v : z.values()) v = u(rng);
  for (auto& v : noise.values()) v = 0.4 * u(rng);

  net.zero_grad();
  (void)codec_batch_loss(net, z, noise, true);
  std::vector<double*> coords;
  std::vector<double> analytic;
  for (auto& p : net.parameters()) {
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      coords.push_back(&p.value[i]);
      analytic.push_back(p.grad[i]);
    }
  }
  auto r = testing::check_gradient(coords, analytic, [&] { return codec_batch_loss(net, z, noise, false); });
  CHECK(r.max_rel_error < 1e-3);
}

TEST_CASE("codec training lowers the loss and beats an untrained pair") {
  auto zs = low_rank_latents(100, 12, 3);
  CodecTrainConfig cfg;
  cfg.epochs = 30;
  CodecTrainLog log;
  CodecPair trained = train_codec(zs, shape_2x8x8(), 0.5, cfg, &log);
  CHECK(log.epoch_losses.back() < log.epoch_losses.front());

  CodecPair fresh(2, 8, 8, 0.5, cfg.bottleneck, 99);
  auto err = [&](const CodecPair& p) {
    double s = 0;
    for (const auto& v : zs) {
      Seed seed = compress(p, as_latent(v));
      auto zh = decompress(p, seed.symbols, seed.scale);
      for (std::size_t i = 0; i < v.size(); ++i) s += std::pow(double(zh.values[i]) - v[i], 2);
    }
    return s / double(zs.size() * 128);
  };
  CHECK(err(trained) < err(fresh));
}

TEST_CASE("noiseless training reduces to a latent autoencoder") {
  auto zs = low_rank_latents(100, 12, 5);
  CodecTrainConfig cfg;
  cfg.training_snr_db = std::numeric_limits<double>::infinity();
  cfg.epochs = 150;
  CodecPair pair = train_codec(zs, shape_2x8x8(), 0.5, cfg);
  const double loss = codec_loss(pair, zs, cfg.training_snr_db, cfg.channel, cfg.block_length, 1, 1);
  CHECK(loss < 0.1 * variance(zs));
}

TEST_CASE("training at the test SNR beats training far above it") {
  auto zs = low_rank_latents(200, 12, 6);
  CodecTrainConfig cfg;
  cfg.epochs = 40;
  cfg.training_snr_db = 0.0;
  CodecPair low = train_codec(zs, shape_2x8x8(), 0.5, cfg);
  cfg.training_snr_db = 40.0;
  CodecPair high = train_codec(zs, shape_2x8x8(), 0.5, cfg);
  auto test = low_rank_latents(50, 12, 6);
  const double l_low = codec_loss(low, test, 0.0, cfg.channel, cfg.block_length, 20, 9);
  const double l_high = codec_loss(high, test, 0.0, cfg.channel, cfg.block_length, 20, 9);
  CHECK(l_low < l_high);
}

TEST_CASE("training rejects bad inputs") {
  CodecTrainConfig cfg;
  CHECK_THROWS_AS(train_codec({}, shape_2x8x8(), 0.5, cfg), ArgumentError);
  CHECK_THROWS_AS(train_codec({std::vector<float>(10)}, shape_2x8x8(), 0.5, cfg), DimensionError);
  cfg.training_snr_db = std::nan("");
  CHECK_THROWS_AS(train_codec(low_rank_latents(4, 2, 1), shape_2x8x8(), 0.5, cfg), ArgumentError);
  cfg.training_snr_db = 20;
  cfg.epochs = 0;
  CHECK_THROWS_AS(train_codec(low_rank_latents(4, 2, 1), shape_2x8x8(), 0.5, cfg), ArgumentError);
}
