#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "meg/nn/layers.hpp"

namespace meg::seedcodec {

inline constexpr double kNormEpsilon = 1e-6;

/// Compression encoder and decoder networks.
///
///   encoder:  dense(|z| -> L)
///   decoder:  h1 = relu(dense(L -> |z|)); normalize
///             relu(dense(|z| -> Nh)); normalize
///             relu(dense(Nh -> |z|)); layernorm
///             output = layernorm + h1
template <typename T>
class CodecNet {
 public:
  CodecNet() = default;
  CodecNet(std::size_t latent_size, std::size_t seed_length, std::size_t bottleneck)
      : encoder_(latent_size, seed_length, nn::Activation::none, "codec.enc"),
        d1_(seed_length, latent_size, nn::Activation::relu, "codec.dec.0"),
        n1_(latent_size, kNormEpsilon, false, "codec.dec.1"),
        d2_(latent_size, bottleneck, nn::Activation::relu, "codec.dec.2"),
        n2_(bottleneck, kNormEpsilon, false, "codec.dec.3"),
        d3_(bottleneck, latent_size, nn::Activation::relu, "codec.dec.4"),
        ln_(latent_size, kNormEpsilon, true, "codec.dec.5") {}

  void initialize(std::mt19937_64& rng) {
    encoder_.initialize(rng);
    d1_.initialize(rng);
    d2_.initialize(rng);
    d3_.initialize(rng);
  }

  std::size_t latent_size() const noexcept { return encoder_.in_features(); }
  std::size_t seed_length() const noexcept { return encoder_.out_features(); }
  std::size_t bottleneck() const noexcept { return d2_.out_features(); }

  nn::DenseLayer<T>& encoder() noexcept { return encoder_; }
  const nn::DenseLayer<T>& encoder() const noexcept { return encoder_; }
  nn::DenseLayer<T>& dense(std::size_t i) noexcept { return i == 0 ? d1_ : (i == 1 ? d2_ : d3_); }
  const nn::DenseLayer<T>& dense(std::size_t i) const noexcept { return i == 0 ? d1_ : (i == 1 ? d2_ : d3_); }
  nn::LayerNormLayer<T>& normalize(std::size_t i) noexcept { return i == 0 ? n1_ : n2_; }
  const nn::LayerNormLayer<T>& normalize(std::size_t i) const noexcept { return i == 0 ? n1_ : n2_; }
  nn::LayerNormLayer<T>& layernorm() noexcept { return ln_; }
  const nn::LayerNormLayer<T>& layernorm() const noexcept { return ln_; }

  nn::BasicTensor<T> encode(const nn::BasicTensor<T>& z) const { return encoder_.apply(z); }

  nn::BasicTensor<T> decode(const nn::BasicTensor<T>& u) const {
    nn::BasicTensor<T> h1 = d1_.apply(u);
    nn::BasicTensor<T> y = ln_.apply(d3_.apply(n2_.apply(d2_.apply(n1_.apply(h1)))));
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += h1[i];
    return y;
  }

  nn::BasicTensor<T> forward_encode(const nn::BasicTensor<T>& z) { return encoder_.forward(z); }

  nn::BasicTensor<T> forward_decode(const nn::BasicTensor<T>& u) {
    nn::BasicTensor<T> h1 = d1_.forward(u);
    nn::BasicTensor<T> y = ln_.forward(d3_.forward(n2_.forward(d2_.forward(n1_.forward(h1)))));
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += h1[i];
    return y;
  }

  /// Accumulates decoder gradients; returns the gradient w.r.t. the decoder input.
  nn::BasicTensor<T> backward_decode(const nn::BasicTensor<T>& upstream) {
    auto gl = ln_.backward(upstream);
    ln_.accumulate(gl);
    auto g3 = d3_.backward(gl.input_grad);
    d3_.accumulate(g3);
    auto gn2 = n2_.backward(g3.input_grad);
    auto g2 = d2_.backward(gn2.input_grad);
    d2_.accumulate(g2);
    auto gn1 = n1_.backward(g2.input_grad);
    nn::BasicTensor<T> gh1 = gn1.input_grad;
    for (std::size_t i = 0; i < gh1.size(); ++i) gh1[i] += upstream[i];
    auto g1 = d1_.backward(gh1);
    d1_.accumulate(g1);
    return g1.input_grad;
  }

  void backward_encode(const nn::BasicTensor<T>& upstream) {
    auto g = encoder_.backward(upstream);
    encoder_.accumulate(g);
  }

  void zero_grad() {
    encoder_.zero_grad();
    d1_.zero_grad();
    d2_.zero_grad();
    d3_.zero_grad();
    ln_.zero_grad();
  }

  std::vector<nn::ParamRef<T>> parameters() {
    std::vector<nn::ParamRef<T>> out;
    encoder_.collect_parameters(out);
    d1_.collect_parameters(out);
    d2_.collect_parameters(out);
    d3_.collect_parameters(out);
    ln_.collect_parameters(out);
    return out;
  }

  std::size_t parameter_count() const {
    return encoder_.parameter_count() + d1_.parameter_count() + d2_.parameter_count() + d3_.parameter_count() +
           ln_.parameter_count();
  }

  template <typename U>
  CodecNet<U> cast() const {
    CodecNet<U> out;
    out.encoder() = encoder_.template cast<U>();
    out.dense(0) = d1_.template cast<U>();
    out.dense(1) = d2_.template cast<U>();
    out.dense(2) = d3_.template cast<U>();
    out.normalize(0) = n1_.template cast<U>();
    out.normalize(1) = n2_.template cast<U>();
    out.layernorm() = ln_.template cast<U>();
    return out;
  }

 private:
  nn::DenseLayer<T> encoder_;
  nn::DenseLayer<T> d1_;
  nn::LayerNormLayer<T> n1_;
  nn::DenseLayer<T> d2_;
  nn::LayerNormLayer<T> n2_;
  nn::DenseLayer<T> d3_;
  nn::LayerNormLayer<T> ln_;
};

/// Loss of one training batch through encoder -> channel -> decoder.
///
/// Each encoded row d is scaled to unit mean-square power (x = d / s with
/// s = rms(d)), passed through a zero-forcing equalized channel that adds
/// `equalized_noise` (n / (h sqrt(p)), one row per example), and rescaled by s
/// before decoding: u = d + s * noise. The loss is mean((z_hat - z)^2).
/// With `backward`, parameter gradients are accumulated into `net`.
template <typename T>
double codec_batch_loss(CodecNet<T>& net, const nn::BasicTensor<T>& z, const nn::BasicTensor<T>& equalized_noise,
                        bool backward) {
  const std::size_t Z = net.latent_size();
  const std::size_t L = net.seed_length();
  const std::size_t rows = nn::batch_rows(z, Z, "codec latent batch");
  if (equalized_noise.size() != rows * L) {
    throw DimensionError("codec channel noise: expected " + std::to_string(rows * L) + " values, got " +
                         std::to_string(equalized_noise.size()));
  }
  nn::BasicTensor<T> d = net.forward_encode(z);
  std::vector<T> scale(rows);
  nn::BasicTensor<T> u = d;
  for (std::size_t r = 0; r < rows; ++r) {
    T sq = 0;
    for (std::size_t i = 0; i < L; ++i) sq += d[r * L + i] * d[r * L + i];
    scale[r] = std::sqrt(sq / static_cast<T>(L));
    for (std::size_t i = 0; i < L; ++i) u[r * L + i] += scale[r] * equalized_noise[r * L + i];
  }
  nn::BasicTensor<T> zhat = net.forward_decode(u);
  const double count = static_cast<double>(rows * Z);
  double loss = 0;
  nn::BasicTensor<T> g(zhat.shape());
  for (std::size_t i = 0; i < zhat.size(); ++i) {
    const double diff = static_cast<double>(zhat[i]) - static_cast<double>(z[i]);
    loss += diff * diff;
    g[i] = static_cast<T>(2.0 * diff / count);
  }
  loss /= count;
  if (!backward) return loss;

  nn::BasicTensor<T> gu = net.backward_decode(g);
  nn::BasicTensor<T> gd = gu;
  for (std::size_t r = 0; r < rows; ++r) {
    if (scale[r] == T{0}) continue;
    T dot = 0;
    for (std::size_t i = 0; i < L; ++i) dot += gu[r * L + i] * equalized_noise[r * L + i];
    const T coef = dot / (static_cast<T>(L) * scale[r]);
    for (std::size_t i = 0; i < L; ++i) gd[r * L + i] += coef * d[r * L + i];
  }
  net.backward_encode(gd);
  return loss;
}

}  // namespace meg::seedcodec
