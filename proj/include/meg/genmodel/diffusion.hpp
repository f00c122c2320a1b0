#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "meg/genmodel/autoencoder.hpp"
#include "meg/genmodel/prompt.hpp"
#include "meg/genmodel/types.hpp"
#include "meg/nn/mlp.hpp"
#include "meg/nn/serialize.hpp"

namespace meg::genmodel {

/// Variance schedule indexed 1..T; alpha_bar(0) == 1.
class NoiseSchedule {
 public:
  NoiseSchedule() = default;

  /// Linear betas from 1e-4*(50/T) to 0.02*(50/T).
  static NoiseSchedule linear(std::size_t steps, double eta = 0.0);
  /// Throws ScheduleError unless 0 < b_1 <= ... <= b_T < 1.
  static NoiseSchedule from_betas(std::vector<double> betas, double eta = 0.0);

  std::size_t steps() const noexcept { return betas_.size(); }
  double beta(std::size_t t) const;
  double alpha_bar(std::size_t t) const;
  double sigma(std::size_t t) const;
  double eta() const noexcept { return eta_; }

  /// Overrides sigma_t (t >= 1). Not validated here; ddim_step rejects
  /// values with sigma_t^2 > 1 - alpha_bar(t-1).
  void set_sigma(std::size_t t, double sigma);

 private:
  std::vector<double> betas_;       // [T]
  std::vector<double> alpha_bars_;  // [T+1]
  std::vector<double> sigmas_;      // [T]
  double eta_ = 0.0;
};

/// The noise estimator eps_theta(z_t, s, t).
class NoisePredictor {
 public:
  virtual ~NoisePredictor() = default;
  virtual std::vector<float> predict(std::span<const float> z_t, std::size_t t,
                                     std::span<const float> pooled_prompt) const = 0;
};

struct DenoiserConfig {
  std::size_t time_embedding = 16;
  std::vector<nn::MlpLayerSpec> hidden{{256, nn::Activation::relu}, {256, nn::Activation::relu}};
  std::size_t steps = 3000;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  std::uint64_t seed = 2;
};

std::vector<float> time_embedding(std::size_t t, std::size_t size);

/// Dense network over [z_t | time embedding | pooled prompt embedding].
class Denoiser final : public NoisePredictor {
 public:
  Denoiser() = default;
  Denoiser(std::size_t latent_size, std::size_t prompt_size, const DenoiserConfig& config);

  std::size_t latent_size() const noexcept { return latent_size_; }
  std::size_t prompt_size() const noexcept { return prompt_size_; }
  std::size_t time_size() const noexcept { return time_size_; }
  nn::Mlp<float>& network() noexcept { return net_; }
  const nn::Mlp<float>& network() const noexcept { return net_; }

  std::vector<float> predict(std::span<const float> z_t, std::size_t t,
                             std::span<const float> pooled_prompt) const override;

  /// Builds the network input row.
  void pack_input(std::span<const float> z_t, std::size_t t, std::span<const float> pooled_prompt,
                  std::span<float> row) const;

  nn::NetworkFile to_file() const;
  static Denoiser from_file(const nn::NetworkFile& file);

 private:
  std::size_t latent_size_ = 0;
  std::size_t prompt_size_ = 0;
  std::size_t time_size_ = 0;
  nn::Mlp<float> net_;
};

/// z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) noise.
std::vector<float> diffuse_forward(std::span<const float> z0, std::size_t t, std::span<const float> noise,
                                   const NoiseSchedule& schedule);

/// (z_t - sqrt(1 - abar_t) eps) / sqrt(abar_t) for a given noise estimate.
std::vector<float> predict_z0_from_noise(std::span<const float> z_t, std::size_t t, std::span<const float> eps,
                                         const NoiseSchedule& schedule);

std::vector<float> predict_z0(const NoisePredictor& denoiser, std::span<const float> z_t, std::size_t t,
                              const PromptEmbedding& embedding, const NoiseSchedule& schedule);

/// One reverse step z_t -> z_{t-1}. `step_noise` may be empty when sigma_t == 0.
std::vector<float> ddim_step(const NoisePredictor& denoiser, std::span<const float> z_t, std::size_t t,
                             const PromptEmbedding& embedding, const NoiseSchedule& schedule,
                             std::span<const float> step_noise = {});

/// Runs ddim_step from T down to 1 starting at `initial_noise`. When some
/// sigma_t is non-zero, step noise is drawn from `step_seed`.
std::vector<float> generate_latent(const NoisePredictor& denoiser, const PromptEmbedding& embedding,
                                   std::span<const float> initial_noise, const NoiseSchedule& schedule,
                                   std::uint64_t step_seed = 0);

LatentFeature generate_latent(const NoisePredictor& denoiser, const std::string& prompt,
                              std::span<const float> initial_noise, const NoiseSchedule& schedule,
                              const ImageGeometry& geometry, const EmbedderConfig& embedder = {});

/// Gaussian initial noise for a generation request.
std::vector<float> initial_noise(std::size_t size, std::uint64_t seed);

struct DiffusionExample {
  std::vector<float> latent;         // z0
  std::vector<float> pooled_prompt;  // mean-pooled embedding
};

Denoiser train_denoiser(const std::vector<DiffusionExample>& examples, const NoiseSchedule& schedule,
                        const DenoiserConfig& config, TrainingLog* log = nullptr);

/// Encodes every corpus image and pairs it with its prompt embedding.
std::vector<DiffusionExample> diffusion_examples(const Autoencoder& ae,
                                                 const std::vector<std::string>& prompts,
                                                 const std::vector<PixelImage>& images,
                                                 const EmbedderConfig& embedder = {});

/// Monte-Carlo estimate of mean ||eps - eps_theta||^2 per element with
/// t uniform in [1,T]; `draws` noise draws per example.
double denoiser_loss(const NoisePredictor& denoiser, const std::vector<DiffusionExample>& examples,
                     const NoiseSchedule& schedule, std::size_t draws, std::uint64_t seed);

/// eps_theta == 0.
class ZeroPredictor final : public NoisePredictor {
 public:
  std::vector<float> predict(std::span<const float> z_t, std::size_t, std::span<const float>) const override {
    return std::vector<float>(z_t.size(), 0.0f);
  }
};

}  // namespace meg::genmodel
