#include "meg/genmodel/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "meg/nn/adam.hpp"

namespace meg::genmodel {

namespace {

void require_t(const NoiseSchedule& s, std::size_t t, std::size_t min_t, const char* who) {
  if (t < min_t || t > s.steps()) {
    throw ArgumentError(std::string(who) + ": step " + std::to_string(t) + " outside [" + std::to_string(min_t) +
                        ", " + std::to_string(s.steps()) + "]");
  }
}

void require_same(std::size_t a, std::size_t b, const char* who) {
  if (a != b) {
    throw DimensionError(std::string(who) + ": sizes " + std::to_string(a) + " and " + std::to_string(b) +
                         " differ");
  }
}

}  // namespace

NoiseSchedule NoiseSchedule::linear(std::size_t steps, double eta) {
  if (steps == 0) throw ScheduleError("noise schedule: step count must be positive");
  const double scale = 50.0 / static_cast<double>(steps);
  const double lo = 1e-4 * scale;
  const double hi = 0.02 * scale;
  std::vector<double> betas(steps);
  for (std::size_t i = 0; i < steps; ++i) {
    betas[i] = steps == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(steps - 1);
  }
  return from_betas(std::move(betas), eta);
}

NoiseSchedule NoiseSchedule::from_betas(std::vector<double> betas, double eta) {
  if (betas.empty()) throw ScheduleError("noise schedule: no steps");
  if (!(eta >= 0.0 && eta <= 1.0)) throw ScheduleError("noise schedule: eta must lie in [0,1]");
  for (std::size_t i = 0; i < betas.size(); ++i) {
    if (!(betas[i] > 0.0 && betas[i] < 1.0)) {
      throw ScheduleError("noise schedule: beta_" + std::to_string(i + 1) + " = " + std::to_string(betas[i]) +
                          " is outside (0,1)");
    }
    if (i > 0 && betas[i] < betas[i - 1]) {
      throw ScheduleError("noise schedule: betas must be non-decreasing (beta_" + std::to_string(i + 1) + ")");
    }
  }
  NoiseSchedule s;
  s.eta_ = eta;
  s.betas_ = std::move(betas);
  s.alpha_bars_.assign(s.betas_.size() + 1, 1.0);
  for (std::size_t t = 1; t <= s.betas_.size(); ++t) s.alpha_bars_[t] = s.alpha_bars_[t - 1] * (1.0 - s.betas_[t - 1]);
  s.sigmas_.assign(s.betas_.size(), 0.0);
  for (std::size_t t = 1; t <= s.betas_.size(); ++t) {
    const double a = s.alpha_bars_[t];
    const double ap = s.alpha_bars_[t - 1];
    s.sigmas_[t - 1] = eta * std::sqrt((1.0 - ap) / (1.0 - a)) * std::sqrt(1.0 - a / ap);
  }
  return s;
}

double NoiseSchedule::beta(std::size_t t) const {
  require_t(*this, t, 1, "beta");
  return betas_[t - 1];
}

double NoiseSchedule::alpha_bar(std::size_t t) const {
  require_t(*this, t, 0, "alpha_bar");
  return alpha_bars_[t];
}

double NoiseSchedule::sigma(std::size_t t) const {
  require_t(*this, t, 1, "sigma");
  return sigmas_[t - 1];
}

void NoiseSchedule::set_sigma(std::size_t t, double sigma) {
  require_t(*this, t, 1, "set_sigma");
  if (!(sigma >= 0.0)) throw ScheduleError("noise schedule: sigma must be non-negative");
  sigmas_[t - 1] = sigma;
}

std::vector<float> time_embedding(std::size_t t, std::size_t size) {
  std::vector<float> out(size, 0.0f);
  const std::size_t half = size / 2;
  for (std::size_t i = 0; i < half; ++i) {
    const double freq = std::pow(100.0, -static_cast<double>(i) / static_cast<double>(std::max<std::size_t>(half, 1)));
    out[2 * i] = static_cast<float>(std::sin(static_cast<double>(t) * freq));
    out[2 * i + 1] = static_cast<float>(std::cos(static_cast<double>(t) * freq));
  }
  return out;
}

Denoiser::Denoiser(std::size_t latent_size, std::size_t prompt_size, const DenoiserConfig& config)
    : latent_size_(latent_size), prompt_size_(prompt_size), time_size_(config.time_embedding) {
  auto specs = config.hidden;
  specs.push_back({latent_size, nn::Activation::none});
  net_ = nn::Mlp<float>(latent_size + time_size_ + prompt_size, specs, "denoiser");
  std::mt19937_64 rng(config.seed);
  net_.initialize(rng);
}

void Denoiser::pack_input(std::span<const float> z_t, std::size_t t, std::span<const float> pooled_prompt,
                          std::span<float> row) const {
  require_same(z_t.size(), latent_size_, "denoiser latent");
  require_same(pooled_prompt.size(), prompt_size_, "denoiser prompt");
  require_same(row.size(), latent_size_ + time_size_ + prompt_size_, "denoiser input");
  auto it = std::copy(z_t.begin(), z_t.end(), row.begin());
  const auto te = time_embedding(t, time_size_);
  it = std::copy(te.begin(), te.end(), it);
  std::copy(pooled_prompt.begin(), pooled_prompt.end(), it);
}

std::vector<float> Denoiser::predict(std::span<const float> z_t, std::size_t t,
                                     std::span<const float> pooled_prompt) const {
  nn::Tensor x({net_.in_features()});
  pack_input(z_t, t, pooled_prompt, x.data());
  return net_.apply(x).values();
}

nn::NetworkFile Denoiser::to_file() const {
  nn::NetworkFile f;
  f.metadata = {{"model", "denoiser"},
                {"latent_size", std::to_string(latent_size_)},
                {"prompt_size", std::to_string(prompt_size_)},
                {"time_size", std::to_string(time_size_)}};
  nn::append_records(net_, f.layers);
  return f;
}

Denoiser Denoiser::from_file(const nn::NetworkFile& file) {
  if (file.get("model") != "denoiser") throw FrameError("model file is not a denoiser");
  Denoiser d;
  d.latent_size_ = std::stoul(file.get("latent_size"));
  d.prompt_size_ = std::stoul(file.get("prompt_size"));
  d.time_size_ = std::stoul(file.get("time_size"));
  d.net_ = nn::mlp_from_records(file.layers);
  if (d.net_.in_features() != d.latent_size_ + d.time_size_ + d.prompt_size_ ||
      d.net_.out_features() != d.latent_size_) {
    throw FrameError("denoiser file: layer sizes disagree with metadata");
  }
  return d;
}

std::vector<float> diffuse_forward(std::span<const float> z0, std::size_t t, std::span<const float> noise,
                                   const NoiseSchedule& schedule) {
  require_t(schedule, t, 0, "diffuse_forward");
  require_same(z0.size(), noise.size(), "diffuse_forward");
  const double a = schedule.alpha_bar(t);
  const double sa = std::sqrt(a);
  const double sn = std::sqrt(1.0 - a);
  std::vector<float> out(z0.size());
  for (std::size_t i = 0; i < z0.size(); ++i) out[i] = static_cast<float>(sa * z0[i] + sn * noise[i]);
  return out;
}

std::vector<float> predict_z0_from_noise(std::span<const float> z_t, std::size_t t, std::span<const float> eps,
                                         const NoiseSchedule& schedule) {
  require_t(schedule, t, 1, "predict_z0");
  require_same(z_t.size(), eps.size(), "predict_z0");
  const double a = schedule.alpha_bar(t);
  const double sa = std::sqrt(a);
  const double sn = std::sqrt(1.0 - a);
  std::vector<float> out(z_t.size());
  for (std::size_t i = 0; i < z_t.size(); ++i) out[i] = static_cast<float>((z_t[i] - sn * eps[i]) / sa);
  return out;
}

std::vector<float> predict_z0(const NoisePredictor& denoiser, std::span<const float> z_t, std::size_t t,
                              const PromptEmbedding& embedding, const NoiseSchedule& schedule) {
  require_t(schedule, t, 1, "predict_z0");
  const auto pooled = embedding.pooled();
  const auto eps = denoiser.predict(z_t, t, pooled);
  return predict_z0_from_noise(z_t, t, eps, schedule);
}

namespace {

std::vector<float> ddim_update(std::span<const float> z_t, std::size_t t, std::span<const float> eps,
                               const NoiseSchedule& schedule, std::span<const float> step_noise) {
  const double a = schedule.alpha_bar(t);
  const double ap = schedule.alpha_bar(t - 1);
  const double sigma = schedule.sigma(t);
  const double radicand = 1.0 - ap - sigma * sigma;
  if (radicand < 0.0) {
    throw ScheduleError("ddim_step: sigma_" + std::to_string(t) + "^2 = " + std::to_string(sigma * sigma) +
                        " exceeds 1 - alpha_bar_" + std::to_string(t - 1) + " = " + std::to_string(1.0 - ap));
  }
  require_same(z_t.size(), eps.size(), "ddim_step");
  if (sigma != 0.0) require_same(z_t.size(), step_noise.size(), "ddim_step noise");
  const double sa = std::sqrt(a);
  const double sn = std::sqrt(1.0 - a);
  const double sap = std::sqrt(ap);
  const double dir = std::sqrt(radicand);
  std::vector<float> out(z_t.size());
  for (std::size_t i = 0; i < z_t.size(); ++i) {
    const double z0 = (z_t[i] - sn * eps[i]) / sa;
    double v = sap * z0 + dir * eps[i];
    if (sigma != 0.0) v += sigma * step_noise[i];
    out[i] = static_cast<float>(v);
  }
  return out;
}

}  // namespace

std::vector<float> ddim_step(const NoisePredictor& denoiser, std::span<const float> z_t, std::size_t t,
                             const PromptEmbedding& embedding, const NoiseSchedule& schedule,
                             std::span<const float> step_noise) {
  require_t(schedule, t, 1, "ddim_step");
  const auto pooled = embedding.pooled();
  const auto eps = denoiser.predict(z_t, t, pooled);
  return ddim_update(z_t, t, eps, schedule, step_noise);
}

std::vector<float> generate_latent(const NoisePredictor& denoiser, const PromptEmbedding& embedding,
                                   std::span<const float> initial, const NoiseSchedule& schedule,
                                   std::uint64_t step_seed) {
  const auto pooled = embedding.pooled();
  std::vector<float> z(initial.begin(), initial.end());
  std::mt19937_64 rng(step_seed);
  std::normal_distribution<double> normal;
  std::vector<float> noise;
  for (std::size_t t = schedule.steps(); t >= 1; --t) {
    const auto eps = denoiser.predict(z, t, pooled);
    noise.clear();
    if (schedule.sigma(t) != 0.0) {
      noise.resize(z.size());
      for (auto& v : noise) v = static_cast<float>(normal(rng));
    }
    z = ddim_update(z, t, eps, schedule, noise);
  }
  return z;
}

LatentFeature generate_latent(const NoisePredictor& denoiser, const std::string& prompt,
                              std::span<const float> initial, const NoiseSchedule& schedule,
                              const ImageGeometry& geometry, const EmbedderConfig& embedder) {
  require_same(initial.size(), geometry.latent_count(), "generate_latent");
  LatentFeature z = LatentFeature::zeros(geometry);
  z.values = generate_latent(denoiser, embed_prompt(prompt, embedder), initial, schedule);
  return z;
}

std::vector<float> initial_noise(std::size_t size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<float> out(size);
  for (auto& v : out) v = static_cast<float>(normal(rng));
  return out;
}

std::vector<DiffusionExample> diffusion_examples(const Autoencoder& ae, const std::vector<std::string>& prompts,
                                                 const std::vector<PixelImage>& images,
                                                 const EmbedderConfig& embedder) {
  require_same(prompts.size(), images.size(), "diffusion_examples");
  std::vector<DiffusionExample> out;
  out.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    out.push_back({ae.encode(images[i]).values, embed_prompt(prompts[i], embedder).pooled()});
  }
  return out;
}

Denoiser train_denoiser(const std::vector<DiffusionExample>& examples, const NoiseSchedule& schedule,
                        const DenoiserConfig& config, TrainingLog* log) {
  if (examples.empty()) throw ArgumentError("train_denoiser: no examples");
  const std::size_t Z = examples.front().latent.size();
  const std::size_t E = examples.front().pooled_prompt.size();
  for (const auto& ex : examples) {
    require_same(ex.latent.size(), Z, "train_denoiser latent");
    require_same(ex.pooled_prompt.size(), E, "train_denoiser prompt");
  }
  Denoiser d(Z, E, config);
  nn::AdamState adam(nn::AdamConfig{config.learning_rate});
  auto params = d.network().parameters();
  const std::size_t in = d.network().in_features();
  const std::size_t B = config.batch_size;

  std::mt19937_64 rng(config.seed ^ 0xd1ffull);
  std::uniform_int_distribution<std::size_t> pick(0, examples.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_t(1, schedule.steps());
  std::normal_distribution<double> normal;
  std::vector<float> eps(Z);

  for (std::size_t step = 0; step < config.steps; ++step) {
    nn::Tensor x({B, in});
    nn::Tensor target({B, Z});
    for (std::size_t b = 0; b < B; ++b) {
      const auto& ex = examples[pick(rng)];
      const std::size_t t = pick_t(rng);
      for (auto& v : eps) v = static_cast<float>(normal(rng));
      const auto zt = diffuse_forward(ex.latent, t, eps, schedule);
      d.pack_input(zt, t, ex.pooled_prompt, x.data().subspan(b * in, in));
      std::copy(eps.begin(), eps.end(), target.values().begin() + static_cast<std::ptrdiff_t>(b * Z));
    }
    d.network().zero_grad();
    nn::Tensor y = d.network().forward(x);
    nn::Tensor g({B, Z});
    double loss = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double diff = static_cast<double>(y[i]) - target[i];
      loss += diff * diff;
      g[i] = static_cast<float>(2.0 * diff / static_cast<double>(B * Z));
    }
    loss /= static_cast<double>(B * Z);
    if (!std::isfinite(loss)) throw TrainingError("train_denoiser: loss diverged at step " + std::to_string(step));
    (void)d.network().backward(g);
    nn::adam_step(adam, params);
    if (log) log->losses.push_back(loss);
  }
  return d;
}

double denoiser_loss(const NoisePredictor& denoiser, const std::vector<DiffusionExample>& examples,
                     const NoiseSchedule& schedule, std::size_t draws, std::uint64_t seed) {
  if (examples.empty() || draws == 0) throw ArgumentError("denoiser_loss: nothing to evaluate");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick_t(1, schedule.steps());
  std::normal_distribution<double> normal;
  double total = 0;
  std::size_t n = 0;
  for (const auto& ex : examples) {
    std::vector<float> eps(ex.latent.size());
    for (std::size_t k = 0; k < draws; ++k) {
      const std::size_t t = pick_t(rng);
      for (auto& v : eps) v = static_cast<float>(normal(rng));
      const auto zt = diffuse_forward(ex.latent, t, eps, schedule);
      const auto pred = denoiser.predict(zt, t, ex.pooled_prompt);
      for (std::size_t i = 0; i < eps.size(); ++i) {
        const double diff = static_cast<double>(pred[i]) - eps[i];
        total += diff * diff;
        ++n;
      }
    }
  }
  return total / static_cast<double>(n);
}

}  // namespace meg::genmodel
