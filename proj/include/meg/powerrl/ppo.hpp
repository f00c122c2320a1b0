#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "meg/nn/adam.hpp"
#include "meg/nn/mlp.hpp"
#include "meg/nn/serialize.hpp"

namespace meg::powerrl {

struct PpoConfig {
  double clip = 0.2;            // epsilon
  double value_coef = 0.5;      // c1
  double entropy_coef = 0.01;   // c2
  double gamma = 1.0;
  double learning_rate = 1e-3;
  std::size_t epochs = 8;               // per update
  std::size_t episodes_per_batch = 16;
  double log_std_min = -5.0;
  double log_std_max = 1.0;
  double initial_log_std = -1.0;
  double initial_action = 0.5;  // squashed mean action at initialization
  std::size_t hidden = 64;
  bool normalize_advantages = true;
  std::uint64_t seed = 5;
};

/// One MDP step. `raw_action` is the pre-squash Gaussian sample u;
/// the action is a = (tanh(u) + 1) / 2.
struct Transition {
  std::vector<float> state;
  double raw_action = 0.0;
  double action = 0.0;
  double power = 0.0;
  double reward = 0.0;
  std::vector<float> next_state;
  bool done = false;
  double old_log_prob = 0.0;  // log N(u; mu_old, sigma_old)
};

struct EpisodeRecord {
  std::vector<Transition> steps;
  double terminal_score = 0.0;  // FID-proxy of the episode
  double total_power = 0.0;
};

double squash(double raw_action);
/// log N(u; mu, exp(log_std)^2).
double gaussian_log_prob(double u, double mu, double log_std);

struct PolicyOutput {
  double mean = 0.0;
  double log_std = 0.0;  // clamped
};

/// Actor (mean, log-std head) and critic networks plus the frozen
/// old-policy snapshot used for probability ratios.
class PpoAgent {
 public:
  PpoAgent() = default;
  PpoAgent(std::size_t state_size, const PpoConfig& config);

  std::size_t state_size() const noexcept { return actor_.in_features(); }
  const PpoConfig& config() const noexcept { return config_; }

  PolicyOutput policy(std::span<const float> state) const;
  PolicyOutput old_policy(std::span<const float> state) const;
  double value(std::span<const float> state) const;

  /// Samples u from the old policy. Returns u.
  double sample(std::span<const float> state, std::mt19937_64& rng) const;
  /// Mean action squash(mu), no exploration.
  double mean_action(std::span<const float> state) const;

  void snapshot_old();

  nn::Mlp<float>& actor() noexcept { return actor_; }
  nn::Mlp<float>& critic() noexcept { return critic_; }
  const nn::Mlp<float>& actor() const noexcept { return actor_; }
  const nn::Mlp<float>& critic() const noexcept { return critic_; }
  nn::AdamState& actor_optimizer() noexcept { return actor_adam_; }
  nn::AdamState& critic_optimizer() noexcept { return critic_adam_; }

  nn::NetworkFile to_file() const;
  static PpoAgent from_file(const nn::NetworkFile& file, const PpoConfig& config);

 private:
  PpoConfig config_;
  nn::Mlp<float> actor_;
  nn::Mlp<float> actor_old_;
  nn::Mlp<float> critic_;
  nn::AdamState actor_adam_;
  nn::AdamState critic_adam_;
};

struct PpoDiagnostics {
  double surrogate = 0.0;       // mean clipped surrogate (first epoch)
  double value_loss = 0.0;      // mean squared value error (first epoch)
  double entropy = 0.0;         // mean entropy above the log-std floor (first epoch)
  double total_loss = 0.0;      // -surrogate + c1 value - c2 entropy (first epoch)
  double mean_ratio = 0.0;      // first epoch, before any step
  double clip_fraction = 0.0;   // last epoch
  double mean_advantage = 0.0;
  std::size_t transitions = 0;
  bool aborted = false;
};

/// Clipped surrogate min(u A, clip(u, 1-eps, 1+eps) A).
double clipped_objective(double ratio, double advantage, double clip);

/// Discounted Monte-Carlo returns per step of one episode.
std::vector<double> discounted_returns(const EpisodeRecord& episode, double gamma);

/// Loss terms for a batch without updating (ratio against the stored
/// old log-probabilities, advantages as given).
PpoDiagnostics ppo_losses(const PpoAgent& agent, const std::vector<const Transition*>& batch,
                          std::span<const double> advantages, std::span<const double> returns);

/// Runs `config.epochs` gradient steps over the batch, then refreshes the
/// old-policy snapshot. Aborts (parameters untouched for that step) on a
/// non-finite loss.
PpoDiagnostics ppo_update(PpoAgent& agent, const std::vector<EpisodeRecord>& episodes);

}  // namespace meg::powerrl
