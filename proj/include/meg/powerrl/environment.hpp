#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "meg/channel/channel.hpp"
#include "meg/powerrl/ppo.hpp"
#include "meg/protocol/protocol.hpp"

namespace meg::powerrl {

/// p_t = min(a_t * p_max, remaining).
double apply_power(double action, double remaining, double p_max);

/// -FID-proxy of the decoded batch against its ground truth.
double terminal_reward(const std::vector<std::vector<float>>& decoded, const std::vector<std::vector<float>>& reference,
                       const metrics::FeatureExtractor& extractor);

struct PowerEnvConfig {
  double compression_rate = 0.5;
  double p_max = 1.0;          // mW, total per seed
  double noise_power = 1.0;    // mW per symbol
  std::size_t block_length = 16;
  channel::ChannelKind channel = channel::ChannelKind::rayleigh_block;
  std::size_t batch_prompts = 8;  // images per episode, sharing one trace and power schedule
  std::size_t pool_size = 16;     // pre-generated prompt batches
  std::uint64_t seed = 11;
};

/// Seed transmission as an MDP. State: the lead seed's block symbols
/// (zero-padded to the block length), h_t, remaining budget / p_max and
/// the fraction of blocks already sent.
class PowerEnvironment {
 public:
  PowerEnvironment(const protocol::Deployment& deployment, const PowerEnvConfig& config);

  std::size_t state_size() const noexcept { return config_.block_length + 3; }
  std::size_t num_blocks() const noexcept { return num_blocks_; }
  std::size_t pool_size() const noexcept { return pool_.size(); }
  const PowerEnvConfig& config() const noexcept { return config_; }

  /// Starts an episode on prompt batch `batch_index` over `trace`.
  std::vector<float> reset(const channel::FadingTrace& trace, std::size_t batch_index, std::uint64_t noise_seed);
  bool done() const noexcept { return step_ == num_blocks_; }
  double remaining() const noexcept { return remaining_; }
  double spent() const noexcept { return spent_; }

  struct StepResult {
    double power = 0.0;
    double reward = 0.0;
    std::vector<float> next_state;
    bool done = false;
    double fid = 0.0;
  };
  StepResult step(double action);

  std::vector<float> state() const;

 private:
  struct Batch {
    std::vector<std::vector<float>> payloads;
    std::vector<float> scales;
    std::vector<std::vector<float>> ground_truth;
  };

  const protocol::Deployment* deployment_;
  PowerEnvConfig config_;
  const seedcodec::CodecPair* codec_;
  std::size_t num_blocks_ = 0;
  std::vector<Batch> pool_;
  double noise_std_ = 0.0;

  const Batch* batch_ = nullptr;
  channel::FadingTrace trace_;
  std::mt19937_64 noise_rng_;
  std::size_t step_ = 0;
  double remaining_ = 0.0;
  double spent_ = 0.0;
  std::vector<std::vector<float>> received_;  // equalized payload per image
};

/// Global audit of every episode ever recorded.
struct BudgetAudit {
  std::size_t episodes = 0;
  std::size_t steps = 0;
  std::size_t violations = 0;
  void record(const EpisodeRecord& episode, double p_max);
};

using Policy = std::function<double(std::span<const float> state, std::size_t step, std::size_t num_blocks)>;

Policy uniform_policy();
Policy agent_policy(const PpoAgent& agent);

/// Runs one episode with a deterministic policy.
EpisodeRecord run_episode(PowerEnvironment& env, const Policy& policy, const channel::FadingTrace& trace,
                          std::size_t batch_index, std::uint64_t noise_seed);

struct EvaluationResult {
  std::vector<double> rewards;  // one per trace
  double mean = 0.0;
  double stddev = 0.0;
};

/// Episode i uses trace i, prompt batch i mod pool size and noise seed
/// derived from `seed` and i, so two policies see identical randomness.
EvaluationResult evaluate(PowerEnvironment& env, const Policy& policy, const std::vector<channel::FadingTrace>& traces,
                          std::uint64_t seed, BudgetAudit* audit = nullptr);

/// Paired comparison of two reward vectors over the same traces. The
/// p-value is the one-sided sign test for "candidate beats baseline",
/// ties dropped.
struct PairedComparison {
  double mean_difference = 0.0;  // candidate - baseline
  std::size_t wins = 0;
  std::size_t losses = 0;
  std::size_t ties = 0;
  double p_value = 1.0;
};

PairedComparison compare_paired(std::span<const double> candidate, std::span<const double> baseline);

/// P(X >= wins) for X ~ Binomial(trials, 1/2).
double sign_test_p(std::size_t wins, std::size_t trials);

struct TrainConfig {
  PpoConfig ppo;
  std::size_t episodes = 3000;
  std::size_t eval_every = 200;  // episodes
  std::size_t validation_traces = 32;
  std::uint64_t seed = 21;
};

/// One row per training episode; loss columns come from the latest update.
struct CurvePoint {
  std::size_t episode = 0;
  double reward = 0.0;
  double mean_reward = 0.0;  // over the current update batch
  double surrogate = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
};

struct TrainResult {
  PpoAgent agent;  // best on validation traces
  std::vector<CurvePoint> curve;
  double best_validation = 0.0;
};

TrainResult train_agent(PowerEnvironment& env, const TrainConfig& config, BudgetAudit* audit = nullptr,
                        const std::function<void(const CurvePoint&)>& progress = {});

std::vector<channel::FadingTrace> frozen_traces(const PowerEnvConfig& config, std::size_t blocks, std::size_t count,
                                                std::uint64_t seed);

inline constexpr int kCurveCsvVersion = 1;
std::string curve_csv_header();
std::string curve_csv_row(const CurvePoint& p, const std::string& config_hash);

}  // namespace meg::powerrl
