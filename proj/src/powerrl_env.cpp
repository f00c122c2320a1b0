#include "meg/powerrl/environment.hpp"

#include <algorithm>
#include <cmath>

#include "meg/errors.hpp"
#include "meg/genmodel/corpus.hpp"

namespace meg::powerrl {

double apply_power(double action, double remaining, double p_max) {
  if (!(action >= 0.0 && action <= 1.0)) throw ArgumentError("apply_power: action must lie in [0,1]");
  if (!(remaining >= 0.0 && remaining <= p_max)) throw ArgumentError("apply_power: remaining budget outside [0, p_max]");
  return std::min(action * p_max, remaining);
}

double terminal_reward(const std::vector<std::vector<float>>& decoded, const std::vector<std::vector<float>>& reference,
                       const metrics::FeatureExtractor& extractor) {
  return -metrics::fid(decoded, reference, extractor);
}

PowerEnvironment::PowerEnvironment(const protocol::Deployment& deployment, const PowerEnvConfig& config)
    : deployment_(&deployment), config_(config), codec_(&deployment.codec_for(config.compression_rate)) {
  if (!(config.p_max > 0.0)) throw ArgumentError("power environment: p_max must be positive");
  if (!(config.noise_power >= 0.0)) throw ArgumentError("power environment: noise power must be non-negative");
  if (config.block_length == 0 || config.batch_prompts < 2 || config.pool_size == 0) {
    throw ArgumentError("power environment: block length, batch size (>= 2) and pool size must be positive");
  }
  noise_std_ = std::sqrt(config.noise_power);
  num_blocks_ = channel::block_count(codec_->seed_length(), config.block_length);

  const auto prompts = genmodel::all_prompts();
  std::mt19937_64 rng(config.seed);
  std::uniform_int_distribution<std::size_t> pick(0, prompts.size() - 1);
  for (std::size_t k = 0; k < config.pool_size; ++k) {
    Batch b;
    for (std::size_t i = 0; i < config.batch_prompts; ++i) {
      protocol::GenerationRequest req{prompts[pick(rng)], codec_->compression_rate, deployment.geometry, rng()};
      const auto es = protocol::es_handle_request(deployment, req, config.block_length);
      b.payloads.push_back(es.frame.payload);
      b.scales.push_back(es.frame.scale);
      b.ground_truth.push_back(deployment.autoencoder->decode(es.latent).values);
    }
    pool_.push_back(std::move(b));
  }
}

std::vector<float> PowerEnvironment::state() const {
  std::vector<float> s(state_size(), 0.0f);
  if (!batch_ || done()) {
    s[config_.block_length + 1] = static_cast<float>(remaining_ / config_.p_max);
    s[config_.block_length + 2] = 1.0f;
    return s;
  }
  const auto& lead = batch_->payloads.front();
  const std::size_t start = step_ * config_.block_length;
  const std::size_t n = std::min(config_.block_length, lead.size() - start);
  std::copy(lead.begin() + static_cast<std::ptrdiff_t>(start),
            lead.begin() + static_cast<std::ptrdiff_t>(start + n), s.begin());
  s[config_.block_length] = static_cast<float>(trace_.gains[step_]);
  s[config_.block_length + 1] = static_cast<float>(remaining_ / config_.p_max);
  s[config_.block_length + 2] = static_cast<float>(static_cast<double>(step_) / static_cast<double>(num_blocks_));
  return s;
}

std::vector<float> PowerEnvironment::reset(const channel::FadingTrace& trace, std::size_t batch_index,
                                           std::uint64_t noise_seed) {
  if (trace.gains.size() < num_blocks_ || trace.block_length != config_.block_length) {
    throw ArgumentError("power environment: trace must cover " + std::to_string(num_blocks_) + " blocks of " +
                        std::to_string(config_.block_length) + " symbols");
  }
  batch_ = &pool_.at(batch_index % pool_.size());
  trace_ = trace;
  noise_rng_.seed(noise_seed);
  step_ = 0;
  remaining_ = config_.p_max;
  spent_ = 0.0;
  received_.assign(batch_->payloads.size(), std::vector<float>(codec_->seed_length(), 0.0f));
  return state();
}

PowerEnvironment::StepResult PowerEnvironment::step(double action) {
  if (!batch_) throw StateError("power environment: step before reset");
  if (done()) throw StateError("power environment: episode already finished");
  double p = apply_power(action, remaining_, config_.p_max);
  while (p > 0.0 && spent_ + p > config_.p_max) p = std::nextafter(p, 0.0);
  const double h = trace_.gains[step_];
  const std::size_t start = step_ * config_.block_length;
  for (std::size_t i = 0; i < batch_->payloads.size(); ++i) {
    const auto& payload = batch_->payloads[i];
    const std::size_t n = std::min(config_.block_length, payload.size() - start);
    const auto block = std::span(payload).subspan(start, n);
    const auto y = channel::transmit(block, h, p, noise_std_, noise_rng_);
    if (p > 0.0) {
      const auto x = channel::equalize(y, h, p);
      std::copy(x.begin(), x.end(), received_[i].begin() + static_cast<std::ptrdiff_t>(start));
    }
  }
  spent_ += p;
  remaining_ = std::max(0.0, config_.p_max - spent_);
  ++step_;

  StepResult r;
  r.power = p;
  r.done = done();
  if (r.done) {
    std::vector<std::vector<float>> decoded;
    for (std::size_t i = 0; i < received_.size(); ++i) {
      const auto z = seedcodec::decompress(*codec_, received_[i], batch_->scales[i]);
      decoded.push_back(deployment_->autoencoder->decode(z).values);
    }
    r.reward = terminal_reward(decoded, batch_->ground_truth, *deployment_->extractor);
    r.fid = -r.reward;
  }
  r.next_state = state();
  return r;
}

void BudgetAudit::record(const EpisodeRecord& episode, double p_max) {
  ++episodes;
  steps += episode.steps.size();
  double total = 0.0;
  for (const auto& s : episode.steps) total += s.power;
  if (total > p_max) ++violations;
}

Policy uniform_policy() {
  return [](std::span<const float>, std::size_t, std::size_t blocks) { return 1.0 / static_cast<double>(blocks); };
}

Policy agent_policy(const PpoAgent& agent) {
  return [&agent](std::span<const float> state, std::size_t, std::size_t) { return agent.mean_action(state); };
}

EpisodeRecord run_episode(PowerEnvironment& env, const Policy& policy, const channel::FadingTrace& trace,
                          std::size_t batch_index, std::uint64_t noise_seed) {
  EpisodeRecord ep;
  std::vector<float> s = env.reset(trace, batch_index, noise_seed);
  std::size_t t = 0;
  while (!env.done()) {
    Transition tr;
    tr.state = s;
    tr.action = std::clamp(policy(s, t, env.num_blocks()), 0.0, 1.0);
    auto r = env.step(tr.action);
    tr.power = r.power;
    tr.reward = r.reward;
    tr.done = r.done;
    tr.next_state = r.next_state;
    ep.total_power += r.power;
    if (r.done) ep.terminal_score = r.fid;
    s = std::move(r.next_state);
    ep.steps.push_back(std::move(tr));
    ++t;
  }
  return ep;
}

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a * 0x9E3779B97F4A7C15ull ^ (b + 0xBF58476D1CE4E5B9ull + (a << 6) + (a >> 2));
  x ^= x >> 31;
  x *= 0x94D049BB133111EBull;
  return x ^ (x >> 29);
}

double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

EvaluationResult evaluate(PowerEnvironment& env, const Policy& policy, const std::vector<channel::FadingTrace>& traces,
                          std::uint64_t seed, BudgetAudit* audit) {
  EvaluationResult res;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const EpisodeRecord ep = run_episode(env, policy, traces[i], i, mix(seed, i));
    if (audit) audit->record(ep, env.config().p_max);
    res.rewards.push_back(-ep.terminal_score);
  }
  res.mean = mean_of(res.rewards);
  double sq = 0;
  for (double r : res.rewards) sq += (r - res.mean) * (r - res.mean);
  res.stddev = res.rewards.size() > 1 ? std::sqrt(sq / static_cast<double>(res.rewards.size() - 1)) : 0.0;
  return res;
}

double sign_test_p(std::size_t wins, std::size_t trials) {
  if (wins > trials) throw ArgumentError("sign test: more wins than trials");
  double p = 0.0;
  for (std::size_t k = wins; k <= trials; ++k) {
    const double log_term = std::lgamma(static_cast<double>(trials) + 1.0) - std::lgamma(static_cast<double>(k) + 1.0) -
                            std::lgamma(static_cast<double>(trials - k) + 1.0) -
                            static_cast<double>(trials) * std::log(2.0);
    p += std::exp(log_term);
  }
  return std::min(1.0, p);
}

PairedComparison compare_paired(std::span<const double> candidate, std::span<const double> baseline) {
  if (candidate.size() != baseline.size() || candidate.empty()) {
    throw DimensionError("paired comparison: reward vectors must be non-empty and of equal length");
  }
  PairedComparison c;
  for (std::size_t i = 0; i < candidate.size(); ++i) {
    const double d = candidate[i] - baseline[i];
    c.mean_difference += d / static_cast<double>(candidate.size());
    if (d > 0.0) {
      ++c.wins;
    } else if (d < 0.0) {
      ++c.losses;
    } else {
      ++c.ties;
    }
  }
  c.p_value = sign_test_p(c.wins, c.wins + c.losses);
  return c;
}

std::vector<channel::FadingTrace> frozen_traces(const PowerEnvConfig& config, std::size_t blocks, std::size_t count,
                                                std::uint64_t seed) {
  const channel::ChannelModel model{config.channel, config.block_length, 0.0};
  std::vector<channel::FadingTrace> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(channel::sample_fading_trace(model, blocks, mix(seed, i)));
  return out;
}

TrainResult train_agent(PowerEnvironment& env, const TrainConfig& config, BudgetAudit* audit,
                        const std::function<void(const CurvePoint&)>& progress) {
  TrainResult res;
  PpoConfig ppo = config.ppo;
  ppo.initial_action = 1.0 / static_cast<double>(env.num_blocks());
  PpoAgent agent(env.state_size(), ppo);
  const auto validation = frozen_traces(env.config(), env.num_blocks(), config.validation_traces, mix(config.seed, 1));
  const std::uint64_t val_seed = mix(config.seed, 2);
  auto validate = [&] { return evaluate(env, agent_policy(agent), validation, val_seed, audit).mean; };
  res.agent = agent;
  res.best_validation = validate();

  std::mt19937_64 rng(mix(config.seed, 3));
  const channel::ChannelModel model{env.config().channel, env.config().block_length, 0.0};
  std::vector<EpisodeRecord> batch;
  PpoDiagnostics diag;
  double batch_reward = 0.0;
  for (std::size_t e = 0; e < config.episodes; ++e) {
    const auto trace = channel::sample_fading_trace(model, env.num_blocks(), rng());
    std::vector<float> s = env.reset(trace, rng() % env.pool_size(), rng());
    EpisodeRecord ep;
    while (!env.done()) {
      Transition tr;
      tr.state = s;
      const PolicyOutput old = agent.old_policy(s);
      tr.raw_action = agent.sample(s, rng);
      tr.old_log_prob = gaussian_log_prob(tr.raw_action, old.mean, old.log_std);
      tr.action = squash(tr.raw_action);
      auto r = env.step(tr.action);
      tr.power = r.power;
      tr.reward = r.reward;
      tr.done = r.done;
      tr.next_state = r.next_state;
      ep.total_power += r.power;
      if (r.done) ep.terminal_score = r.fid;
      s = std::move(r.next_state);
      ep.steps.push_back(std::move(tr));
    }
    if (audit) audit->record(ep, env.config().p_max);
    batch_reward += -ep.terminal_score;
    const double reward = -ep.terminal_score;
    batch.push_back(std::move(ep));
    const double running = batch_reward / static_cast<double>(batch.size());
    if (batch.size() == config.ppo.episodes_per_batch) {
      diag = ppo_update(agent, batch);
      batch.clear();
      batch_reward = 0.0;
    }
    CurvePoint p{e + 1, reward, running, diag.surrogate, diag.value_loss, diag.entropy};
    res.curve.push_back(p);
    if (progress) progress(p);
    if (config.eval_every > 0 && (e + 1) % config.eval_every == 0) {
      const double v = validate();
      if (v > res.best_validation) {
        res.best_validation = v;
        res.agent = agent;
      }
    }
  }
  return res;
}

std::string curve_csv_header() { return "schema,episode,reward,mean_reward,surrogate,value_loss,entropy,config_hash"; }

std::string curve_csv_row(const CurvePoint& p, const std::string& config_hash) {
  return std::to_string(kCurveCsvVersion) + "," + std::to_string(p.episode) + "," + metrics::format_double(p.reward) +
         "," + metrics::format_double(p.mean_reward) + "," + metrics::format_double(p.surrogate) + "," +
         metrics::format_double(p.value_loss) + "," + metrics::format_double(p.entropy) + "," + config_hash;
}

}  // namespace meg::powerrl
