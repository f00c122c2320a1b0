#include "meg/powerrl/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "meg/errors.hpp"

namespace meg::powerrl {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

std::vector<nn::MlpLayerSpec> trunk(std::size_t hidden, std::size_t out) {
  return {{hidden, nn::Activation::tanh}, {hidden, nn::Activation::tanh}, {out, nn::Activation::none}};
}

nn::Tensor row_tensor(std::span<const float> state) { return nn::Tensor({state.size()}, {state.begin(), state.end()}); }

}  // namespace

double squash(double raw_action) { return 0.5 * (std::tanh(raw_action) + 1.0); }

double gaussian_log_prob(double u, double mu, double log_std) {
  const double z = (u - mu) * std::exp(-log_std);
  return -0.5 * z * z - log_std - kHalfLog2Pi;
}

PpoAgent::PpoAgent(std::size_t state_size, const PpoConfig& config)
    : config_(config),
      actor_(state_size, trunk(config.hidden, 2), "actor"),
      critic_(state_size, trunk(config.hidden, 1), "critic") {
  if (!(config.clip >= 0.0 && config.clip < 1.0)) throw ArgumentError("ppo: clip range must lie in [0,1)");
  if (!(config.gamma > 0.0 && config.gamma <= 1.0)) throw ArgumentError("ppo: gamma must lie in (0,1]");
  if (!(config.log_std_min < config.log_std_max)) throw ArgumentError("ppo: empty log-std range");
  if (!(config.initial_action > 0.0 && config.initial_action < 1.0)) throw ArgumentError("ppo: initial action must lie in (0,1)");
  std::mt19937_64 rng(config.seed);
  actor_.initialize(rng);
  critic_.initialize(rng);
  auto& head = actor_.layers().back();
  for (std::size_t i = 0; i < head.in_features(); ++i) {
    head.weights()[i] *= 0.01f;
    head.weights()[head.in_features() + i] *= 0.01f;
  }
  head.bias()[0] = static_cast<float>(std::atanh(2.0 * config.initial_action - 1.0));
  head.bias()[1] = static_cast<float>(config.initial_log_std);
  actor_old_ = actor_;
  nn::AdamConfig ac;
  ac.learning_rate = config.learning_rate;
  actor_adam_ = nn::AdamState(ac);
  critic_adam_ = nn::AdamState(ac);
}

namespace {

PolicyOutput head_output(const nn::Tensor& out, std::size_t row, const PpoConfig& c) {
  return {out[2 * row], std::clamp<double>(out[2 * row + 1], c.log_std_min, c.log_std_max)};
}

}  // namespace

PolicyOutput PpoAgent::policy(std::span<const float> state) const {
  return head_output(actor_.apply(row_tensor(state)), 0, config_);
}

PolicyOutput PpoAgent::old_policy(std::span<const float> state) const {
  return head_output(actor_old_.apply(row_tensor(state)), 0, config_);
}

double PpoAgent::value(std::span<const float> state) const { return critic_.apply(row_tensor(state))[0]; }

double PpoAgent::sample(std::span<const float> state, std::mt19937_64& rng) const {
  const PolicyOutput p = old_policy(state);
  std::normal_distribution<double> normal;
  return p.mean + std::exp(p.log_std) * normal(rng);
}

double PpoAgent::mean_action(std::span<const float> state) const { return squash(policy(state).mean); }

void PpoAgent::snapshot_old() { actor_old_ = actor_; }

nn::NetworkFile PpoAgent::to_file() const {
  nn::NetworkFile f;
  f.metadata = {{"model", "ppo_agent"},
                {"actor_layers", std::to_string(actor_.layers().size())},
                {"state_size", std::to_string(state_size())}};
  nn::append_records(actor_, f.layers);
  nn::append_records(critic_, f.layers);
  return f;
}

PpoAgent PpoAgent::from_file(const nn::NetworkFile& file, const PpoConfig& config) {
  if (file.get("model") != "ppo_agent") throw FrameError("model file is not a PPO agent");
  const std::size_t na = std::stoul(file.get("actor_layers"));
  if (na == 0 || na >= file.layers.size()) throw FrameError("agent file: bad actor layer count");
  PpoAgent a;
  a.config_ = config;
  a.actor_ = nn::mlp_from_records(std::span(file.layers).first(na));
  a.critic_ = nn::mlp_from_records(std::span(file.layers).subspan(na));
  if (a.actor_.out_features() != 2 || a.critic_.out_features() != 1 ||
      a.critic_.in_features() != a.actor_.in_features()) {
    throw FrameError("agent file: actor/critic shapes are inconsistent");
  }
  a.actor_old_ = a.actor_;
  nn::AdamConfig ac;
  ac.learning_rate = config.learning_rate;
  a.actor_adam_ = nn::AdamState(ac);
  a.critic_adam_ = nn::AdamState(ac);
  return a;
}

double clipped_objective(double ratio, double advantage, double clip) {
  const double clipped = std::clamp(ratio, 1.0 - clip, 1.0 + clip);
  return std::min(ratio * advantage, clipped * advantage);
}

std::vector<double> discounted_returns(const EpisodeRecord& episode, double gamma) {
  std::vector<double> out(episode.steps.size());
  double g = 0.0;
  for (std::size_t i = episode.steps.size(); i-- > 0;) {
    g = episode.steps[i].reward + gamma * g;
    out[i] = g;
  }
  return out;
}

namespace {

struct BatchTensors {
  nn::Tensor states;
};

BatchTensors stack_states(const std::vector<const Transition*>& batch, std::size_t state_size) {
  BatchTensors b{nn::Tensor({batch.size(), state_size})};
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i]->state.size() != state_size) {
      throw DimensionError("ppo: transition state has " + std::to_string(batch[i]->state.size()) +
                           " values, agent expects " + std::to_string(state_size));
    }
    std::copy(batch[i]->state.begin(), batch[i]->state.end(),
              b.states.values().begin() + static_cast<std::ptrdiff_t>(i * state_size));
  }
  return b;
}

// Loss terms, and optionally gradients w.r.t. actor outputs and values.
PpoDiagnostics evaluate_batch(const PpoConfig& c, const std::vector<const Transition*>& batch, const nn::Tensor& actor_out,
                              const nn::Tensor& values, std::span<const double> adv, std::span<const double> ret,
                              nn::Tensor* actor_grad, nn::Tensor* value_grad) {
  const double n = static_cast<double>(batch.size());
  PpoDiagnostics d;
  d.transitions = batch.size();
  std::size_t clipped = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double mu = actor_out[2 * i];
    const double raw_ls = actor_out[2 * i + 1];
    const double ls = std::clamp(raw_ls, c.log_std_min, c.log_std_max);
    const double u = batch[i]->raw_action;
    const double logp = gaussian_log_prob(u, mu, ls);
    const double ratio = std::exp(logp - batch[i]->old_log_prob);
    const double a = adv[i];
    const double surrogate = clipped_objective(ratio, a, c.clip);
    const double v = values[i];
    const double entropy = ls - c.log_std_min;
    d.surrogate += surrogate / n;
    d.value_loss += (v - ret[i]) * (v - ret[i]) / n;
    d.entropy += entropy / n;
    d.mean_ratio += ratio / n;
    d.mean_advantage += a / n;
    const bool clip_active = (a >= 0.0 && ratio > 1.0 + c.clip) || (a < 0.0 && ratio < 1.0 - c.clip);
    if (clip_active) ++clipped;
    if (actor_grad) {
      // d surrogate / d logp = ratio * A on the unclipped branch, 0 otherwise.
      const double ds = clip_active ? 0.0 : ratio * a;
      const double z = (u - mu) * std::exp(-ls);
      const double dmu = ds * z * std::exp(-ls);
      const double dls = ds * (z * z - 1.0);
      (*actor_grad)[2 * i] = static_cast<float>(-dmu / n);
      const bool ls_free = raw_ls > c.log_std_min && raw_ls < c.log_std_max;
      (*actor_grad)[2 * i + 1] = ls_free ? static_cast<float>((-dls - c.entropy_coef) / n) : 0.0f;
    }
    if (value_grad) (*value_grad)[i] = static_cast<float>(c.value_coef * 2.0 * (v - ret[i]) / n);
  }
  d.clip_fraction = static_cast<double>(clipped) / n;
  d.total_loss = -d.surrogate + c.value_coef * d.value_loss - c.entropy_coef * d.entropy;
  return d;
}

}  // namespace

PpoDiagnostics ppo_losses(const PpoAgent& agent, const std::vector<const Transition*>& batch,
                          std::span<const double> advantages, std::span<const double> returns) {
  if (batch.empty()) throw ArgumentError("ppo: empty batch");
  const auto b = stack_states(batch, agent.state_size());
  const nn::Tensor out = agent.actor().apply(b.states);
  const nn::Tensor values = agent.critic().apply(b.states);
  return evaluate_batch(agent.config(), batch, out, values, advantages, returns, nullptr, nullptr);
}

PpoDiagnostics ppo_update(PpoAgent& agent, const std::vector<EpisodeRecord>& episodes) {
  const PpoConfig& c = agent.config();
  std::vector<const Transition*> batch;
  std::vector<double> returns;
  for (const auto& ep : episodes) {
    const auto g = discounted_returns(ep, c.gamma);
    for (std::size_t i = 0; i < ep.steps.size(); ++i) {
      batch.push_back(&ep.steps[i]);
      returns.push_back(g[i]);
    }
  }
  if (batch.empty()) throw ArgumentError("ppo_update: empty batch");
  const auto b = stack_states(batch, agent.state_size());
  const nn::Tensor v0 = agent.critic().apply(b.states);
  std::vector<double> adv(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) adv[i] = returns[i] - v0[i];
  if (c.normalize_advantages && adv.size() > 1) {
    double mean = 0, sq = 0;
    for (double a : adv) mean += a;
    mean /= static_cast<double>(adv.size());
    for (double a : adv) sq += (a - mean) * (a - mean);
    const double sd = std::sqrt(sq / static_cast<double>(adv.size() - 1));
    for (double& a : adv) a = sd > 1e-12 ? (a - mean) / sd : a - mean;
  }

  PpoDiagnostics first;
  PpoDiagnostics last;
  auto actor_params = agent.actor().parameters();
  auto critic_params = agent.critic().parameters();
  for (std::size_t epoch = 0; epoch < c.epochs; ++epoch) {
    agent.actor().zero_grad();
    agent.critic().zero_grad();
    const nn::Tensor out = agent.actor().forward(b.states);
    const nn::Tensor values = agent.critic().forward(b.states);
    nn::Tensor ga(out.shape());
    nn::Tensor gv(values.shape());
    PpoDiagnostics d = evaluate_batch(c, batch, out, values, adv, returns, &ga, &gv);
    if (epoch == 0) first = d;
    last = d;
    if (!std::isfinite(d.total_loss) || !ga.all_finite() || !gv.all_finite()) {
      first.aborted = true;
      break;
    }
    (void)agent.actor().backward(ga);
    (void)agent.critic().backward(gv);
    try {
      nn::adam_step(agent.actor_optimizer(), actor_params);
      nn::adam_step(agent.critic_optimizer(), critic_params);
    } catch (const TrainingError&) {
      first.aborted = true;
      break;
    }
  }
  first.clip_fraction = last.clip_fraction;
  agent.snapshot_old();
  return first;
}

}  // namespace meg::powerrl
