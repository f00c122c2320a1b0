#include "meg/nn/adam.hpp"

#include <cmath>
#include <string>

namespace meg::nn {

double global_grad_norm(std::span<const ParamRef<float>> params) {
  double sum = 0.0;
  for (const auto& p : params) {
    for (float g : p.grad) sum += static_cast<double>(g) * g;
  }
  return std::sqrt(sum);
}

void adam_step(AdamState& state, std::span<const ParamRef<float>> params) {
  for (const auto& p : params) {
    if (p.grad.size() != p.value.size()) {
      throw DimensionError("adam: gradient size mismatch for parameter " + p.name);
    }
    for (float g : p.grad) {
      if (!std::isfinite(g)) throw TrainingError("adam: non-finite gradient in parameter " + p.name);
    }
  }
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.value.size(), 0.0f);
      state.second_moment.emplace_back(p.value.size(), 0.0f);
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw StateError("adam: parameter list changed between steps");
  }

  double scale = 1.0;
  if (state.config.max_grad_norm > 0.0) {
    const double norm = global_grad_norm(params);
    if (norm > state.config.max_grad_norm) scale = state.config.max_grad_norm / norm;
  }

  ++state.step;
  const auto& c = state.config;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    const auto& p = params[k];
    if (m.size() != p.value.size()) throw StateError("adam: parameter " + p.name + " changed size");
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = scale * p.grad[i];
      m[i] = static_cast<float>(c.beta1 * m[i] + (1.0 - c.beta1) * g);
      v[i] = static_cast<float>(c.beta2 * v[i] + (1.0 - c.beta2) * g * g);
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p.value[i] -= static_cast<float>(c.learning_rate * mhat / (std::sqrt(vhat) + c.epsilon));
    }
  }
}

}  // namespace meg::nn
