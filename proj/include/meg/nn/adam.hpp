#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "meg/nn/layers.hpp"

namespace meg::nn {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // When positive, gradients are rescaled so their global L2 norm is at most this.
  double max_grad_norm = 0.0;
};

/// Adam moments for a fixed, ordered parameter list. Moments are sized on
/// the first step and must keep the same layout afterwards.
struct AdamState {
  AdamConfig config;
  std::vector<std::vector<float>> first_moment;
  std::vector<std::vector<float>> second_moment;
  std::uint64_t step = 0;

  AdamState() = default;
  explicit AdamState(AdamConfig cfg) : config(cfg) {}
};

/// One bias-corrected Adam update. Throws TrainingError naming the first
/// parameter with a non-finite gradient; parameters are left untouched then.
void adam_step(AdamState& state, std::span<const ParamRef<float>> params);

double global_grad_norm(std::span<const ParamRef<float>> params);

}  // namespace meg::nn
