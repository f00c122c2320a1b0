#pragma once

#include <random>
#include <string>
#include <vector>

#include "meg/nn/layers.hpp"

namespace meg::nn {

struct MlpLayerSpec {
  std::size_t out_features;
  Activation activation;
};

/// Stack of dense layers. Used by the autoencoder, denoiser, feature
/// extractor and the PPO actor/critic.
template <typename T>
class Mlp {
 public:
  Mlp() = default;

  Mlp(std::size_t in_features, const std::vector<MlpLayerSpec>& specs, const std::string& name) {
    std::size_t in = in_features;
    for (std::size_t i = 0; i < specs.size(); ++i) {
      layers_.emplace_back(in, specs[i].out_features, specs[i].activation,
                           name + "." + std::to_string(i));
      in = specs[i].out_features;
    }
  }

  explicit Mlp(std::vector<DenseLayer<T>> layers) : layers_(std::move(layers)) {
    for (std::size_t i = 1; i < layers_.size(); ++i) {
      if (layers_[i].in_features() != layers_[i - 1].out_features()) {
        throw DimensionError("mlp: layer " + layers_[i].name() + " expects " +
                             std::to_string(layers_[i].in_features()) + " inputs but previous layer emits " +
                             std::to_string(layers_[i - 1].out_features()));
      }
    }
  }

  void initialize(std::mt19937_64& rng) {
    for (auto& l : layers_) l.initialize(rng);
  }

  std::size_t in_features() const { return layers_.front().in_features(); }
  std::size_t out_features() const { return layers_.back().out_features(); }
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.parameter_count();
    return n;
  }

  std::vector<DenseLayer<T>>& layers() noexcept { return layers_; }
  const std::vector<DenseLayer<T>>& layers() const noexcept { return layers_; }

  BasicTensor<T> apply(const BasicTensor<T>& input) const {
    BasicTensor<T> x = input;
    for (const auto& l : layers_) x = l.apply(x);
    return x;
  }

  BasicTensor<T> forward(const BasicTensor<T>& input) {
    BasicTensor<T> x = input;
    for (auto& l : layers_) x = l.forward(x);
    return x;
  }

  /// Accumulates parameter gradients and returns the gradient w.r.t. the input.
  BasicTensor<T> backward(const BasicTensor<T>& upstream) {
    BasicTensor<T> g = upstream;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
      DenseGradients<T> lg = it->backward(g);
      it->accumulate(lg);
      g = std::move(lg.input_grad);
    }
    return g;
  }

  void zero_grad() {
    for (auto& l : layers_) l.zero_grad();
  }

  void collect_parameters(std::vector<ParamRef<T>>& out) {
    for (auto& l : layers_) l.collect_parameters(out);
  }

  std::vector<ParamRef<T>> parameters() {
    std::vector<ParamRef<T>> out;
    collect_parameters(out);
    return out;
  }

  template <typename U>
  Mlp<U> cast() const {
    std::vector<DenseLayer<U>> out;
    out.reserve(layers_.size());
    for (const auto& l : layers_) out.push_back(l.template cast<U>());
    return Mlp<U>(std::move(out));
  }

 private:
  std::vector<DenseLayer<T>> layers_;
};

}  // namespace meg::nn
