#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "meg/nn/tensor.hpp"

namespace meg::nn {

enum class Activation : std::uint8_t { none = 0, relu = 1, tanh = 2 };

inline std::string to_string(Activation act) {
  switch (act) {
    case Activation::none:
      return "none";
    case Activation::relu:
      return "relu";
    case Activation::tanh:
      return "tanh";
  }
  return "unknown";
}

/// View of one trainable parameter and its accumulated gradient.
template <typename T>
struct ParamRef {
  std::string name;
  std::span<T> value;
  std::span<const T> grad;
};

namespace detail {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

template <typename T>
Shape with_trailing(const Shape& shape, std::size_t trailing) {
  Shape out = shape;
  out.back() = trailing;
  return out;
}

}  // namespace detail

template <typename T>
struct DenseGradients {
  BasicTensor<T> input_grad;
  BasicTensor<T> weight_grad;
  BasicTensor<T> bias_grad;
};

/// Fully connected layer: activation(W x + b) over the trailing dimension.
template <typename T>
class DenseLayer {
 public:
  DenseLayer() = default;
  DenseLayer(std::size_t in_features, std::size_t out_features, Activation act,
             std::string name = "dense")
      : in_(in_features),
        out_(out_features),
        act_(act),
        name_(std::move(name)),
        weights_({out_features, in_features}),
        bias_({out_features}),
        weight_grad_({out_features, in_features}),
        bias_grad_({out_features}) {}

  /// Uniform in [-sqrt(1/in), +sqrt(1/in)] for weights and bias.
  void initialize(std::mt19937_64& rng) {
    const double bound = std::sqrt(1.0 / static_cast<double>(in_));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& w : weights_.values()) w = static_cast<T>(dist(rng));
    for (auto& b : bias_.values()) b = static_cast<T>(dist(rng));
  }

  std::size_t in_features() const noexcept { return in_; }
  std::size_t out_features() const noexcept { return out_; }
  Activation activation() const noexcept { return act_; }
  const std::string& name() const noexcept { return name_; }
  std::size_t parameter_count() const noexcept { return in_ * out_ + out_; }

  BasicTensor<T>& weights() noexcept { return weights_; }
  const BasicTensor<T>& weights() const noexcept { return weights_; }
  BasicTensor<T>& bias() noexcept { return bias_; }
  const BasicTensor<T>& bias() const noexcept { return bias_; }

  /// Pure forward map; safe to call concurrently.
  BasicTensor<T> apply(const BasicTensor<T>& input) const {
    BasicTensor<T> pre = affine(input);
    activate(pre);
    return pre;
  }

  /// Forward pass that caches what backward needs.
  BasicTensor<T> forward(const BasicTensor<T>& input) {
    BasicTensor<T> pre = affine(input);
    cached_input_ = input;
    cached_pre_ = pre;
    activate(pre);
    return pre;
  }

  DenseGradients<T> backward(const BasicTensor<T>& upstream) const {
    if (!cached_input_) {
      throw StateError(name_ + ": backward called without a cached forward pass");
    }
    const BasicTensor<T>& pre = *cached_pre_;
    if (upstream.shape() != pre.shape()) {
      throw DimensionError(name_ + ": upstream gradient shape " + shape_to_string(upstream.shape()) +
                           " does not match output " + shape_to_string(pre.shape()));
    }
    const std::size_t rows = pre.size() / out_;
    BasicTensor<T> local = upstream;
    for (std::size_t i = 0; i < local.size(); ++i) {
      switch (act_) {
        case Activation::none:
          break;
        case Activation::relu:
          if (pre[i] <= T{0}) local[i] = T{0};
          break;
        case Activation::tanh: {
          const T y = std::tanh(pre[i]);
          local[i] *= T{1} - y * y;
          break;
        }
      }
    }
    DenseGradients<T> g{BasicTensor<T>(cached_input_->shape()), BasicTensor<T>({out_, in_}),
                        BasicTensor<T>({out_})};
    detail::ConstMatMap<T> G(local.data().data(), rows, out_);
    detail::ConstMatMap<T> X(cached_input_->data().data(), rows, in_);
    detail::ConstMatMap<T> W(weights_.data().data(), out_, in_);
    detail::MatMap<T>(g.weight_grad.data().data(), out_, in_).noalias() = G.transpose() * X;
    detail::MatMap<T>(g.bias_grad.data().data(), 1, out_).noalias() = G.colwise().sum();
    detail::MatMap<T>(g.input_grad.data().data(), rows, in_).noalias() = G * W;
    return g;
  }

  void accumulate(const DenseGradients<T>& g) {
    for (std::size_t i = 0; i < weight_grad_.size(); ++i) weight_grad_[i] += g.weight_grad[i];
    for (std::size_t i = 0; i < bias_grad_.size(); ++i) bias_grad_[i] += g.bias_grad[i];
  }

  void zero_grad() {
    weight_grad_.fill(T{0});
    bias_grad_.fill(T{0});
  }

  void collect_parameters(std::vector<ParamRef<T>>& out) {
    out.push_back({name_ + ".weight", weights_.data(), weight_grad_.data()});
    out.push_back({name_ + ".bias", bias_.data(), bias_grad_.data()});
  }

  template <typename U>
  DenseLayer<U> cast() const {
    DenseLayer<U> out(in_, out_, act_, name_);
    out.weights() = weights_.template cast<U>();
    out.bias() = bias_.template cast<U>();
    return out;
  }

 private:
  BasicTensor<T> affine(const BasicTensor<T>& input) const {
    const std::size_t rows = batch_rows(input, in_, name_);
    BasicTensor<T> out(detail::with_trailing<T>(input.shape(), out_));
    detail::ConstMatMap<T> X(input.data().data(), rows, in_);
    detail::ConstMatMap<T> W(weights_.data().data(), out_, in_);
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(bias_.data().data(), out_);
    detail::MatMap<T> Y(out.data().data(), rows, out_);
    Y.noalias() = X * W.transpose();
    Y.rowwise() += b;
    return out;
  }

  void activate(BasicTensor<T>& t) const {
    switch (act_) {
      case Activation::none:
        return;
      case Activation::relu:
        for (auto& v : t.values()) v = v > T{0} ? v : T{0};
        return;
      case Activation::tanh:
        for (auto& v : t.values()) v = std::tanh(v);
        return;
    }
  }

  std::size_t in_ = 0;
  std::size_t out_ = 0;
  Activation act_ = Activation::none;
  std::string name_;
  BasicTensor<T> weights_;
  BasicTensor<T> bias_;
  BasicTensor<T> weight_grad_;
  BasicTensor<T> bias_grad_;
  std::optional<BasicTensor<T>> cached_input_;
  std::optional<BasicTensor<T>> cached_pre_;
};

template <typename T>
struct LayerNormGradients {
  BasicTensor<T> input_grad;
  BasicTensor<T> gain_grad;
  BasicTensor<T> offset_grad;
};

/// Mean/variance normalization over the trailing dimension followed by an
/// optional elementwise affine map. Without the affine part it has no
/// parameters (the "Normalize" rows of the codec decoder).
template <typename T>
class LayerNormLayer {
 public:
  LayerNormLayer() = default;
  LayerNormLayer(std::size_t size, double epsilon, bool affine, std::string name = "layernorm")
      : size_(size),
        eps_(epsilon),
        affine_(affine),
        name_(std::move(name)),
        gain_({size}, T{1}),
        offset_({size}, T{0}),
        gain_grad_({size}),
        offset_grad_({size}) {}

  std::size_t normalized_size() const noexcept { return size_; }
  double epsilon() const noexcept { return eps_; }
  bool affine() const noexcept { return affine_; }
  const std::string& name() const noexcept { return name_; }
  std::size_t parameter_count() const noexcept { return affine_ ? 2 * size_ : 0; }

  BasicTensor<T>& gain() noexcept { return gain_; }
  const BasicTensor<T>& gain() const noexcept { return gain_; }
  BasicTensor<T>& offset() noexcept { return offset_; }
  const BasicTensor<T>& offset() const noexcept { return offset_; }

  BasicTensor<T> apply(const BasicTensor<T>& input) const {
    BasicTensor<T> normed;
    std::vector<T> inv_std;
    return run(input, normed, inv_std);
  }

  BasicTensor<T> forward(const BasicTensor<T>& input) {
    BasicTensor<T> normed;
    std::vector<T> inv_std;
    BasicTensor<T> out = run(input, normed, inv_std);
    cached_normed_ = std::move(normed);
    cached_inv_std_ = std::move(inv_std);
    return out;
  }

  LayerNormGradients<T> backward(const BasicTensor<T>& upstream) const {
    if (!cached_normed_) {
      throw StateError(name_ + ": backward called without a cached forward pass");
    }
    const BasicTensor<T>& xhat = *cached_normed_;
    if (upstream.shape() != xhat.shape()) {
      throw DimensionError(name_ + ": upstream gradient shape " + shape_to_string(upstream.shape()) +
                           " does not match output " + shape_to_string(xhat.shape()));
    }
    const std::size_t rows = xhat.size() / size_;
    LayerNormGradients<T> g{BasicTensor<T>(xhat.shape()), BasicTensor<T>({size_}),
                            BasicTensor<T>({size_})};
    std::vector<T> dxhat(size_);
    const T n = static_cast<T>(size_);
    for (std::size_t r = 0; r < rows; ++r) {
      const T* xh = xhat.data().data() + r * size_;
      const T* dy = upstream.data().data() + r * size_;
      T mean_d = 0;
      T mean_dx = 0;
      for (std::size_t i = 0; i < size_; ++i) {
        dxhat[i] = affine_ ? dy[i] * gain_[i] : dy[i];
        mean_d += dxhat[i];
        mean_dx += dxhat[i] * xh[i];
        if (affine_) {
          g.gain_grad[i] += dy[i] * xh[i];
          g.offset_grad[i] += dy[i];
        }
      }
      mean_d /= n;
      mean_dx /= n;
      T* dx = g.input_grad.data().data() + r * size_;
      const T s = (*cached_inv_std_)[r];
      for (std::size_t i = 0; i < size_; ++i) dx[i] = s * (dxhat[i] - mean_d - xh[i] * mean_dx);
    }
    return g;
  }

  void accumulate(const LayerNormGradients<T>& g) {
    if (!affine_) return;
    for (std::size_t i = 0; i < size_; ++i) {
      gain_grad_[i] += g.gain_grad[i];
      offset_grad_[i] += g.offset_grad[i];
    }
  }

  void zero_grad() {
    gain_grad_.fill(T{0});
    offset_grad_.fill(T{0});
  }

  void collect_parameters(std::vector<ParamRef<T>>& out) {
    if (!affine_) return;
    out.push_back({name_ + ".gain", gain_.data(), gain_grad_.data()});
    out.push_back({name_ + ".offset", offset_.data(), offset_grad_.data()});
  }

  template <typename U>
  LayerNormLayer<U> cast() const {
    LayerNormLayer<U> out(size_, eps_, affine_, name_);
    out.gain() = gain_.template cast<U>();
    out.offset() = offset_.template cast<U>();
    return out;
  }

 private:
  BasicTensor<T> run(const BasicTensor<T>& input, BasicTensor<T>& normed,
                     std::vector<T>& inv_std) const {
    const std::size_t rows = batch_rows(input, size_, name_);
    normed = BasicTensor<T>(input.shape());
    BasicTensor<T> out(input.shape());
    inv_std.assign(rows, T{0});
    for (std::size_t r = 0; r < rows; ++r) {
      const T* x = input.data().data() + r * size_;
      T mean = 0;
      for (std::size_t i = 0; i < size_; ++i) mean += x[i];
      mean /= static_cast<T>(size_);
      T var = 0;
      for (std::size_t i = 0; i < size_; ++i) var += (x[i] - mean) * (x[i] - mean);
      var /= static_cast<T>(size_);
      const T s = T{1} / std::sqrt(var + static_cast<T>(eps_));
      inv_std[r] = s;
      T* xh = normed.data().data() + r * size_;
      T* y = out.data().data() + r * size_;
      for (std::size_t i = 0; i < size_; ++i) {
        xh[i] = (x[i] - mean) * s;
        y[i] = affine_ ? gain_[i] * xh[i] + offset_[i] : xh[i];
      }
    }
    return out;
  }

  std::size_t size_ = 0;
  double eps_ = 1e-6;
  bool affine_ = true;
  std::string name_;
  BasicTensor<T> gain_;
  BasicTensor<T> offset_;
  BasicTensor<T> gain_grad_;
  BasicTensor<T> offset_grad_;
  std::optional<BasicTensor<T>> cached_normed_;
  std::optional<std::vector<T>> cached_inv_std_;
};

}  // namespace meg::nn
