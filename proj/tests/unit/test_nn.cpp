#include <cmath>
#include <random>

#include "doctest.h"
#include "meg/nn/adam.hpp"
#include "meg/nn/architecture.hpp"
#include "meg/nn/layers.hpp"
#include "meg/nn/mlp.hpp"
#include "meg/nn/serialize.hpp"
#include "support/gradcheck.hpp"

using namespace meg;
using namespace meg::nn;

namespace {

Tensor64 random_tensor(Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  Tensor64 t(std::move(shape));
  std::normal_distribution<double> n(0.0, scale);
  for (auto& v : t.values()) v = n(rng);
  return t;
}

// Loss = sum(c * layer(x)); its gradient w.r.t. the output is c.
template <typename Layer>
double weighted_sum(const Layer& layer, const Tensor64& x, const Tensor64& c) {
  Tensor64 y = layer.apply(x);
  double s = 0;
  for (std::size_t i = 0; i < y.size(); ++i) s += c[i] * y[i];
  return s;
}

bool near_relu_kink(const DenseLayer<double>& layer, const Tensor64& x) {
  DenseLayer<double> probe(layer.in_features(), layer.out_features(), Activation::none);
  probe.weights() = layer.weights();
  probe.bias() = layer.bias();
  Tensor64 pre = probe.apply(x);
  for (double v : pre.values()) {
    if (std::abs(v) < 1e-3) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("dense_forward: relu clips negatives") {
  DenseLayer<float> layer(3, 3, Activation::relu);
  layer.weights() = Tensor({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor y = layer.apply(Tensor({3}, {-1.f, 0.f, 2.f}));
  CHECK(y.values() == std::vector<float>{0.f, 0.f, 2.f});
}

TEST_CASE("dense_forward: zero weights return the bias") {
  DenseLayer<float> layer(5, 2, Activation::none);
  layer.bias() = Tensor({2}, {0.25f, -3.f});
  Tensor y = layer.apply(Tensor({5}, {9, -4, 1, 7, 2}));
  CHECK(y.values() == std::vector<float>{0.25f, -3.f});
}

TEST_CASE("dense_forward: matches an independent dot-product loop") {
  std::mt19937_64 rng(7);
  DenseLayer<float> layer(4, 3, Activation::none);
  layer.initialize(rng);
  Tensor x({4}, {0.3f, -1.2f, 0.7f, 2.0f});
  Tensor y = layer.apply(x);
  for (std::size_t o = 0; o < 3; ++o) {
    double acc = layer.bias()[o];
    for (std::size_t i = 0; i < 4; ++i) acc += double(layer.weights()[o * 4 + i]) * x[i];
    CHECK(std::abs(y[o] - acc) < 1e-6);
  }
}

TEST_CASE("dense_forward: shape mismatch names the layer") {
  DenseLayer<float> layer(4, 3, Activation::none, "encoder.proj");
  try {
    (void)layer.apply(Tensor({5}));
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    CHECK(std::string(e.what()).find("encoder.proj") != std::string::npos);
  }
}

TEST_CASE("dense_backward: identity activation passes upstream to bias grad") {
  std::mt19937_64 rng(1);
  DenseLayer<float> layer(3, 2, Activation::none);
  layer.initialize(rng);
  (void)layer.forward(Tensor({3}, {1, 2, 3}));
  auto g = layer.backward(Tensor({2}, {0.5f, -2.f}));
  CHECK(g.bias_grad.values() == std::vector<float>{0.5f, -2.f});
}

TEST_CASE("dense_backward: relu blocks gradient at negative pre-activation") {
  DenseLayer<float> layer(1, 2, Activation::relu);
  layer.weights() = Tensor({2, 1}, {1.f, -1.f});
  (void)layer.forward(Tensor({1}, {2.f}));
  auto g = layer.backward(Tensor({2}, {1.f, 1.f}));
  CHECK(g.bias_grad[0] == 1.f);
  CHECK(g.bias_grad[1] == 0.f);
  CHECK(g.weight_grad[1] == 0.f);
}

TEST_CASE("dense_backward: requires a forward cache") {
  DenseLayer<float> layer(2, 2, Activation::none);
  CHECK_THROWS_AS((void)layer.backward(Tensor({2})), StateError);
}

TEST_CASE("dense_backward: finite differences over 100 parameterizations") {
  std::mt19937_64 rng(11);
  for (Activation act : {Activation::none, Activation::relu, Activation::tanh}) {
    double worst = 0;
    for (int trial = 0; trial < 100; ++trial) {
      DenseLayer<double> layer(5, 4, act);
      layer.initialize(rng);
      Tensor64 x = random_tensor({2, 5}, rng);
      while (act == Activation::relu && near_relu_kink(layer, x)) x = random_tensor({2, 5}, rng);
      Tensor64 c = random_tensor({2, 4}, rng);
      (void)layer.forward(x);
      auto g = layer.backward(c);

      std::vector<double*> coords;
      std::vector<double> analytic;
      for (std::size_t i = 0; i < x.size(); ++i) {
        coords.push_back(&x[i]);
        analytic.push_back(g.input_grad[i]);
      }
      for (std::size_t i = 0; i < layer.weights().size(); ++i) {
        coords.push_back(&layer.weights()[i]);
        analytic.push_back(g.weight_grad[i]);
      }
      for (std::size_t i = 0; i < layer.bias().size(); ++i) {
        coords.push_back(&layer.bias()[i]);
        analytic.push_back(g.bias_grad[i]);
      }
      auto r = testing::check_gradient(coords, analytic, [&] { return weighted_sum(layer, x, c); });
      worst = std::max(worst, r.max_rel_error);
    }
    INFO("activation " << to_string(act));
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("layernorm_forward: constant input maps to offset") {
  LayerNormLayer<float> ln(4, 1e-6, true);
  ln.offset() = Tensor({4}, {0.1f, 0.2f, 0.3f, 0.4f});
  Tensor y = ln.apply(Tensor({4}, 5.f));
  for (std::size_t i = 0; i < 4; ++i) CHECK(y[i] == doctest::Approx(ln.offset()[i]));
}

TEST_CASE("layernorm_forward: [1,3] normalizes to [-1,1]") {
  LayerNormLayer<double> ln(2, 1e-6, true);
  Tensor64 y = ln.apply(Tensor64({2}, {1.0, 3.0}));
  const double s = 1.0 / std::sqrt(1.0 + 1e-6);
  CHECK(y[0] == doctest::Approx(-s).epsilon(1e-12));
  CHECK(y[1] == doctest::Approx(s).epsilon(1e-12));
}

TEST_CASE("layernorm_forward: size mismatch") {
  LayerNormLayer<float> ln(4, 1e-6, true);
  CHECK_THROWS_AS((void)ln.apply(Tensor({3})), DimensionError);
}

TEST_CASE("layernorm_backward: finite differences over 100 parameterizations") {
  std::mt19937_64 rng(12);
  for (bool affine : {true, false}) {
    double worst = 0;
    for (int trial = 0; trial < 100; ++trial) {
      LayerNormLayer<double> ln(6, 1e-6, affine);
      ln.gain() = random_tensor({6}, rng);
      ln.offset() = random_tensor({6}, rng);
      Tensor64 x = random_tensor({3, 6}, rng);
      Tensor64 c = random_tensor({3, 6}, rng);
      (void)ln.forward(x);
      auto g = ln.backward(c);
      std::vector<double*> coords;
      std::vector<double> analytic;
      for (std::size_t i = 0; i < x.size(); ++i) {
        coords.push_back(&x[i]);
        analytic.push_back(g.input_grad[i]);
      }
      if (affine) {
        for (std::size_t i = 0; i < 6; ++i) {
          coords.push_back(&ln.gain()[i]);
          analytic.push_back(g.gain_grad[i]);
          coords.push_back(&ln.offset()[i]);
          analytic.push_back(g.offset_grad[i]);
        }
      }
      auto r = testing::check_gradient(coords, analytic, [&] { return weighted_sum(ln, x, c); });
      worst = std::max(worst, r.max_rel_error);
    }
    INFO("affine " << affine);
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("mlp forward is bit-identical across calls") {
  std::mt19937_64 rng(3);
  Mlp<float> mlp(8, {{16, Activation::relu}, {4, Activation::tanh}}, "m");
  mlp.initialize(rng);
  Tensor x({2, 8});
  std::normal_distribution<float> n;
  for (auto& v : x.values()) v = n(rng);
  CHECK(mlp.apply(x) == mlp.apply(x));
  CHECK(mlp.apply(x) == mlp.forward(x));
}

TEST_CASE("adam_step") {
  std::vector<float> value{1.0f};
  std::vector<float> grad{0.0f};
  std::vector<ParamRef<float>> params{{"w", value, grad}};

  SUBCASE("zero gradient leaves parameters unchanged") {
    AdamState s;
    adam_step(s, params);
    CHECK(value[0] == 1.0f);
    CHECK(s.step == 1);
  }
  SUBCASE("first step moves by about the learning rate") {
    AdamState s;
    grad[0] = 1.0f;
    adam_step(s, params);
    CHECK(1.0 - value[0] == doctest::Approx(1e-3).epsilon(1e-3));
  }
  SUBCASE("two opposite steps follow the closed form") {
    AdamState s;
    grad[0] = 1.0f;
    adam_step(s, params);
    grad[0] = -1.0f;
    adam_step(s, params);
    // m2 = -0.01, v2 = 0.001999; bias-corrected: mhat = -0.01/0.19, vhat = 1.
    const double lr = 1e-3;
    const double second = -(-0.01 / 0.19) / (1.0 + 1e-8);
    const double expected = 1.0 - lr / (1.0 + 1e-8) + lr * second;
    CHECK(value[0] == doctest::Approx(expected).epsilon(1e-6));
    CHECK(std::abs(value[0] - 1.0) < 1e-3);
  }
  SUBCASE("non-finite gradient names the parameter") {
    AdamState s;
    grad[0] = std::nanf("");
    try {
      adam_step(s, params);
      FAIL("expected TrainingError");
    } catch (const TrainingError& e) {
      CHECK(std::string(e.what()).find("w") != std::string::npos);
    }
    CHECK(value[0] == 1.0f);
  }
}

TEST_CASE("parameter_count: reference codec layers") {
  CHECK(parameter_count(LayerSpec{LayerKind::dense, 16384, 8192}) == 134225920u);
  CHECK(parameter_count(LayerSpec{LayerKind::dense, 9000, 16384}) == 147472384u);
  CHECK(parameter_count(LayerSpec{LayerKind::layernorm, 16384, 16384}) == 32768u);
  CHECK(parameter_count(LayerSpec{LayerKind::normalize, 16384, 16384}) == 0u);
}

TEST_CASE("parameter_count is additive and matches allocated layers") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> d(1, 40);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<LayerSpec> a{{LayerKind::dense, d(rng), d(rng)}, {LayerKind::layernorm, d(rng), 0}};
    std::vector<LayerSpec> b{{LayerKind::dense, d(rng), d(rng)}, {LayerKind::normalize, d(rng), 0}};
    std::vector<LayerSpec> ab = a;
    ab.insert(ab.end(), b.begin(), b.end());
    CHECK(parameter_count(ab) == parameter_count(a) + parameter_count(b));
    DenseLayer<float> dl(a[0].in_features, a[0].out_features, Activation::relu);
    CHECK(dl.parameter_count() == parameter_count(a[0]));
    LayerNormLayer<float> ln(a[1].in_features, 1e-6, true);
    CHECK(ln.parameter_count() == parameter_count(a[1]));
  }
}

TEST_CASE("network file round-trips bit-exactly") {
  std::mt19937_64 rng(9);
  Mlp<float> mlp(6, {{5, Activation::relu}, {3, Activation::none}}, "net");
  mlp.initialize(rng);
  LayerNormLayer<float> ln(3, 1e-6, true, "ln");
  ln.gain()[1] = -0.0f;
  ln.offset()[2] = std::numeric_limits<float>::denorm_min();

  NetworkFile file;
  file.metadata = {{"kind", "test"}, {"f_c", "0.5"}};
  append_records(mlp, file.layers);
  file.layers.push_back(to_record(ln));
  file.layers.push_back(to_record(LayerNormLayer<float>(5, 1e-6, false, "norm")));

  auto bytes = encode_network(file);
  NetworkFile back = decode_network(bytes);
  CHECK(back == file);
  CHECK(encode_network(back) == bytes);

  Mlp<float> restored = mlp_from_records(std::span(back.layers).first(2));
  Tensor x({6}, {1, 2, 3, 4, 5, 6});
  CHECK(restored.apply(x) == mlp.apply(x));
  CHECK(layernorm_from_record(back.layers[2]).offset() == ln.offset());
  CHECK(back.get("f_c") == "0.5");
}

TEST_CASE("network file rejects corrupt input") {
  NetworkFile file;
  file.layers.push_back(to_record(DenseLayer<float>(2, 2, Activation::none, "d")));
  auto bytes = encode_network(file);
  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_network(bad), FrameError);
  bad = bytes;
  bad.resize(bad.size() - 3);
  CHECK_THROWS_AS(decode_network(bad), FrameError);
  bad = bytes;
  bad[4] = 9;
  CHECK_THROWS_AS(decode_network(bad), FrameError);
}
