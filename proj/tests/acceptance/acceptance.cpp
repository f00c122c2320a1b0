// Acceptance run: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <random>
#include <string>

#include "meg/channel/channel.hpp"
#include "meg/expcli/power.hpp"
#include "meg/expcli/sweep.hpp"
#include "meg/expcli/table.hpp"
#include "meg/genmodel/diffusion.hpp"
#include "meg/genmodel/prompt.hpp"
#include "meg/metrics/metrics.hpp"
#include "meg/nn/layers.hpp"
#include "meg/protocol/frame.hpp"
#include "meg/seedcodec/codec.hpp"
#include "support/gradcheck.hpp"

using namespace meg;
using metrics::TransmissionMode;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void run(int id, const std::string& name, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("criterion %2d %-28s %s  %s  [%.2f s]\n", id, name.c_str(), o.pass ? "PASS" : "FAIL", o.detail.c_str(), s);
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

std::string fmt(const char* f, double a) {
  char buf[96];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::vector<float> gaussian(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<float> nd;
  std::vector<float> v(n);
  for (auto& x : v) x = nd(rng);
  return v;
}

// Predicts the noise that carries z_t exactly back to a known z0.
class ExactNoise final : public genmodel::NoisePredictor {
 public:
  ExactNoise(std::vector<float> z0, const genmodel::NoiseSchedule& s) : z0_(std::move(z0)), s_(s) {}
  std::vector<float> predict(std::span<const float> z_t, std::size_t t, std::span<const float>) const override {
    const double a = s_.alpha_bar(t);
    std::vector<float> out(z_t.size());
    for (std::size_t i = 0; i < z_t.size(); ++i) {
      out[i] = static_cast<float>((z_t[i] - std::sqrt(a) * z0_[i]) / std::sqrt(1.0 - a));
    }
    return out;
  }

 private:
  std::vector<float> z0_;
  genmodel::NoiseSchedule s_;
};

nn::Tensor64 random_tensor(nn::Shape shape, std::mt19937_64& rng) {
  nn::Tensor64 t(std::move(shape));
  std::normal_distribution<double> n;
  for (auto& v : t.values()) v = n(rng);
  return t;
}

template <typename Layer>
double weighted_sum(const Layer& layer, const nn::Tensor64& x, const nn::Tensor64& c) {
  const nn::Tensor64 y = layer.apply(x);
  double s = 0;
  for (std::size_t i = 0; i < y.size(); ++i) s += c[i] * y[i];
  return s;
}

bool near_kink(const nn::DenseLayer<double>& layer, const nn::Tensor64& x) {
  nn::DenseLayer<double> probe(layer.in_features(), layer.out_features(), nn::Activation::none);
  probe.weights() = layer.weights();
  probe.bias() = layer.bias();
  const nn::Tensor64 pre = probe.apply(x);
  for (double v : pre.values()) {
    if (std::abs(v) < 1e-3) return true;
  }
  return false;
}

double dense_worst(nn::Activation act, std::mt19937_64& rng) {
  double worst = 0;
  for (int trial = 0; trial < 50; ++trial) {
    nn::DenseLayer<double> layer(5, 4, act);
    layer.initialize(rng);
    auto x = random_tensor({2, 5}, rng);
    while (act == nn::Activation::relu && near_kink(layer, x)) x = random_tensor({2, 5}, rng);
    const auto c = random_tensor({2, 4}, rng);
    (void)layer.forward(x);
    const auto g = layer.backward(c);
    std::vector<double*> coords;
    std::vector<double> analytic;
    for (std::size_t i = 0; i < x.size(); ++i) coords.push_back(&x[i]), analytic.push_back(g.input_grad[i]);
    for (std::size_t i = 0; i < layer.weights().size(); ++i)
      coords.push_back(&layer.weights()[i]), analytic.push_back(g.weight_grad[i]);
    for (std::size_t i = 0; i < layer.bias().size(); ++i)
      coords.push_back(&layer.bias()[i]), analytic.push_back(g.bias_grad[i]);
    worst = std::max(worst, testing::check_gradient(coords, analytic, [&] { return weighted_sum(layer, x, c); }).max_rel_error);
  }
  return worst;
}

double layernorm_worst(bool affine, std::mt19937_64& rng) {
  double worst = 0;
  for (int trial = 0; trial < 50; ++trial) {
    nn::LayerNormLayer<double> ln(6, 1e-6, affine);
    ln.gain() = random_tensor({6}, rng);
    ln.offset() = random_tensor({6}, rng);
    auto x = random_tensor({3, 6}, rng);
    const auto c = random_tensor({3, 6}, rng);
    (void)ln.forward(x);
    const auto g = ln.backward(c);
    std::vector<double*> coords;
    std::vector<double> analytic;
    for (std::size_t i = 0; i < x.size(); ++i) coords.push_back(&x[i]), analytic.push_back(g.input_grad[i]);
    if (affine) {
      for (std::size_t i = 0; i < 6; ++i) {
        coords.push_back(&ln.gain()[i]), analytic.push_back(g.gain_grad[i]);
        coords.push_back(&ln.offset()[i]), analytic.push_back(g.offset_grad[i]);
      }
    }
    worst = std::max(worst, testing::check_gradient(coords, analytic, [&] { return weighted_sum(ln, x, c); }).max_rel_error);
  }
  return worst;
}

double composition_worst(std::mt19937_64& rng) {
  double worst = 0;
  std::uniform_real_distribution<double> u(-1, 1);
  for (int trial = 0; trial < 5; ++trial) {
    seedcodec::CodecNet<double> net(12, 6, 5);
    net.initialize(rng);
    for (auto& p : net.parameters()) {
      if (p.name.find("codec.dec.5") != std::string::npos) {
        for (auto& v : p.value) v = 1.0 + 0.3 * u(rng);
      }
    }
    nn::Tensor64 z({3, 12});
    nn::Tensor64 noise({3, 6});
    for (auto& v : z.values()) v = u(rng);
    for (auto& v : noise.values()) v = 0.4 * u(rng);
    net.zero_grad();
    (void)seedcodec::codec_batch_loss(net, z, noise, true);
    std::vector<double*> coords;
    std::vector<double> analytic;
    for (auto& p : net.parameters()) {
      for (std::size_t i = 0; i < p.value.size(); ++i) coords.push_back(&p.value[i]), analytic.push_back(p.grad[i]);
    }
    worst = std::max(worst, testing::check_gradient(coords, analytic, [&] {
                              return seedcodec::codec_batch_loss(net, z, noise, false);
                            }).max_rel_error);
  }
  return worst;
}

protocol::SeedFrame random_frame(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::uint32_t> bits;
  std::uniform_int_distribution<std::size_t> len(0, 300);
  protocol::SeedFrame f;
  f.compression_q16 = static_cast<std::uint16_t>(bits(rng));
  f.latent_channels = static_cast<std::uint16_t>(bits(rng));
  f.latent_height = static_cast<std::uint16_t>(bits(rng));
  f.latent_width = static_cast<std::uint16_t>(bits(rng));
  f.scale = std::bit_cast<float>(bits(rng));
  f.block_length = 1 + bits(rng) % 4096;
  f.payload.resize(len(rng));
  for (auto& v : f.payload) v = std::bit_cast<float>(bits(rng));
  return f;
}

}  // namespace

int main(int argc, char** argv) {
  const std::string work = argc > 1 ? argv[1] : "acceptance_run";
  expcli::ExperimentConfig desk = expcli::preset_config(expcli::Preset::desk);
  desk.out = work;
  const expcli::ExperimentConfig paper = expcli::preset_config(expcli::Preset::paper_arithmetic);

  run(1, "symbol counts", [&] {
    const auto t = expcli::table_report(paper);
    const std::size_t expected[] = {1048576, 16384, 1638, 4915, 8192, 11469, 14746};
    bool ok = t.symbols.size() == 7;
    std::string got;
    for (std::size_t i = 0; ok && i < 7; ++i) {
      ok = ok && t.symbols[i].symbols == expected[i];
      got += (i ? "/" : "") + std::to_string(t.symbols[i].symbols);
    }
    return Outcome{ok, got};
  });

  run(2, "codec parameter counts", [&] {
    const auto t = expcli::table_report(paper);
    const auto& b = t.parameters.at(2);
    const std::size_t expected[] = {134225920, 134234112, 0, 147465000, 0, 147472384, 32768};
    bool ok = b.compression_rate == 0.5 && b.layers.size() == 7 && b.total == 563430184;
    for (std::size_t i = 0; ok && i < 7; ++i) ok = b.layers[i].parameters == expected[i];
    return Outcome{ok, "total " + std::to_string(b.total)};
  });

  run(3, "ddim algebra", [&] {
    std::mt19937_64 rng(2024);
    const auto emb = genmodel::embed_prompt("dim circle right");
    double worst = 0;
    for (int trial = 0; trial < 100; ++trial) {
      std::uniform_int_distribution<std::size_t> steps(1, 60);
      const auto s = genmodel::NoiseSchedule::linear(steps(rng));
      const auto z0 = gaussian(128, rng);
      const auto zT = genmodel::diffuse_forward(z0, s.steps(), gaussian(128, rng), s);
      const ExactNoise oracle(z0, s);
      const auto back = genmodel::generate_latent(oracle, emb, zT, s);
      for (std::size_t i = 0; i < z0.size(); ++i) worst = std::max(worst, std::abs(double(back[i]) - z0[i]));
    }
    genmodel::DenoiserConfig dc;
    dc.hidden = {{32, nn::Activation::relu}};
    const genmodel::Denoiser den(128, emb.pooled().size(), dc);
    const auto s = genmodel::NoiseSchedule::linear(10);
    const auto noise = genmodel::initial_noise(128, 5);
    const bool identical = genmodel::generate_latent(den, emb, noise, s) == genmodel::generate_latent(den, emb, noise, s);
    return Outcome{worst < 1e-5 && identical, fmt("max |z0 error| %.2e", worst) + (identical ? ", sigma=0 bit-identical" : ", sigma=0 differs")};
  });

  run(4, "gradient integrity", [&] {
    std::mt19937_64 rng(4);
    double layers = 0;
    for (auto act : {nn::Activation::none, nn::Activation::relu, nn::Activation::tanh}) {
      layers = std::max(layers, dense_worst(act, rng));
    }
    layers = std::max(layers, layernorm_worst(true, rng));
    layers = std::max(layers, layernorm_worst(false, rng));
    const double comp = composition_worst(rng);
    return Outcome{layers < 1e-4 && comp < 1e-3, fmt("layers %.2e", layers) + fmt(", composition %.2e", comp)};
  });

  run(5, "metric properties", [&] {
    std::mt19937_64 rng(5);
    metrics::FeatureExtractor fx(64, 16);
    std::vector<std::vector<float>> batch;
    std::uniform_real_distribution<float> u(0, 1);
    for (int i = 0; i < 20; ++i) {
      batch.emplace_back(64);
      for (auto& v : batch.back()) v = u(rng);
    }
    const double self = metrics::fid(batch, batch, fx);

    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(5, 3), b = Eigen::MatrixXd::Zero(7, 3);
    a.rowwise() = Eigen::RowVector3d(1.0, -2.0, 0.5);
    b.rowwise() = Eigen::RowVector3d(0.0, 1.0, 2.5);
    const double point = std::abs(metrics::frechet_distance(a, b) - 14.0);

    const int n = 10000;
    std::normal_distribution<double> g1(0.5, 1.0), g2(-1.0, 2.0);
    Eigen::MatrixXd x(n, 1), y(n, 1);
    for (int i = 0; i < n; ++i) x(i, 0) = g1(rng), y(i, 0) = g2(rng);
    const double closed = 1.5 * 1.5 + 1.0;
    const double gauss = std::abs(metrics::frechet_distance(x, y) - closed) / closed;

    const std::vector<float> black(64, 0.0f), white(64, 255.0f);
    const double p = metrics::psnr(black, white, 255.0);
    const bool ok = std::abs(self) < 1e-6 && point < 1e-6 && gauss < 0.05 && p == 0.0;
    return Outcome{ok, fmt("fid(X,X) %.1e", self) + fmt(", point mass err %.1e", point) +
                           fmt(", gaussian rel err %.3f", gauss) + fmt(", psnr %.1f dB", p)};
  });

  std::optional<protocol::Deployment> deployment;
  std::string train_note;
  try {
    const auto report = expcli::cmd_train(desk);
    std::size_t hits = 0;
    for (const auto& s : report.stages) hits += s.cached;
    deployment = expcli::load_bundle(desk);
    train_note = std::to_string(hits) + "/" + std::to_string(report.stages.size()) + " stages cached";
  } catch (const std::exception& e) {
    train_note = std::string("training failed: ") + e.what();
  }

  run(6, "low-SNR ordering", [&] {
    if (!deployment) return Outcome{false, train_note};
    expcli::ExperimentConfig c = desk;
    c.snr_db = {-10.0, 30.0};
    c.trials = 7;
    const auto res = expcli::run_sweep(c, *deployment);
    const double fc = c.power.compression_rate;
    const double fid_m = expcli::cell_median(res, TransmissionMode::meg, fc, -10, false);
    const double fid_r = expcli::cell_median(res, TransmissionMode::raw_feature, fc, -10, false);
    const double fid_c = expcli::cell_median(res, TransmissionMode::centralized, fc, -10, false);
    const double psnr_r = expcli::cell_median(res, TransmissionMode::raw_feature, fc, 30, true);
    const double psnr_m = expcli::cell_median(res, TransmissionMode::meg, fc, 30, true);
    const bool ok = fid_m < fid_r && fid_r < fid_c && psnr_r >= psnr_m;
    return Outcome{ok, train_note + "; -10 dB fid meg " + fmt("%.4f", fid_m) + " < raw " + fmt("%.4f", fid_r) +
                           " < central " + fmt("%.4f", fid_c) + "; +30 dB psnr raw " + fmt("%.2f", psnr_r) +
                           " >= meg " + fmt("%.2f", psnr_m) + " (" + std::to_string(c.trials) + " trials, f_c " +
                           expcli::format_number(fc) + ")"};
  });

  run(7, "channel statistics", [&] {
    const auto tr = channel::sample_fading_trace({channel::ChannelKind::rayleigh_block, 16, 0.0}, 100000, 7);
    double m2 = 0;
    for (double h : tr.gains) m2 += h * h;
    m2 /= static_cast<double>(tr.gains.size());
    std::mt19937_64 rng(7);
    const double sigma = 0.7;
    const auto noise = channel::transmit(std::vector<float>(100000, 0.0f), 1.0, 1.0, sigma, rng);
    double s = 0, sq = 0;
    for (float v : noise) s += v, sq += double(v) * v;
    const double var = sq / noise.size() - (s / noise.size()) * (s / noise.size());
    const double var_err = std::abs(var / (sigma * sigma) - 1.0);
    double ident = 0;
    const auto x = gaussian(4096, rng);
    for (double h : {0.05, 0.7, 1.0, 2.3}) {
      for (double p : {0.1, 1.0, 5.0}) {
        const auto y = channel::equalize(channel::transmit(x, h, p, 0.0, rng), h, p);
        for (std::size_t i = 0; i < x.size(); ++i) ident = std::max(ident, std::abs(double(y[i]) - x[i]));
      }
    }
    const bool ok = std::abs(m2 - 1.0) <= 0.02 && var_err <= 0.02 && ident < 1e-5;
    return Outcome{ok, fmt("E[h^2] %.4f", m2) + fmt(", noise var rel err %.4f", var_err) + fmt(", identity err %.1e", ident)};
  });

  std::optional<expcli::PowerResult> power;
  std::string power_error;
  if (deployment) {
    try {
      power = expcli::run_power(desk, *deployment);
    } catch (const std::exception& e) {
      power_error = e.what();
    }
  }

  run(8, "power budget", [&] {
    if (!power) return Outcome{false, deployment ? power_error : train_note};
    const auto& a = power->audit;
    return Outcome{a.violations == 0 && a.steps >= 10000,
                   std::to_string(a.episodes) + " episodes, " + std::to_string(a.steps) + " steps, " +
                       std::to_string(a.violations) + " violations"};
  });

  run(9, "ppo efficacy", [&] {
    if (!power) return Outcome{false, deployment ? power_error : train_note};
    std::size_t tight = 0;
    for (std::size_t i = 1; i < power->rows.size(); ++i) {
      if (power->rows[i].p_max < power->rows[tight].p_max) tight = i;
    }
    const auto& r = power->rows[tight];
    std::string gaps;
    for (const auto& row : power->rows) {
      gaps += (gaps.empty() ? "" : ", ") + expcli::format_number(row.p_max) + " mW " + fmt("%+.4f", row.comparison.mean_difference);
    }
    const bool ok = r.comparison.mean_difference > 0.0 && r.comparison.p_value < 0.05;
    return Outcome{ok, "p_max " + expcli::format_number(r.p_max) + " mW: mean reward gain " +
                           fmt("%.4f", r.comparison.mean_difference) + ", wins " + std::to_string(r.comparison.wins) +
                           "/" + std::to_string(r.comparison.wins + r.comparison.losses) +
                           fmt(", sign-test p %.2e", r.comparison.p_value) + " (gains " + gaps + ")"};
  });

  run(10, "protocol exactness", [&] {
    std::mt19937_64 rng(10);
    std::size_t mismatches = 0;
    for (int i = 0; i < 10000; ++i) {
      const auto f = random_frame(rng);
      const auto bytes = protocol::encode_frame(f);
      if (protocol::encode_frame(protocol::decode_frame(bytes)) != bytes) ++mismatches;
    }
    if (!deployment) return Outcome{false, std::to_string(mismatches) + " frame mismatches; " + train_note};
    double worst = 0;
    for (auto kind : {channel::ChannelKind::awgn, channel::ChannelKind::rayleigh_block}) {
      for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        protocol::EndToEndConfig cfg;
        cfg.request = {"bright ring left", 0.5, desk.geometry, seed};
        cfg.link.channel = kind;
        cfg.link.snr_db = std::numeric_limits<double>::infinity();
        cfg.link.trace_seed = seed;
        cfg.modes = {TransmissionMode::meg};
        const auto res = protocol::run_end_to_end(*deployment, cfg);
        const auto es = protocol::es_handle_request(*deployment, cfg.request, cfg.link.block_length);
        const auto& codec = deployment->codec_for(0.5);
        const auto local = deployment->autoencoder->decode(seedcodec::decompress(codec, es.seed.symbols, es.seed.scale));
        const auto& img = res.results[0].image;
        for (std::size_t i = 0; i < img.values.size(); ++i) {
          worst = std::max(worst, std::abs(double(img.values[i]) - local.values[i]));
        }
      }
    }
    return Outcome{mismatches == 0 && worst < 1e-6,
                   "10000 frames, " + std::to_string(mismatches) + " mismatches; noiseless image error " + fmt("%.1e", worst)};
  });

  std::printf("%d criteria failed\n", failures);
  return failures;
}
