#include "meg/expcli/bundle.hpp"

#include <chrono>
#include <fstream>
#include <iterator>

#include "json.hpp"
#include "meg/errors.hpp"
#include "meg/genmodel/corpus.hpp"

namespace meg::expcli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kStageKey = "stage_key";

std::string rate_tag(double r) { return "rate=" + format_number(r) + "\n"; }

genmodel::AutoencoderConfig autoencoder_config(const ExperimentConfig& c) {
  genmodel::AutoencoderConfig a = c.autoencoder;
  a.decoder_hidden = {{c.autoencoder_hidden, nn::Activation::tanh}};
  a.seed = mix_seed(c.seed, 101);
  return a;
}

genmodel::DenoiserConfig denoiser_config(const ExperimentConfig& c) {
  genmodel::DenoiserConfig d = c.denoiser;
  d.hidden = {{c.denoiser_hidden, nn::Activation::relu}, {c.denoiser_hidden, nn::Activation::relu}};
  d.seed = mix_seed(c.seed, 102);
  return d;
}

seedcodec::CodecTrainConfig codec_config(const ExperimentConfig& c, double rate) {
  seedcodec::CodecTrainConfig t = c.codec;
  t.seed = mix_seed(mix_seed(c.seed, 103), static_cast<std::uint64_t>(std::llround(rate * 65536.0)));
  t.corpus_seed = mix_seed(c.seed, 104);
  return t;
}

std::optional<nn::NetworkFile> cached(const fs::path& path, const std::string& key) {
  if (!fs::exists(path)) return std::nullopt;
  try {
    nn::NetworkFile f = nn::load_network(path.string());
    const std::string* k = f.find(kStageKey);
    if (k && *k == key) return f;
  } catch (const std::exception&) {
  }
  return std::nullopt;
}

void save_with_key(const fs::path& path, nn::NetworkFile file, const std::string& key) {
  file.metadata.emplace_back(kStageKey, key);
  const fs::path tmp = path.string() + ".tmp";
  nn::save_network(tmp.string(), file);
  fs::rename(tmp, path);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void require_trainable(const ExperimentConfig& c) {
  if (c.preset == Preset::paper_arithmetic) {
    throw ConfigError("the paper-arithmetic preset only supports `meg table`; train and run with --preset desk");
  }
}

template <typename F>
auto run_stage(const std::string& stage, F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw TrainingError("stage " + stage + " failed: " + e.what());
  }
}

}  // namespace

StageKeys stage_keys(const ExperimentConfig& config) {
  StageKeys k;
  const std::string base = "seed=" + std::to_string(config.seed) + "\n";
  k.autoencoder = fnv1a_hex(base + section_text(config, {"geometry", "autoencoder"}));
  k.denoiser = fnv1a_hex(k.autoencoder + "\n" + section_text(config, {"diffusion"}));
  ExperimentConfig shared = config;
  shared.compression_rates = {0.5};
  const std::string codec_text = k.denoiser + "\n" + section_text(shared, {"codec"});
  for (double r : config.compression_rates) k.codecs.push_back(fnv1a_hex(codec_text + rate_tag(r)));
  return k;
}

fs::path bundle_dir(const ExperimentConfig& config) { return config.out / "bundle"; }

std::string codec_file_name(double compression_rate) { return "codec_fc" + format_number(compression_rate) + ".bin"; }

genmodel::NoiseSchedule make_schedule(const ExperimentConfig& config) {
  return genmodel::NoiseSchedule::linear(config.diffusion_steps, config.eta);
}

std::shared_ptr<const metrics::FeatureExtractor> make_extractor(const ExperimentConfig& config) {
  return std::make_shared<metrics::FeatureExtractor>(config.geometry.pixel_count(), config.feature_size,
                                                     config.feature_seed);
}

std::string file_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return fnv1a_hex(bytes);
}

TrainReport cmd_train(const ExperimentConfig& config, const Logger& log) {
  config.validate();
  require_trainable(config);
  const auto say = [&](const std::string& m) {
    if (log) log(m);
  };
  const fs::path dir = bundle_dir(config);
  fs::create_directories(dir);
  const StageKeys keys = stage_keys(config);
  const auto schedule = make_schedule(config);
  TrainReport report;

  const auto ae_path = dir / "autoencoder.bin";
  auto t0 = std::chrono::steady_clock::now();
  std::optional<genmodel::Autoencoder> ae;
  std::vector<genmodel::CorpusItem> corpus;
  const auto load_corpus = [&] {
    if (corpus.empty()) corpus = genmodel::make_corpus(config.geometry, config.corpus_variants, mix_seed(config.seed, 100));
  };
  if (auto f = cached(ae_path, keys.autoencoder)) {
    ae = genmodel::Autoencoder::from_file(*f);
    report.stages.push_back({"autoencoder", ae_path.filename().string(), true, seconds_since(t0)});
    say("autoencoder: cached");
  } else {
    say("autoencoder: training");
    ae = run_stage("autoencoder", [&] {
      load_corpus();
      std::vector<genmodel::PixelImage> images;
      for (const auto& c : corpus) images.push_back(c.image);
      return genmodel::train_autoencoder(images, config.geometry, autoencoder_config(config));
    });
    save_with_key(ae_path, ae->to_file(), keys.autoencoder);
    report.stages.push_back({"autoencoder", ae_path.filename().string(), false, seconds_since(t0)});
    say("autoencoder: done in " + format_number(std::round(report.stages.back().seconds * 10) / 10) + " s");
  }

  const auto den_path = dir / "denoiser.bin";
  t0 = std::chrono::steady_clock::now();
  std::optional<genmodel::Denoiser> den;
  if (auto f = cached(den_path, keys.denoiser)) {
    den = genmodel::Denoiser::from_file(*f);
    report.stages.push_back({"denoiser", den_path.filename().string(), true, seconds_since(t0)});
    say("denoiser: cached");
  } else {
    say("denoiser: training");
    den = run_stage("denoiser", [&] {
      load_corpus();
      std::vector<genmodel::PixelImage> images;
      std::vector<std::string> prompts;
      for (const auto& c : corpus) {
        images.push_back(c.image);
        prompts.push_back(c.prompt);
      }
      const auto examples = genmodel::diffusion_examples(*ae, prompts, images);
      return genmodel::train_denoiser(examples, schedule, denoiser_config(config));
    });
    save_with_key(den_path, den->to_file(), keys.denoiser);
    report.stages.push_back({"denoiser", den_path.filename().string(), false, seconds_since(t0)});
    say("denoiser: done in " + format_number(std::round(report.stages.back().seconds * 10) / 10) + " s");
  }

  std::vector<std::vector<float>> latents;
  const auto prompts = genmodel::all_prompts();
  for (std::size_t i = 0; i < config.compression_rates.size(); ++i) {
    const double rate = config.compression_rates[i];
    const auto path = dir / codec_file_name(rate);
    const std::string stage = "codec f_c=" + format_number(rate);
    t0 = std::chrono::steady_clock::now();
    if (cached(path, keys.codecs[i])) {
      report.stages.push_back({stage, path.filename().string(), true, seconds_since(t0)});
      say(stage + ": cached");
      continue;
    }
    say(stage + ": training");
    const auto pair = run_stage(stage, [&] {
      if (latents.empty()) {
        const std::uint64_t base = mix_seed(config.seed, 104);
        for (std::size_t j = 0; j < config.codec_latents; ++j) {
          const auto noise = genmodel::initial_noise(config.geometry.latent_count(), mix_seed(base, j));
          latents.push_back(
              genmodel::generate_latent(*den, prompts[j % prompts.size()], noise, schedule, config.geometry).values);
        }
      }
      return seedcodec::train_codec(latents, genmodel::LatentFeature::zeros(config.geometry), rate,
                                    codec_config(config, rate));
    });
    save_with_key(path, pair.to_file(), keys.codecs[i]);
    report.stages.push_back({stage, path.filename().string(), false, seconds_since(t0)});
    say(stage + ": done in " + format_number(std::round(report.stages.back().seconds * 10) / 10) + " s");
  }

  nlohmann::ordered_json manifest;
  manifest["schema"] = 1;
  manifest["config_hash"] = config_hash(config);
  manifest["files"] = nlohmann::ordered_json::array();
  const std::vector<std::string> stage_key_list = [&] {
    std::vector<std::string> v{keys.autoencoder, keys.denoiser};
    v.insert(v.end(), keys.codecs.begin(), keys.codecs.end());
    return v;
  }();
  for (std::size_t i = 0; i < report.stages.size(); ++i) {
    const auto& s = report.stages[i];
    const fs::path p = dir / s.file;
    manifest["files"].push_back({{"stage", s.stage},
                                 {"file", s.file},
                                 {"stage_key", stage_key_list[i]},
                                 {"bytes", fs::file_size(p)},
                                 {"fnv1a64", file_hash(p)}});
  }
  report.manifest = dir / "manifest.json";
  std::ofstream(report.manifest) << manifest.dump(2) << "\n";
  return report;
}

protocol::Deployment load_bundle(const ExperimentConfig& config) {
  config.validate();
  require_trainable(config);
  const fs::path dir = bundle_dir(config);
  const StageKeys keys = stage_keys(config);
  const auto load = [&](const std::string& name, const std::string& key) {
    const fs::path p = dir / name;
    if (!fs::exists(p)) {
      throw ConfigError("missing model file " + p.string() + "; run `meg train` with the same config and --out first");
    }
    auto f = cached(p, key);
    if (!f) {
      throw ConfigError("model file " + p.string() +
                        " was trained with different settings; rerun `meg train` with this config");
    }
    return *f;
  };
  protocol::Deployment d;
  d.geometry = config.geometry;
  d.schedule = make_schedule(config);
  d.autoencoder = std::make_shared<genmodel::Autoencoder>(genmodel::Autoencoder::from_file(load("autoencoder.bin", keys.autoencoder)));
  d.denoiser = std::make_shared<genmodel::Denoiser>(genmodel::Denoiser::from_file(load("denoiser.bin", keys.denoiser)));
  for (std::size_t i = 0; i < config.compression_rates.size(); ++i) {
    d.codecs.push_back(std::make_shared<seedcodec::CodecPair>(
        seedcodec::CodecPair::from_file(load(codec_file_name(config.compression_rates[i]), keys.codecs[i]))));
  }
  d.extractor = make_extractor(config);
  d.validate();
  return d;
}

}  // namespace meg::expcli
