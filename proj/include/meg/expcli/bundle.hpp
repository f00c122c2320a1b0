#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "meg/expcli/config.hpp"
#include "meg/protocol/protocol.hpp"

namespace meg::expcli {

using Logger = std::function<void(const std::string&)>;

/// Cache keys of the training stages. Each stage key covers its own
/// settings and the key of the stage it depends on.
struct StageKeys {
  std::string autoencoder;
  std::string denoiser;
  std::vector<std::string> codecs;  // in compression_rates order
};

StageKeys stage_keys(const ExperimentConfig& config);

std::filesystem::path bundle_dir(const ExperimentConfig& config);
std::string codec_file_name(double compression_rate);

struct StageOutcome {
  std::string stage;
  std::string file;
  bool cached = false;
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<StageOutcome> stages;
  std::filesystem::path manifest;
};

/// Trains autoencoder, denoiser and one codec per compression rate in
/// dependency order. A stage whose file carries the expected key is reused.
TrainReport cmd_train(const ExperimentConfig& config, const Logger& log = {});

/// Loads a complete bundle. Throws ConfigError naming the missing or
/// stale file and the command that rebuilds it.
protocol::Deployment load_bundle(const ExperimentConfig& config);

/// Deployment pieces that do not need training.
genmodel::NoiseSchedule make_schedule(const ExperimentConfig& config);
std::shared_ptr<const metrics::FeatureExtractor> make_extractor(const ExperimentConfig& config);

/// Content hash of a file (FNV-1a 64, hex).
std::string file_hash(const std::filesystem::path& path);

}  // namespace meg::expcli
