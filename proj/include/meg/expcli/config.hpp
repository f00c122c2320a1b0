#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "meg/genmodel/autoencoder.hpp"
#include "meg/genmodel/diffusion.hpp"
#include "meg/geometry.hpp"
#include "meg/powerrl/environment.hpp"
#include "meg/seedcodec/codec.hpp"

namespace meg::expcli {

enum class Preset { desk, paper_arithmetic };

std::string to_string(Preset p);
Preset parse_preset(const std::string& s);

struct ExperimentConfig {
  Preset preset = Preset::desk;
  std::uint64_t seed = 1;
  ImageGeometry geometry;

  std::size_t corpus_variants = 8;
  std::size_t autoencoder_hidden = 256;
  genmodel::AutoencoderConfig autoencoder;

  std::size_t diffusion_steps = 10;
  double eta = 0.0;
  std::size_t denoiser_hidden = 256;
  genmodel::DenoiserConfig denoiser;

  std::vector<double> compression_rates{0.1, 0.3, 0.5, 0.7, 0.9};
  std::size_t codec_latents = 400;
  seedcodec::CodecTrainConfig codec;

  std::size_t feature_size = 64;
  std::uint64_t feature_seed = 0xFEED;

  std::vector<double> snr_db{-10.0, 0.0, 10.0, 20.0, 30.0};
  std::size_t trials = 5;
  channel::ChannelKind sweep_channel = channel::ChannelKind::rayleigh_block;
  std::size_t sweep_block_length = 16;

  std::vector<double> p_max{1.0, 2.0, 3.0};
  powerrl::PowerEnvConfig power;
  powerrl::TrainConfig power_train;
  std::size_t test_traces = 100;

  // Runtime only; not part of the hash.
  std::filesystem::path out = "runs";
  std::size_t jobs = 1;

  /// Throws ConfigError on any inconsistent setting.
  void validate() const;
};

/// Defaults of a preset.
ExperimentConfig preset_config(Preset p);

/// One `key = value` entry of the config file.
struct ConfigField {
  std::string section;
  std::string key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  bool hashed = true;
};

const std::vector<ConfigField>& config_fields();

/// Applies the entries of an INI file on top of `base`. Unknown sections
/// or keys are errors. A `run.preset` entry is ignored here.
void apply_ini(ExperimentConfig& base, const std::filesystem::path& path);
void apply_ini_text(ExperimentConfig& base, const std::string& text);

/// Preset named in the file, if any.
std::string preset_in_file(const std::filesystem::path& path);

/// Sorted `[section]` / `key = value` text of every hashed field.
std::string canonical_form(const ExperimentConfig& config);
/// Canonical text including runtime fields.
std::string full_form(const ExperimentConfig& config);

/// FNV-1a 64 as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view bytes);
std::uint64_t fnv1a(std::string_view bytes);

std::string config_hash(const ExperimentConfig& config);

/// Canonical lines of the given sections only.
std::string section_text(const ExperimentConfig& config, const std::vector<std::string>& sections);

/// Deterministic 64-bit mix of two values.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

/// Shortest round-trip decimal form.
std::string format_number(double v);

}  // namespace meg::expcli
