#include "meg/expcli/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "meg/errors.hpp"

namespace meg::expcli {

std::string to_string(Preset p) { return p == Preset::desk ? "desk" : "paper-arithmetic"; }

Preset parse_preset(const std::string& s) {
  if (s == "desk") return Preset::desk;
  if (s == "paper-arithmetic") return Preset::paper_arithmetic;
  throw ConfigError("unknown preset '" + s + "' (expected desk or paper-arithmetic)");
}

std::string format_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string fnv1a_hex(std::string_view bytes) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(bytes)));
  return buf;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a * 0x9E3779B97F4A7C15ull ^ (b + 0xBF58476D1CE4E5B9ull + (a << 6) + (a >> 2));
  x ^= x >> 31;
  x *= 0x94D049BB133111EBull;
  return x ^ (x >> 29);
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& text, const std::string& name) {
  const std::string s = trim(text);
  if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size() || std::isnan(v)) {
    throw ConfigError(name + ": '" + text + "' is not a number");
  }
  return v;
}

std::uint64_t parse_u64(const std::string& text, const std::string& name) {
  const std::string s = trim(text);
  std::uint64_t v = 0;
  const bool hex = s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X');
  const char* begin = s.data() + (hex ? 2 : 0);
  const auto r = std::from_chars(begin, s.data() + s.size(), v, hex ? 16 : 10);
  if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw ConfigError(name + ": '" + text + "' is not a non-negative integer");
  }
  return v;
}

std::vector<double> parse_list(const std::string& text, const std::string& name) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(item, name));
  if (out.empty()) throw ConfigError(name + ": list must not be empty");
  return out;
}

std::string format_list(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_number(v[i]);
  return s;
}

bool parse_bool(const std::string& text, const std::string& name) {
  const std::string s = trim(text);
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError(name + ": '" + text + "' is not a boolean");
}

template <typename Access>
ConfigField size_field(const std::string& section, const std::string& key, Access acc, bool hashed = true) {
  const std::string name = section + "." + key;
  return {section, key, [acc](const ExperimentConfig& c) { return std::to_string(acc(c)); },
          [acc, name](ExperimentConfig& c, const std::string& v) { acc(c) = static_cast<std::size_t>(parse_u64(v, name)); },
          hashed};
}

template <typename Access>
ConfigField u64_field(const std::string& section, const std::string& key, Access acc) {
  const std::string name = section + "." + key;
  return {section, key, [acc](const ExperimentConfig& c) { return std::to_string(acc(c)); },
          [acc, name](ExperimentConfig& c, const std::string& v) { acc(c) = parse_u64(v, name); }, true};
}

template <typename Access>
ConfigField double_field(const std::string& section, const std::string& key, Access acc) {
  const std::string name = section + "." + key;
  return {section, key, [acc](const ExperimentConfig& c) { return format_number(acc(c)); },
          [acc, name](ExperimentConfig& c, const std::string& v) { acc(c) = parse_double(v, name); }, true};
}

template <typename Access>
ConfigField list_field(const std::string& section, const std::string& key, Access acc) {
  const std::string name = section + "." + key;
  return {section, key, [acc](const ExperimentConfig& c) { return format_list(acc(c)); },
          [acc, name](ExperimentConfig& c, const std::string& v) { acc(c) = parse_list(v, name); }, true};
}

template <typename Access>
ConfigField channel_field(const std::string& section, const std::string& key, Access acc) {
  return {section, key, [acc](const ExperimentConfig& c) { return channel::to_string(acc(c)); },
          [acc](ExperimentConfig& c, const std::string& v) { acc(c) = channel::parse_channel_kind(trim(v)); }, true};
}

template <typename Access>
ConfigField bool_field(const std::string& section, const std::string& key, Access acc) {
  const std::string name = section + "." + key;
  return {section, key, [acc](const ExperimentConfig& c) { return std::string(acc(c) ? "true" : "false"); },
          [acc, name](ExperimentConfig& c, const std::string& v) { acc(c) = parse_bool(v, name); }, true};
}

#define MEG_ACCESS(expr) [](auto& c) -> auto& { return c.expr; }

std::vector<ConfigField> build_fields() {
  std::vector<ConfigField> f;
  f.push_back({"run", "preset", [](const ExperimentConfig& c) { return to_string(c.preset); },
               [](ExperimentConfig& c, const std::string& v) { c.preset = parse_preset(trim(v)); }, true});
  f.push_back(u64_field("run", "seed", MEG_ACCESS(seed)));
  f.push_back({"run", "out", [](const ExperimentConfig& c) { return c.out.string(); },
               [](ExperimentConfig& c, const std::string& v) { c.out = trim(v); }, false});
  f.push_back(size_field("run", "jobs", MEG_ACCESS(jobs), false));

  f.push_back(size_field("geometry", "channels", MEG_ACCESS(geometry.channels)));
  f.push_back(size_field("geometry", "height", MEG_ACCESS(geometry.height)));
  f.push_back(size_field("geometry", "width", MEG_ACCESS(geometry.width)));
  f.push_back(size_field("geometry", "latent_channels", MEG_ACCESS(geometry.latent_channels)));
  f.push_back(size_field("geometry", "downsample", MEG_ACCESS(geometry.downsample)));

  f.push_back(size_field("autoencoder", "corpus_variants", MEG_ACCESS(corpus_variants)));
  f.push_back(size_field("autoencoder", "hidden", MEG_ACCESS(autoencoder_hidden)));
  f.push_back(size_field("autoencoder", "epochs", MEG_ACCESS(autoencoder.epochs)));
  f.push_back(size_field("autoencoder", "batch_size", MEG_ACCESS(autoencoder.batch_size)));
  f.push_back(double_field("autoencoder", "learning_rate", MEG_ACCESS(autoencoder.learning_rate)));
  f.push_back(double_field("autoencoder", "latent_penalty", MEG_ACCESS(autoencoder.latent_penalty)));

  f.push_back(size_field("diffusion", "steps", MEG_ACCESS(diffusion_steps)));
  f.push_back(double_field("diffusion", "eta", MEG_ACCESS(eta)));
  f.push_back(size_field("diffusion", "hidden", MEG_ACCESS(denoiser_hidden)));
  f.push_back(size_field("diffusion", "time_embedding", MEG_ACCESS(denoiser.time_embedding)));
  f.push_back(size_field("diffusion", "train_steps", MEG_ACCESS(denoiser.steps)));
  f.push_back(size_field("diffusion", "batch_size", MEG_ACCESS(denoiser.batch_size)));
  f.push_back(double_field("diffusion", "learning_rate", MEG_ACCESS(denoiser.learning_rate)));

  f.push_back(list_field("codec", "compression_rates", MEG_ACCESS(compression_rates)));
  f.push_back(size_field("codec", "training_latents", MEG_ACCESS(codec_latents)));
  f.push_back(size_field("codec", "bottleneck", MEG_ACCESS(codec.bottleneck)));
  f.push_back(size_field("codec", "epochs", MEG_ACCESS(codec.epochs)));
  f.push_back(size_field("codec", "batch_size", MEG_ACCESS(codec.batch_size)));
  f.push_back(double_field("codec", "learning_rate", MEG_ACCESS(codec.learning_rate)));
  f.push_back(double_field("codec", "training_snr_db", MEG_ACCESS(codec.training_snr_db)));
  f.push_back(channel_field("codec", "channel", MEG_ACCESS(codec.channel)));
  f.push_back(size_field("codec", "block_length", MEG_ACCESS(codec.block_length)));
  f.push_back(double_field("codec", "max_grad_norm", MEG_ACCESS(codec.max_grad_norm)));

  f.push_back(size_field("metrics", "feature_size", MEG_ACCESS(feature_size)));
  f.push_back(u64_field("metrics", "feature_seed", MEG_ACCESS(feature_seed)));

  f.push_back(list_field("sweep", "snr_db", MEG_ACCESS(snr_db)));
  f.push_back(size_field("sweep", "trials", MEG_ACCESS(trials)));
  f.push_back(channel_field("sweep", "channel", MEG_ACCESS(sweep_channel)));
  f.push_back(size_field("sweep", "block_length", MEG_ACCESS(sweep_block_length)));

  f.push_back(list_field("power", "p_max", MEG_ACCESS(p_max)));
  f.push_back(double_field("power", "noise_power", MEG_ACCESS(power.noise_power)));
  f.push_back(double_field("power", "compression_rate", MEG_ACCESS(power.compression_rate)));
  f.push_back(size_field("power", "block_length", MEG_ACCESS(power.block_length)));
  f.push_back(channel_field("power", "channel", MEG_ACCESS(power.channel)));
  f.push_back(size_field("power", "batch_prompts", MEG_ACCESS(power.batch_prompts)));
  f.push_back(size_field("power", "pool_size", MEG_ACCESS(power.pool_size)));
  f.push_back(size_field("power", "episodes", MEG_ACCESS(power_train.episodes)));
  f.push_back(size_field("power", "eval_every", MEG_ACCESS(power_train.eval_every)));
  f.push_back(size_field("power", "validation_traces", MEG_ACCESS(power_train.validation_traces)));
  f.push_back(size_field("power", "test_traces", MEG_ACCESS(test_traces)));
  f.push_back(double_field("power", "learning_rate", MEG_ACCESS(power_train.ppo.learning_rate)));
  f.push_back(double_field("power", "clip", MEG_ACCESS(power_train.ppo.clip)));
  f.push_back(double_field("power", "value_coef", MEG_ACCESS(power_train.ppo.value_coef)));
  f.push_back(double_field("power", "entropy_coef", MEG_ACCESS(power_train.ppo.entropy_coef)));
  f.push_back(double_field("power", "gamma", MEG_ACCESS(power_train.ppo.gamma)));
  f.push_back(size_field("power", "epochs", MEG_ACCESS(power_train.ppo.epochs)));
  f.push_back(size_field("power", "episodes_per_batch", MEG_ACCESS(power_train.ppo.episodes_per_batch)));
  f.push_back(size_field("power", "hidden", MEG_ACCESS(power_train.ppo.hidden)));
  f.push_back(double_field("power", "initial_log_std", MEG_ACCESS(power_train.ppo.initial_log_std)));
  f.push_back(bool_field("power", "normalize_advantages", MEG_ACCESS(power_train.ppo.normalize_advantages)));
  return f;
}

#undef MEG_ACCESS

const ConfigField* find_field(const std::string& section, const std::string& key) {
  for (const auto& f : config_fields()) {
    if (f.section == section && f.key == key) return &f;
  }
  return nullptr;
}

void apply_tree(ExperimentConfig& base, const boost::property_tree::ptree& tree) {
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError("config: entry '" + section + "' must sit inside a [section]");
    for (const auto& [key, value] : body) {
      const ConfigField* f = find_field(section, key);
      if (!f) throw ConfigError("config: unknown key '" + key + "' in section [" + section + "]");
      if (section == "run" && key == "preset") continue;
      f->set(base, value.data());
    }
  }
}

boost::property_tree::ptree read_tree(std::istream& in, const std::string& where) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(where + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  return tree;
}

std::string render(const ExperimentConfig& c, bool hashed_only, const std::set<std::string>* sections) {
  std::map<std::string, std::map<std::string, std::string>> by_section;
  for (const auto& f : config_fields()) {
    if (hashed_only && !f.hashed) continue;
    if (sections && !sections->count(f.section)) continue;
    by_section[f.section][f.key] = f.get(c);
  }
  std::string out;
  for (const auto& [section, keys] : by_section) {
    out += "[" + section + "]\n";
    for (const auto& [k, v] : keys) out += k + " = " + v + "\n";
  }
  return out;
}

}  // namespace

const std::vector<ConfigField>& config_fields() {
  static const std::vector<ConfigField> fields = build_fields();
  return fields;
}

ExperimentConfig preset_config(Preset p) {
  ExperimentConfig c;
  c.preset = p;
  c.power_train.episodes = 3000;
  c.codec.epochs = 60;
  if (p == Preset::paper_arithmetic) {
    c.geometry = ImageGeometry{4, 512, 512, 4, 8};
    c.diffusion_steps = 50;
    c.codec.bottleneck = 9000;
  }
  return c;
}

void apply_ini_text(ExperimentConfig& base, const std::string& text) {
  std::istringstream in(text);
  apply_tree(base, read_tree(in, "config text"));
}

void apply_ini(ExperimentConfig& base, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  apply_tree(base, read_tree(in, path.string()));
}

std::string preset_in_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  const auto tree = read_tree(in, path.string());
  return trim(tree.get<std::string>("run.preset", ""));
}

std::string canonical_form(const ExperimentConfig& config) { return render(config, true, nullptr); }

std::string full_form(const ExperimentConfig& config) { return render(config, false, nullptr); }

std::string config_hash(const ExperimentConfig& config) { return fnv1a_hex(canonical_form(config)); }

std::string section_text(const ExperimentConfig& config, const std::vector<std::string>& sections) {
  const std::set<std::string> wanted(sections.begin(), sections.end());
  return render(config, true, &wanted);
}

void ExperimentConfig::validate() const {
  try {
    geometry.validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(std::string("[geometry] ") + e.what());
  }
  if (compression_rates.empty()) throw ConfigError("[codec] compression_rates must not be empty");
  std::set<std::size_t> lengths;
  for (double r : compression_rates) {
    try {
      if (!lengths.insert(seed_length(geometry.latent_count(), r)).second) {
        throw ConfigError("[codec] compression rate " + format_number(r) + " duplicates another seed length");
      }
    } catch (const ArgumentError& e) {
      throw ConfigError(std::string("[codec] ") + e.what());
    }
  }
  if (codec.block_length == 0 || sweep_block_length == 0 || power.block_length == 0) {
    throw ConfigError("block lengths must be positive");
  }
  if (codec.bottleneck == 0 || autoencoder_hidden == 0 || denoiser_hidden == 0 || feature_size == 0) {
    throw ConfigError("hidden widths must be positive");
  }
  if (diffusion_steps == 0) throw ConfigError("[diffusion] steps must be positive");
  if (!(eta >= 0.0 && eta <= 1.0)) throw ConfigError("[diffusion] eta must lie in [0,1]");
  if (codec_latents < 2) throw ConfigError("[codec] training_latents must be at least 2");
  if (trials == 0) throw ConfigError("[sweep] trials must be positive");
  for (double s : snr_db) {
    if (!std::isfinite(s)) throw ConfigError("[sweep] snr_db values must be finite");
  }
  if (p_max.empty()) throw ConfigError("[power] p_max must not be empty");
  for (double p : p_max) {
    if (!(p > 0.0 && std::isfinite(p))) throw ConfigError("[power] p_max values must be positive");
  }
  if (!(power.noise_power >= 0.0)) throw ConfigError("[power] noise_power must be non-negative");
  const auto q = [](double r) { return std::llround(r * 65536.0); };
  if (std::none_of(compression_rates.begin(), compression_rates.end(),
                   [&](double r) { return q(r) == q(power.compression_rate); })) {
    throw ConfigError("[power] compression_rate " + format_number(power.compression_rate) +
                      " has no codec in [codec] compression_rates");
  }
  if (power.batch_prompts < 2 || power.pool_size == 0) {
    throw ConfigError("[power] batch_prompts must be at least 2 and pool_size positive");
  }
  if (power_train.ppo.episodes_per_batch == 0 || power_train.ppo.epochs == 0 || power_train.ppo.hidden == 0) {
    throw ConfigError("[power] episodes_per_batch, epochs and hidden must be positive");
  }
  if (test_traces == 0) throw ConfigError("[power] test_traces must be positive");
  if (jobs == 0) throw ConfigError("[run] jobs must be positive");
}

}  // namespace meg::expcli
