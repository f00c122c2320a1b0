#include <cstdio>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "meg/errors.hpp"
#include "meg/expcli/bundle.hpp"
#include "meg/expcli/eval.hpp"
#include "meg/expcli/power.hpp"
#include "meg/expcli/sweep.hpp"
#include "meg/expcli/table.hpp"

using namespace meg;
using namespace meg::expcli;

namespace {

struct GlobalOptions {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  std::string preset;
  bool print_config = false;
};

ExperimentConfig resolve(const GlobalOptions& g) {
  std::string preset = g.preset;
  if (preset.empty() && !g.config.empty()) preset = preset_in_file(g.config);
  ExperimentConfig c = preset_config(preset.empty() ? Preset::desk : parse_preset(preset));
  if (!g.config.empty()) apply_ini(c, g.config);
  if (!g.out.empty()) c.out = g.out;
  if (g.seed) c.seed = *g.seed;
  if (g.jobs) c.jobs = *g.jobs;
  c.validate();
  return c;
}

void log_line(const std::string& s) { std::cerr << "[meg] " << s << std::endl; }

void save_config(const ExperimentConfig& c, const std::filesystem::path& dir) {
  write_text(dir / "config.ini", canonical_form(c));
}

int run_train(const ExperimentConfig& c) {
  const auto report = cmd_train(c, log_line);
  std::size_t hits = 0;
  for (const auto& s : report.stages) hits += s.cached ? 1 : 0;
  std::cout << "bundle " << bundle_dir(c).string() << ": " << report.stages.size() << " stages, " << hits
            << " cached\nmanifest " << report.manifest.string() << "\n";
  save_config(c, bundle_dir(c));
  return 0;
}

int run_sweep_cmd(const ExperimentConfig& c) {
  const auto d = load_bundle(c);
  const auto result = run_sweep(c, d);
  const auto dir = c.out / "sweep";
  write_sweep(c, result, dir);
  save_config(c, dir);
  std::printf("%-10s %-8s %14s %14s %14s %14s\n", "snr_db", "f_c", "psnr_central", "psnr_raw", "psnr_meg", "fid_meg");
  for (double snr : c.snr_db) {
    for (double r : c.compression_rates) {
      std::printf("%-10s %-8s %14.3f %14.3f %14.3f %14.5f\n", format_number(snr).c_str(), format_number(r).c_str(),
                  cell_median(result, metrics::TransmissionMode::centralized, r, snr, true),
                  cell_median(result, metrics::TransmissionMode::raw_feature, r, snr, true),
                  cell_median(result, metrics::TransmissionMode::meg, r, snr, true),
                  cell_median(result, metrics::TransmissionMode::meg, r, snr, false));
    }
  }
  std::cout << "wrote " << (dir / "sweep.csv").string() << "\n";
  return 0;
}

int run_power_cmd(const ExperimentConfig& c) {
  const auto d = load_bundle(c);
  const auto result = run_power(c, d, log_line);
  const auto dir = c.out / "power";
  write_power(result, dir);
  save_config(c, dir);
  std::cout << power_csv_header() << "\n";
  for (const auto& r : result.rows) std::cout << power_csv_row(r, result.config_hash) << "\n";
  std::cout << "budget audit: " << result.audit.episodes << " episodes, " << result.audit.steps << " steps, "
            << result.audit.violations << " violations\n";
  return result.audit.violations == 0 ? 0 : 1;
}

int run_table(const ExperimentConfig& c) {
  const auto t = table_report(c);
  std::cout << "preset " << to_string(c.preset) << ", config " << config_hash(c) << "\n\n" << format_table(t);
  write_text(c.out / "table" / "table.csv", table_csv(t, config_hash(c)));
  return 0;
}

int run_eval_cmd(const ExperimentConfig& c, const EvalRequest& req) {
  const auto d = load_bundle(c);
  const auto result = run_eval(c, d, req);
  const auto dir = c.out / "eval";
  write_eval(result, dir);
  std::cout << protocol::generation_csv_header() << "\n";
  for (const auto& r : result.results) std::cout << protocol::generation_csv_row(r) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mobile edge generation simulator"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  app.add_option("--config", g.config, "INI config file")->envname("MEG_CONFIG");
  app.add_option("--out", g.out, "Output directory")->envname("MEG_OUT");
  app.add_option("--seed", g.seed, "Master RNG seed")->envname("MEG_SEED");
  app.add_option("--jobs", g.jobs, "Worker threads")->envname("MEG_JOBS")->check(CLI::PositiveNumber);
  app.add_option("--preset", g.preset, "Scale preset")
      ->envname("MEG_PRESET")
      ->check(CLI::IsMember({"desk", "paper-arithmetic"}));
  app.add_flag("--print-config", g.print_config, "Print the canonical config and its hash");

  auto* train = app.add_subcommand("train", "Train autoencoder, denoiser and codecs (cached)");
  auto* sweep = app.add_subcommand("sweep", "PSNR and FID proxy over modes, compression rates and SNRs");
  auto* power = app.add_subcommand("power", "PPO power allocation against uniform allocation");
  auto* table = app.add_subcommand("table", "Symbol counts and codec parameter counts");
  auto* eval = app.add_subcommand("eval", "Generate one image and send it in every mode");
  EvalRequest req;
  eval->add_option("--prompt", req.prompt, "Prompt text");
  eval->add_option("--rate", req.compression_rate, "Compression rate f_c");
  eval->add_option("--snr", req.snr_db, "Channel SNR in dB");
  eval->add_flag("--perfect", req.perfect, "Noiseless link");

  CLI11_PARSE(app, argc, argv);

  try {
    const ExperimentConfig c = resolve(g);
    if (g.print_config) std::cout << canonical_form(c) << "# hash " << config_hash(c) << "\n";
    if (*train) return run_train(c);
    if (*sweep) return run_sweep_cmd(c);
    if (*power) return run_power_cmd(c);
    if (*table) return run_table(c);
    if (*eval) return run_eval_cmd(c, req);
  } catch (const ConfigError& e) {
    std::cerr << "meg: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "meg: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
