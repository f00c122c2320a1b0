#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "meg/expcli/bundle.hpp"
#include "meg/expcli/plot.hpp"

namespace meg::expcli {

struct SweepRow {
  metrics::TransmissionMode mode = metrics::TransmissionMode::meg;
  double compression_rate = 0.0;
  double snr_db = 0.0;
  std::size_t trial = 0;
  double psnr_db = 0.0;
  double fid_proxy = 0.0;
  std::size_t symbols = 0;
  std::uint64_t seed = 0;  // cell seed
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::string config_hash;
};

/// Runs every (snr, trial) cell on a pool of `config.jobs` workers. A cell
/// draws its prompt, generation noise, fading trace and channel noise from
/// a stream seeded by (master seed, cell index) and sends the same image in
/// every mode and at every compression rate over that one trace.
SweepResult run_sweep(const ExperimentConfig& config, const protocol::Deployment& deployment);

inline constexpr int kSweepCsvVersion = 1;
std::string sweep_csv_header();
std::string sweep_csv_row(const SweepRow& row, const std::string& config_hash);

double median(std::vector<double> values);

/// Median of a metric over trials for one (mode, f_c, snr).
double cell_median(const SweepResult& result, metrics::TransmissionMode mode, double compression_rate, double snr_db,
                   bool psnr);

/// Line-chart data: metric vs SNR per mode, and MEG metric vs f_c per SNR.
std::vector<Figure> sweep_figures(const ExperimentConfig& config, const SweepResult& result);

/// sweep.csv, fig_*.csv and fig_*.svg under `dir`. Returns written paths.
std::vector<std::filesystem::path> write_sweep(const ExperimentConfig& config, const SweepResult& result,
                                               const std::filesystem::path& dir);

}  // namespace meg::expcli
