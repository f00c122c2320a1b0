#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "meg/expcli/bundle.hpp"
#include "meg/expcli/plot.hpp"
#include "meg/powerrl/environment.hpp"

namespace meg::expcli {

struct PowerRow {
  double p_max = 0.0;
  double uniform_fid = 0.0;  // mean over test traces
  double drl_fid = 0.0;
  double uniform_std = 0.0;
  double drl_std = 0.0;
  std::size_t n = 0;
  powerrl::PairedComparison comparison;  // DRL reward vs uniform reward
  std::vector<powerrl::CurvePoint> curve;
  powerrl::PpoAgent agent;
};

struct PowerResult {
  std::vector<PowerRow> rows;  // in p_max order
  powerrl::BudgetAudit audit;
  std::string config_hash;
};

/// Environment and training settings for one budget.
powerrl::PowerEnvConfig power_env_config(const ExperimentConfig& config, double p_max);
powerrl::TrainConfig power_train_config(const ExperimentConfig& config);

/// Trains one agent per p_max and compares it with uniform allocation on
/// the same frozen test traces, prompt batches and noise seeds.
PowerResult run_power(const ExperimentConfig& config, const protocol::Deployment& deployment, const Logger& log = {});

inline constexpr int kPowerCsvVersion = 1;
std::string power_csv_header();
std::string power_csv_row(const PowerRow& row, const std::string& config_hash);

Figure power_figure(const PowerResult& result);

/// power.csv, curve_pmax<p>.csv, agent_pmax<p>.bin and the figure files.
std::vector<std::filesystem::path> write_power(const PowerResult& result, const std::filesystem::path& dir);

}  // namespace meg::expcli
