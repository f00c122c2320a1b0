#include "meg/expcli/power.hpp"

#include "meg/errors.hpp"

namespace meg::expcli {

powerrl::PowerEnvConfig power_env_config(const ExperimentConfig& config, double p_max) {
  powerrl::PowerEnvConfig e = config.power;
  e.p_max = p_max;
  e.seed = mix_seed(config.seed, 201);
  return e;
}

powerrl::TrainConfig power_train_config(const ExperimentConfig& config) {
  powerrl::TrainConfig t = config.power_train;
  t.seed = mix_seed(config.seed, 202);
  t.ppo.seed = mix_seed(config.seed, 203);
  return t;
}

PowerResult run_power(const ExperimentConfig& config, const protocol::Deployment& deployment, const Logger& log) {
  config.validate();
  PowerResult result;
  result.config_hash = config_hash(config);
  const std::uint64_t trace_seed = mix_seed(config.seed, 204);
  const std::uint64_t noise_seed = mix_seed(config.seed, 205);
  for (double p_max : config.p_max) {
    powerrl::PowerEnvironment env(deployment, power_env_config(config, p_max));
    if (log) log("p_max=" + format_number(p_max) + ": training " + std::to_string(config.power_train.episodes) + " episodes");
    auto trained = powerrl::train_agent(env, power_train_config(config), &result.audit);
    const auto traces = powerrl::frozen_traces(env.config(), env.num_blocks(), config.test_traces, trace_seed);
    const auto uniform = powerrl::evaluate(env, powerrl::uniform_policy(), traces, noise_seed, &result.audit);
    const auto drl = powerrl::evaluate(env, powerrl::agent_policy(trained.agent), traces, noise_seed, &result.audit);
    PowerRow row;
    row.p_max = p_max;
    row.uniform_fid = -uniform.mean;
    row.drl_fid = -drl.mean;
    row.uniform_std = uniform.stddev;
    row.drl_std = drl.stddev;
    row.n = traces.size();
    row.comparison = powerrl::compare_paired(drl.rewards, uniform.rewards);
    row.curve = std::move(trained.curve);
    row.agent = std::move(trained.agent);
    if (log) {
      log("p_max=" + format_number(p_max) + ": uniform fid " + metrics::format_double(row.uniform_fid) + ", drl fid " +
          metrics::format_double(row.drl_fid) + ", wins " + std::to_string(row.comparison.wins) + "/" +
          std::to_string(row.comparison.wins + row.comparison.losses) + ", sign-test p " +
          metrics::format_double(row.comparison.p_value));
    }
    result.rows.push_back(std::move(row));
  }
  return result;
}

std::string power_csv_header() {
  return "schema,p_max,uniform_fid,drl_fid,uniform_std,drl_std,n,mean_gain,wins,losses,ties,sign_p,config_hash";
}

std::string power_csv_row(const PowerRow& r, const std::string& config_hash) {
  const auto f = [](double v) { return metrics::format_double(v); };
  return std::to_string(kPowerCsvVersion) + "," + format_number(r.p_max) + "," + f(r.uniform_fid) + "," + f(r.drl_fid) +
         "," + f(r.uniform_std) + "," + f(r.drl_std) + "," + std::to_string(r.n) + "," + f(r.comparison.mean_difference) +
         "," + std::to_string(r.comparison.wins) + "," + std::to_string(r.comparison.losses) + "," +
         std::to_string(r.comparison.ties) + "," + f(r.comparison.p_value) + "," + config_hash;
}

Figure power_figure(const PowerResult& result) {
  Figure fig{"fig_fid_vs_pmax", "FID proxy vs power budget", "p_max (mW)", "FID proxy", {}};
  Series uniform{"uniform", {}, {}};
  Series drl{"ppo", {}, {}};
  for (const auto& r : result.rows) {
    uniform.x.push_back(r.p_max);
    uniform.y.push_back(r.uniform_fid);
    drl.x.push_back(r.p_max);
    drl.y.push_back(r.drl_fid);
  }
  fig.series = {uniform, drl};
  return fig;
}

std::vector<std::filesystem::path> write_power(const PowerResult& result, const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> written;
  std::string csv = power_csv_header() + "\n";
  for (const auto& r : result.rows) csv += power_csv_row(r, result.config_hash) + "\n";
  written.push_back(dir / "power.csv");
  write_text(written.back(), csv);
  for (const auto& r : result.rows) {
    const std::string tag = "pmax" + format_number(r.p_max);
    std::string curve = powerrl::curve_csv_header() + "\n";
    for (const auto& p : r.curve) curve += powerrl::curve_csv_row(p, result.config_hash) + "\n";
    written.push_back(dir / ("curve_" + tag + ".csv"));
    write_text(written.back(), curve);
    written.push_back(dir / ("agent_" + tag + ".bin"));
    nn::save_network(written.back().string(), r.agent.to_file());
  }
  const Figure fig = power_figure(result);
  written.push_back(dir / (fig.id + ".csv"));
  write_text(written.back(), figure_csv(fig));
  written.push_back(dir / (fig.id + ".svg"));
  write_text(written.back(), figure_svg(fig));
  return written;
}

}  // namespace meg::expcli
