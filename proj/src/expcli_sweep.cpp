#include "meg/expcli/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <random>
#include <thread>

#include "meg/errors.hpp"
#include "meg/genmodel/corpus.hpp"

namespace meg::expcli {

using metrics::TransmissionMode;

namespace {

constexpr TransmissionMode kModes[] = {TransmissionMode::centralized, TransmissionMode::raw_feature,
                                       TransmissionMode::meg};

bool same_rate(double a, double b) { return std::llround(a * 65536.0) == std::llround(b * 65536.0); }

SweepRow make_row(const protocol::GenerationResult& g, double rate, double snr, std::size_t trial, std::uint64_t seed) {
  return {g.mode, rate, snr, trial, g.report.psnr_db, g.report.fid_score, g.report.symbols, seed};
}

// All rows of one (snr, trial) cell, in (rate, mode) order.
std::vector<SweepRow> run_cell(const ExperimentConfig& config, const protocol::Deployment& d, double snr,
                               std::size_t trial, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto prompts = genmodel::all_prompts();
  protocol::EndToEndConfig e2e;
  e2e.request = {prompts[rng() % prompts.size()], config.compression_rates.front(), config.geometry, rng()};
  e2e.link.channel = config.sweep_channel;
  e2e.link.block_length = config.sweep_block_length;
  e2e.link.snr_db = snr;
  e2e.link.trace_seed = rng();
  e2e.link.noise_seed = rng();
  e2e.config_hash = config_hash(config);
  const channel::ChannelModel model{config.sweep_channel, config.sweep_block_length, 0.0};
  const auto trace = channel::sample_fading_trace(model, protocol::blocks_needed(d, e2e), e2e.link.trace_seed);

  std::vector<SweepRow> rows;
  std::vector<protocol::GenerationResult> shared;
  for (double rate : config.compression_rates) {
    e2e.request.compression_rate = rate;
    if (shared.empty()) {
      e2e.modes = {std::begin(kModes), std::end(kModes)};
      const auto r = protocol::run_end_to_end(d, e2e, trace);
      shared = {r.results[0], r.results[1]};
      for (const auto& g : r.results) rows.push_back(make_row(g, rate, snr, trial, seed));
    } else {
      e2e.modes = {TransmissionMode::meg};
      const auto r = protocol::run_end_to_end(d, e2e, trace);
      for (const auto& g : shared) rows.push_back(make_row(g, rate, snr, trial, seed));
      rows.push_back(make_row(r.results[0], rate, snr, trial, seed));
    }
  }
  return rows;
}

}  // namespace

SweepResult run_sweep(const ExperimentConfig& config, const protocol::Deployment& deployment) {
  config.validate();
  const std::size_t cells = config.snr_db.size() * config.trials;
  std::vector<std::vector<SweepRow>> out(cells);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells) return;
      try {
        const double snr = config.snr_db[i / config.trials];
        out[i] = run_cell(config, deployment, snr, i % config.trials, mix_seed(config.seed, 1000 + i));
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = cells;
      }
    }
  };
  const std::size_t jobs = std::min(config.jobs, cells);
  std::vector<std::thread> pool;
  for (std::size_t j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  SweepResult result;
  result.config_hash = config_hash(config);
  for (auto& cell : out) result.rows.insert(result.rows.end(), cell.begin(), cell.end());
  return result;
}

std::string sweep_csv_header() {
  return "schema,mode,compression_rate,snr_db,trial,psnr_db,fid_proxy,symbols,seed,config_hash";
}

std::string sweep_csv_row(const SweepRow& r, const std::string& config_hash) {
  return std::to_string(kSweepCsvVersion) + "," + metrics::to_string(r.mode) + "," + format_number(r.compression_rate) +
         "," + format_number(r.snr_db) + "," + std::to_string(r.trial) + "," + metrics::format_double(r.psnr_db) + "," +
         metrics::format_double(r.fid_proxy) + "," + std::to_string(r.symbols) + "," + std::to_string(r.seed) + "," +
         config_hash;
}

double median(std::vector<double> values) {
  if (values.empty()) throw ArgumentError("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double cell_median(const SweepResult& result, TransmissionMode mode, double compression_rate, double snr_db,
                   bool psnr) {
  std::vector<double> v;
  for (const auto& r : result.rows) {
    if (r.mode == mode && same_rate(r.compression_rate, compression_rate) && r.snr_db == snr_db) {
      v.push_back(psnr ? r.psnr_db : r.fid_proxy);
    }
  }
  return median(v);
}

std::vector<Figure> sweep_figures(const ExperimentConfig& config, const SweepResult& result) {
  std::vector<Figure> figs;
  for (bool psnr : {true, false}) {
    const std::string metric = psnr ? "psnr" : "fid";
    const std::string y_label = psnr ? "PSNR (dB)" : "FID proxy";
    Figure by_snr{"fig_" + metric + "_vs_snr", (psnr ? "PSNR" : "FID proxy") + std::string(" vs channel SNR"),
                  "SNR (dB)", y_label, {}};
    const double ref_rate = config.compression_rates.front();
    for (TransmissionMode m : {TransmissionMode::centralized, TransmissionMode::raw_feature}) {
      Series s{metrics::to_string(m), {}, {}};
      for (double snr : config.snr_db) {
        s.x.push_back(snr);
        s.y.push_back(cell_median(result, m, ref_rate, snr, psnr));
      }
      by_snr.series.push_back(std::move(s));
    }
    for (double rate : config.compression_rates) {
      Series s{"meg f_c=" + format_number(rate), {}, {}};
      for (double snr : config.snr_db) {
        s.x.push_back(snr);
        s.y.push_back(cell_median(result, TransmissionMode::meg, rate, snr, psnr));
      }
      by_snr.series.push_back(std::move(s));
    }
    figs.push_back(std::move(by_snr));

    Figure by_rate{"fig_" + metric + "_vs_rate", (psnr ? "MEG PSNR" : "MEG FID proxy") + std::string(" vs compression rate"),
                   "compression rate f_c", y_label, {}};
    for (double snr : config.snr_db) {
      Series s{"snr=" + format_number(snr) + "dB", {}, {}};
      for (double rate : config.compression_rates) {
        s.x.push_back(rate);
        s.y.push_back(cell_median(result, TransmissionMode::meg, rate, snr, psnr));
      }
      by_rate.series.push_back(std::move(s));
    }
    figs.push_back(std::move(by_rate));
  }
  return figs;
}

std::vector<std::filesystem::path> write_sweep(const ExperimentConfig& config, const SweepResult& result,
                                               const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> written;
  std::string csv = sweep_csv_header() + "\n";
  for (const auto& r : result.rows) csv += sweep_csv_row(r, result.config_hash) + "\n";
  written.push_back(dir / "sweep.csv");
  write_text(written.back(), csv);
  for (const auto& f : sweep_figures(config, result)) {
    written.push_back(dir / (f.id + ".csv"));
    write_text(written.back(), figure_csv(f));
    written.push_back(dir / (f.id + ".svg"));
    write_text(written.back(), figure_svg(f));
  }
  return written;
}

}  // namespace meg::expcli
