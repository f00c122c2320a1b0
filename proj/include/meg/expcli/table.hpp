#pragma once

#include <string>
#include <vector>

#include "meg/expcli/config.hpp"
#include "meg/metrics/metrics.hpp"

namespace meg::expcli {

struct SymbolRow {
  metrics::TransmissionMode mode = metrics::TransmissionMode::meg;
  double compression_rate = 0.0;  // meg rows only
  std::size_t symbols = 0;
};

struct ParameterRow {
  std::string layer;
  std::size_t parameters = 0;
};

struct ParameterBlock {
  double compression_rate = 0.0;
  std::vector<ParameterRow> layers;
  std::size_t total = 0;
};

struct TableReport {
  std::vector<SymbolRow> symbols;
  std::vector<ParameterBlock> parameters;  // one per compression rate
};

/// Transmitted symbols per mode and codec parameter counts, from
/// architecture metadata only.
TableReport table_report(const ExperimentConfig& config);

std::string format_table(const TableReport& report);

inline constexpr int kTableCsvVersion = 1;
/// Rows `schema,kind,name,compression_rate,value,config_hash`.
std::string table_csv(const TableReport& report, const std::string& config_hash);

}  // namespace meg::expcli
