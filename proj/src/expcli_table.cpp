#include "meg/expcli/table.hpp"

#include <cstdio>

#include "meg/seedcodec/codec.hpp"

namespace meg::expcli {

using metrics::TransmissionMode;

namespace {

std::string grouped(std::size_t v) {
  std::string digits = std::to_string(v);
  std::string out;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (i && (digits.size() - i) % 3 == 0) out += ',';
    out += digits[i];
  }
  return out;
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

}  // namespace

TableReport table_report(const ExperimentConfig& config) {
  config.validate();
  TableReport t;
  const double any_rate = config.compression_rates.front();
  t.symbols.push_back({TransmissionMode::centralized, 0.0,
                       metrics::symbol_count(TransmissionMode::centralized, config.geometry, any_rate)});
  t.symbols.push_back({TransmissionMode::raw_feature, 0.0,
                       metrics::symbol_count(TransmissionMode::raw_feature, config.geometry, any_rate)});
  for (double r : config.compression_rates) {
    t.symbols.push_back({TransmissionMode::meg, r, metrics::symbol_count(TransmissionMode::meg, config.geometry, r)});
  }
  const std::size_t latent = config.geometry.latent_count();
  for (double r : config.compression_rates) {
    ParameterBlock b;
    b.compression_rate = r;
    for (const auto& spec : seedcodec::codec_layer_specs(latent, seed_length(latent, r), config.codec.bottleneck)) {
      b.layers.push_back({spec.label + " (" + nn::to_string(spec.kind) + " " + std::to_string(spec.in_features) +
                              "->" + std::to_string(spec.out_features) + ")",
                          nn::parameter_count(spec)});
      b.total += b.layers.back().parameters;
    }
    t.parameters.push_back(std::move(b));
  }
  return t;
}

std::string format_table(const TableReport& report) {
  std::string out = "Transmitted symbols per image\n";
  for (const auto& s : report.symbols) {
    std::string name = metrics::to_string(s.mode);
    if (s.mode == TransmissionMode::meg) name += " f_c=" + format_number(s.compression_rate);
    out += "  " + pad(name, 24) + grouped(s.symbols) + "\n";
  }
  for (const auto& b : report.parameters) {
    out += "\nCodec parameters at f_c=" + format_number(b.compression_rate) + "\n";
    for (const auto& l : b.layers) out += "  " + pad(l.layer, 40) + grouped(l.parameters) + "\n";
    out += "  " + pad("total", 40) + grouped(b.total) + "\n";
  }
  return out;
}

std::string table_csv(const TableReport& report, const std::string& config_hash) {
  const std::string v = std::to_string(kTableCsvVersion);
  std::string out = "schema,kind,name,compression_rate,value,config_hash\n";
  for (const auto& s : report.symbols) {
    out += v + ",symbols," + metrics::to_string(s.mode) + "," + format_number(s.compression_rate) + "," +
           std::to_string(s.symbols) + "," + config_hash + "\n";
  }
  for (const auto& b : report.parameters) {
    for (const auto& l : b.layers) {
      out += v + ",parameters,\"" + l.layer + "\"," + format_number(b.compression_rate) + "," +
             std::to_string(l.parameters) + "," + config_hash + "\n";
    }
    out += v + ",parameters,total," + format_number(b.compression_rate) + "," + std::to_string(b.total) + "," +
           config_hash + "\n";
  }
  return out;
}

}  // namespace meg::expcli
