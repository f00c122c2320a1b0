#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "meg/expcli/bundle.hpp"

namespace meg::expcli {

struct EvalRequest {
  std::string prompt = "bright ring center";
  double compression_rate = 0.5;
  double snr_db = 10.0;
  bool perfect = false;
};

/// One generation sent in every mode over one shared trace.
protocol::EndToEndResult run_eval(const ExperimentConfig& config, const protocol::Deployment& deployment,
                                  const EvalRequest& request);

/// Binary PGM of the first channel, 8-bit.
void write_pgm(const std::filesystem::path& path, const genmodel::PixelImage& image);

/// eval.csv plus ground_truth.pgm and one image per mode.
std::vector<std::filesystem::path> write_eval(const protocol::EndToEndResult& result, const std::filesystem::path& dir);

}  // namespace meg::expcli
