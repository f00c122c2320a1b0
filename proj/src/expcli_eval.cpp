#include "meg/expcli/eval.hpp"

#include <fstream>

#include "meg/errors.hpp"
#include "meg/expcli/plot.hpp"

namespace meg::expcli {

protocol::EndToEndResult run_eval(const ExperimentConfig& config, const protocol::Deployment& deployment,
                                  const EvalRequest& request) {
  protocol::EndToEndConfig e2e;
  e2e.request = {request.prompt, request.compression_rate, config.geometry, mix_seed(config.seed, 301)};
  e2e.link.perfect = request.perfect;
  e2e.link.channel = config.sweep_channel;
  e2e.link.block_length = config.sweep_block_length;
  e2e.link.snr_db = request.snr_db;
  e2e.link.trace_seed = mix_seed(config.seed, 302);
  e2e.link.noise_seed = mix_seed(config.seed, 303);
  e2e.config_hash = config_hash(config);
  return protocol::run_end_to_end(deployment, e2e);
}

void write_pgm(const std::filesystem::path& path, const genmodel::PixelImage& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  const auto bytes = image.to_u8();
  out << "P5\n" << image.width << " " << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(image.width * image.height));
}

std::vector<std::filesystem::path> write_eval(const protocol::EndToEndResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  std::string csv = protocol::generation_csv_header() + "\n";
  for (const auto& r : result.results) csv += protocol::generation_csv_row(r) + "\n";
  written.push_back(dir / "eval.csv");
  write_text(written.back(), csv);
  written.push_back(dir / "ground_truth.pgm");
  write_pgm(written.back(), result.ground_truth);
  for (const auto& r : result.results) {
    written.push_back(dir / (metrics::to_string(r.mode) + ".pgm"));
    write_pgm(written.back(), r.image);
  }
  return written;
}

}  // namespace meg::expcli
