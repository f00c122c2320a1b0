#include "meg/channel/channel.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include "meg/errors.hpp"

namespace meg::channel {

std::string to_string(ChannelKind kind) {
  return kind == ChannelKind::awgn ? "awgn" : "rayleigh";
}

ChannelKind parse_channel_kind(const std::string& s) {
  if (s == "awgn") return ChannelKind::awgn;
  if (s == "rayleigh" || s == "rayleigh_block") return ChannelKind::rayleigh_block;
  throw ArgumentError("unknown channel kind '" + s + "' (expected awgn or rayleigh)");
}

double snr_to_noise_std(double snr_db, double signal_power) {
  if (!(signal_power > 0.0)) throw ArgumentError("snr_to_noise_std: signal power must be positive");
  if (std::isinf(snr_db) && snr_db > 0) return 0.0;
  return std::sqrt(signal_power / std::pow(10.0, snr_db / 10.0));
}

std::size_t block_count(std::size_t symbols, std::size_t block_length) {
  if (block_length == 0) throw ArgumentError("block length must be at least 1");
  return (symbols + block_length - 1) / block_length;
}

FadingTrace sample_fading_trace(const ChannelModel& model, std::size_t num_blocks, std::uint64_t seed) {
  if (model.block_length == 0) throw ArgumentError("block length must be at least 1");
  FadingTrace trace;
  trace.block_length = model.block_length;
  trace.seed = seed;
  trace.gains.assign(num_blocks, 1.0);
  if (model.kind == ChannelKind::rayleigh_block) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, std::sqrt(0.5));
    for (auto& h : trace.gains) {
      double g;
      do {
        const double re = n(rng);
        const double im = n(rng);
        g = std::sqrt(re * re + im * im);
      } while (g == 0.0);
      h = g;
    }
  }
  return trace;
}

std::vector<float> transmit(std::span<const float> x, double gain, double power, double noise_std,
                            std::mt19937_64& rng) {
  if (power < 0.0) throw ArgumentError("transmit: negative power " + std::to_string(power));
  if (noise_std < 0.0) throw ArgumentError("transmit: negative noise std");
  const double amp = gain * std::sqrt(power);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<float> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double v = amp * x[i];
    if (noise_std > 0.0) v += noise_std * n(rng);
    y[i] = static_cast<float>(v);
  }
  return y;
}

std::vector<float> equalize(std::span<const float> y, double gain, double power) {
  const double amp = gain * std::sqrt(std::max(power, 0.0));
  if (!(amp > 0.0)) throw ErasureError("equalize: zero effective gain, block erased");
  std::vector<float> x(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) x[i] = static_cast<float>(y[i] / amp);
  return x;
}

void write_traces_csv(std::ostream& out, std::span<const FadingTrace> traces) {
  const std::size_t bl = traces.empty() ? 1 : traces.front().block_length;
  out << "# meg-fading-traces v1 block_length=" << bl << "\n";
  out << "trace,seed,block,gain\n";
  char buf[64];
  for (std::size_t t = 0; t < traces.size(); ++t) {
    if (traces[t].block_length != bl) throw ArgumentError("trace set mixes block lengths");
    for (std::size_t b = 0; b < traces[t].gains.size(); ++b) {
      std::snprintf(buf, sizeof(buf), "%.17g", traces[t].gains[b]);
      out << t << ',' << traces[t].seed << ',' << b << ',' << buf << '\n';
    }
  }
}

std::vector<FadingTrace> read_traces_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("# meg-fading-traces v1", 0) != 0) {
    throw FrameError("trace csv: missing 'meg-fading-traces v1' header");
  }
  const auto pos = line.find("block_length=");
  if (pos == std::string::npos) throw FrameError("trace csv: header lacks block_length");
  const std::size_t bl = std::stoul(line.substr(pos + 13));
  if (!std::getline(in, line) || line != "trace,seed,block,gain") {
    throw FrameError("trace csv: expected column header 'trace,seed,block,gain'");
  }
  std::map<std::size_t, FadingTrace> by_index;
  std::size_t lineno = 2;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string f[4];
    for (auto& field : f) {
      if (!std::getline(ss, field, ',')) throw FrameError("trace csv: short row at line " + std::to_string(lineno));
    }
    const std::size_t t = std::stoul(f[0]);
    const std::uint64_t seed = std::stoull(f[1]);
    const std::size_t b = std::stoul(f[2]);
    const double h = std::stod(f[3]);
    if (!(h > 0.0)) throw FrameError("trace csv: non-positive gain at line " + std::to_string(lineno));
    auto& tr = by_index[t];
    tr.block_length = bl;
    tr.seed = seed;
    if (b != tr.gains.size()) throw FrameError("trace csv: block indices out of order at line " + std::to_string(lineno));
    tr.gains.push_back(h);
  }
  std::vector<FadingTrace> out;
  for (auto& [i, tr] : by_index) {
    if (i != out.size()) throw FrameError("trace csv: missing trace index " + std::to_string(out.size()));
    out.push_back(std::move(tr));
  }
  return out;
}

void save_traces_csv(const std::string& path, std::span<const FadingTrace> traces) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_traces_csv(out, traces);
}

std::vector<FadingTrace> load_traces_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_traces_csv(in);
}

}  // namespace meg::channel
