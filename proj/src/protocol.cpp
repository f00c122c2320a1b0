#include "meg/protocol/protocol.hpp"

#include <algorithm>
#include <cmath>

#include "meg/errors.hpp"

namespace meg::protocol {

using metrics::TransmissionMode;

std::string to_string(EsState s) {
  switch (s) {
    case EsState::idle: return "idle";
    case EsState::inferring: return "inferring";
    case EsState::transmitting: return "transmitting";
    case EsState::done: return "done";
  }
  return "?";
}

std::string to_string(UeState s) {
  switch (s) {
    case UeState::idle: return "idle";
    case UeState::receiving: return "receiving";
    case UeState::decoding: return "decoding";
    case UeState::done: return "done";
  }
  return "?";
}

const seedcodec::CodecPair& Deployment::codec_for(double f_c) const {
  const std::uint16_t q = compression_to_q16(f_c);
  for (const auto& c : codecs) {
    if (c && compression_to_q16(c->compression_rate) == q) return *c;
  }
  throw ProtocolError("deployment: no codec loaded for f_c=" + std::to_string(f_c));
}

void Deployment::validate() const {
  geometry.validate();
  if (!autoencoder || !denoiser || !extractor) throw ProtocolError("deployment: model handle missing");
  if (!(autoencoder->geometry() == geometry)) throw ProtocolError("deployment: autoencoder geometry mismatch");
  if (extractor->input_size() != geometry.pixel_count()) {
    throw ProtocolError("deployment: feature extractor expects " + std::to_string(extractor->input_size()) +
                        " pixels, geometry has " + std::to_string(geometry.pixel_count()));
  }
  if (schedule.steps() == 0) throw ProtocolError("deployment: empty noise schedule");
  for (const auto& c : codecs) {
    if (!c || c->latent_channels != geometry.latent_channels || c->latent_height != geometry.latent_height() ||
        c->latent_width != geometry.latent_width()) {
      throw ProtocolError("deployment: codec latent shape disagrees with geometry");
    }
  }
}

void EsSession::require(EsState s, const char* op) const {
  if (state_ != s) {
    throw ProtocolError(std::string("edge server: ") + op + " is illegal in state " + to_string(state_));
  }
}

void EsSession::accept(const GenerationRequest& request, std::size_t block_length) {
  require(EsState::idle, "accept");
  if (!(request.geometry == deployment_->geometry)) {
    throw ProtocolError("edge server: request dims " + std::to_string(request.geometry.height) + "x" +
                        std::to_string(request.geometry.width) + " do not match the deployed model");
  }
  if (block_length == 0) throw ProtocolError("edge server: block length must be at least 1");
  (void)deployment_->codec_for(request.compression_rate);
  if (genmodel::tokenize(request.prompt).empty()) throw ArgumentError("edge server: prompt has no tokens");
  request_ = request;
  block_length_ = block_length;
  state_ = EsState::inferring;
}

const EsOutput& EsSession::infer() {
  require(EsState::inferring, "infer");
  const Deployment& d = *deployment_;
  const auto noise = genmodel::initial_noise(d.geometry.latent_count(), request_.noise_seed);
  EsOutput out;
  out.latent = genmodel::generate_latent(*d.denoiser, request_.prompt, noise, d.schedule, d.geometry, d.embedder);
  const auto& codec = d.codec_for(request_.compression_rate);
  out.seed = seedcodec::compress(codec, out.latent);
  out.frame.compression_q16 = compression_to_q16(codec.compression_rate);
  out.frame.latent_channels = static_cast<std::uint16_t>(out.latent.channels);
  out.frame.latent_height = static_cast<std::uint16_t>(out.latent.height);
  out.frame.latent_width = static_cast<std::uint16_t>(out.latent.width);
  out.frame.scale = out.seed.scale;
  out.frame.block_length = static_cast<std::uint32_t>(block_length_);
  out.frame.payload = out.seed.symbols;
  output_ = std::move(out);
  state_ = EsState::transmitting;
  return *output_;
}

std::vector<std::vector<float>> EsSession::transmit_blocks() {
  require(EsState::transmitting, "transmit");
  return chunk_seed(output_->frame.payload, block_length_);
}

void EsSession::finish() {
  require(EsState::transmitting, "finish");
  state_ = EsState::done;
}

EsOutput es_handle_request(const Deployment& deployment, const GenerationRequest& request,
                           std::size_t block_length) {
  EsSession es(deployment);
  es.accept(request, block_length);
  EsOutput out = es.infer();
  es.finish();
  return out;
}

void UeSession::require(UeState s, const char* op) const {
  if (state_ != s) {
    throw ProtocolError(std::string("user equipment: ") + op + " is illegal in state " + to_string(state_));
  }
}

void UeSession::begin(std::span<const std::uint8_t> header) {
  require(UeState::idle, "begin");
  std::uint32_t count = 0;
  SeedFrame h = decode_frame_header(header, &count);
  const auto& codec = deployment_->codec_for(h.compression_rate());
  if (h.latent_size() != codec.latent_size() || count != codec.seed_length()) {
    throw FrameError("user equipment: frame announces " + std::to_string(count) + " symbols for a " +
                     std::to_string(h.latent_size()) + "-element latent; codec expects " +
                     std::to_string(codec.seed_length()));
  }
  header_ = h;
  symbol_count_ = count;
  blocks_.assign(channel::block_count(count, h.block_length), std::nullopt);
  state_ = UeState::receiving;
}

void UeSession::receive(std::size_t index, std::optional<ReceivedBlock> block) {
  require(UeState::receiving, "receive");
  if (index >= blocks_.size()) {
    throw FrameError("user equipment: block " + std::to_string(index) + " beyond frame of " +
                     std::to_string(blocks_.size()) + " blocks");
  }
  const std::size_t expect = std::min<std::size_t>(header_.block_length, symbol_count_ - index * header_.block_length);
  if (block && block->y.size() != expect) {
    throw FrameError("user equipment: block " + std::to_string(index) + " has " + std::to_string(block->y.size()) +
                     " symbols, expected " + std::to_string(expect));
  }
  blocks_[index] = std::move(block);
}

void UeSession::end_of_frame() {
  require(UeState::receiving, "end_of_frame");
  state_ = UeState::decoding;
}

const UeOutput& UeSession::decode() {
  require(UeState::decoding, "decode");
  UeOutput out;
  const auto symbols = equalize_blocks(blocks_, symbol_count_, header_.block_length, &out.erased_blocks);
  out.degraded = out.erased_blocks > 0;
  const auto& codec = deployment_->codec_for(header_.compression_rate());
  out.latent = seedcodec::decompress(codec, symbols, header_.scale);
  out.image = deployment_->autoencoder->decode(out.latent);
  output_ = std::move(out);
  state_ = UeState::done;
  return *output_;
}

UeOutput ue_receive(const Deployment& deployment, std::span<const std::uint8_t> header,
                    const std::vector<std::optional<ReceivedBlock>>& blocks) {
  UeSession ue(deployment);
  ue.begin(header);
  for (std::size_t i = 0; i < blocks.size(); ++i) ue.receive(i, blocks[i]);
  ue.end_of_frame();
  return ue.decode();
}

std::vector<ReceivedBlock> send_blocks(std::span<const float> symbols, const channel::FadingTrace& trace,
                                       std::span<const double> powers, double noise_std, std::mt19937_64& rng) {
  const std::size_t bl = trace.block_length;
  const std::size_t nb = channel::block_count(symbols.size(), bl);
  if (trace.gains.size() < nb) {
    throw ArgumentError("send_blocks: trace has " + std::to_string(trace.gains.size()) + " blocks, payload needs " +
                        std::to_string(nb));
  }
  std::vector<ReceivedBlock> out(nb);
  for (std::size_t b = 0; b < nb; ++b) {
    const std::size_t start = b * bl;
    const std::size_t n = std::min(bl, symbols.size() - start);
    out[b].gain = trace.gains[b];
    out[b].power = b < powers.size() ? powers[b] : 1.0;
    out[b].y = channel::transmit(symbols.subspan(start, n), out[b].gain, out[b].power, noise_std, rng);
  }
  return out;
}

std::vector<float> equalize_blocks(const std::vector<std::optional<ReceivedBlock>>& blocks, std::size_t symbols,
                                   std::size_t block_length, std::size_t* erased) {
  std::vector<float> out(symbols, 0.0f);
  std::size_t lost = 0;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    if (!b) {
      ++lost;
      continue;
    }
    const std::size_t start = i * block_length;
    if (start + b->y.size() > symbols) throw FrameError("equalize_blocks: block " + std::to_string(i) + " overruns the payload");
    try {
      const auto x = channel::equalize(b->y, b->gain, b->power);
      std::copy(x.begin(), x.end(), out.begin() + static_cast<std::ptrdiff_t>(start));
    } catch (const ErasureError&) {
      ++lost;
    }
  }
  if (erased) *erased = lost;
  return out;
}

std::vector<float> analog_link(std::span<const float> values, const channel::FadingTrace& trace,
                               std::span<const double> powers, double noise_std, std::mt19937_64& rng,
                               std::size_t* erased) {
  double sq = 0;
  for (float v : values) sq += static_cast<double>(v) * v;
  const double s = std::sqrt(sq / static_cast<double>(std::max<std::size_t>(values.size(), 1)));
  std::vector<float> x(values.size(), 0.0f);
  if (s > 0) {
    for (std::size_t i = 0; i < values.size(); ++i) x[i] = static_cast<float>(values[i] / s);
  }
  const auto sent = send_blocks(x, trace, powers, noise_std, rng);
  std::vector<std::optional<ReceivedBlock>> blocks(sent.begin(), sent.end());
  auto xhat = equalize_blocks(blocks, values.size(), trace.block_length, erased);
  for (auto& v : xhat) v = static_cast<float>(v * s);
  return xhat;
}

metrics::MetricReport image_report(const genmodel::PixelImage& image, const genmodel::PixelImage& reference,
                                   const metrics::FeatureExtractor& extractor) {
  const auto a8 = image.to_u8();
  const auto b8 = reference.to_u8();
  std::vector<float> a(a8.begin(), a8.end());
  std::vector<float> b(b8.begin(), b8.end());
  metrics::MetricReport r;
  r.psnr_db = metrics::psnr(a, b, 255.0);
  r.mse = metrics::mse(image.values, reference.values);
  r.fid_score = metrics::single_image_fid(image.values, reference.values, extractor);
  return r;
}

std::size_t blocks_needed(const Deployment& deployment, const EndToEndConfig& config) {
  std::size_t most = 0;
  for (auto m : config.modes) {
    most = std::max(most, metrics::symbol_count(m, deployment.geometry, config.request.compression_rate));
  }
  return channel::block_count(most, config.link.block_length);
}

EndToEndResult run_end_to_end(const Deployment& deployment, const EndToEndConfig& config) {
  const channel::ChannelModel model{config.link.channel, config.link.block_length, 0.0};
  return run_end_to_end(deployment, config,
                        channel::sample_fading_trace(model, blocks_needed(deployment, config), config.link.trace_seed));
}

EndToEndResult run_end_to_end(const Deployment& deployment, const EndToEndConfig& config,
                              const channel::FadingTrace& trace) {
  const LinkConfig& link = config.link;
  if (trace.block_length != link.block_length) {
    throw ArgumentError("run_end_to_end: trace block length " + std::to_string(trace.block_length) +
                        " differs from link block length " + std::to_string(link.block_length));
  }
  if (trace.gains.size() < blocks_needed(deployment, config)) {
    throw ArgumentError("run_end_to_end: trace too short for the requested modes");
  }
  const double noise_std = link.perfect ? 0.0 : channel::snr_to_noise_std(link.snr_db);

  EndToEndResult res;
  res.trace = trace;
  const EsOutput es = es_handle_request(deployment, config.request, link.block_length);
  res.latent = es.latent;
  res.ground_truth = deployment.autoencoder->decode(es.latent);
  const auto& extractor = *deployment.extractor;

  for (TransmissionMode mode : config.modes) {
    GenerationResult g;
    g.mode = mode;
    g.trace_seed = trace.seed;
    g.noise_seed = link.noise_seed;
    std::mt19937_64 rng(link.noise_seed);
    const std::size_t symbols = metrics::symbol_count(mode, deployment.geometry, config.request.compression_rate);
    const std::size_t nb = channel::block_count(symbols, link.block_length);
    std::span<const double> powers;
    if (mode == TransmissionMode::meg) powers = config.meg_powers;
    for (std::size_t b = 0; b < nb; ++b) g.power_log.push_back(b < powers.size() ? powers[b] : 1.0);

    switch (mode) {
      case TransmissionMode::centralized: {
        g.image = res.ground_truth;
        if (!link.perfect) {
          g.image.values = analog_link(res.ground_truth.values, trace, powers, noise_std, rng, &g.erased_blocks);
          for (auto& v : g.image.values) v = std::clamp(v, 0.0f, 1.0f);
        }
        break;
      }
      case TransmissionMode::raw_feature: {
        genmodel::LatentFeature z = es.latent;
        if (!link.perfect) z.values = analog_link(es.latent.values, trace, powers, noise_std, rng, &g.erased_blocks);
        g.image = deployment.autoencoder->decode(z);
        break;
      }
      case TransmissionMode::meg: {
        const auto header = encode_frame(es.frame);
        std::vector<std::optional<ReceivedBlock>> blocks;
        if (link.perfect) {
          for (auto& chunk : chunk_seed(es.frame.payload, link.block_length)) blocks.push_back(ReceivedBlock{chunk, 1.0, 1.0});
        } else {
          for (auto& b : send_blocks(es.frame.payload, trace, powers, noise_std, rng)) blocks.emplace_back(std::move(b));
        }
        const UeOutput ue = ue_receive(deployment, std::span(header).first(kFrameHeaderSize), blocks);
        g.image = ue.image;
        g.erased_blocks = ue.erased_blocks;
        break;
      }
    }
    g.degraded = g.erased_blocks > 0;
    g.report = image_report(g.image, res.ground_truth, extractor);
    g.report.symbols = symbols;
    g.report.config_hash = config.config_hash;
    res.results.push_back(std::move(g));
  }
  return res;
}

std::string generation_csv_header() {
  return "schema,mode,trace_seed,noise_seed,degraded,erased_blocks," + metrics::metric_csv_header();
}

std::string generation_csv_row(const GenerationResult& r) {
  return std::to_string(kGenerationCsvVersion) + "," + metrics::to_string(r.mode) + "," +
         std::to_string(r.trace_seed) + "," + std::to_string(r.noise_seed) + "," + (r.degraded ? "1" : "0") + "," +
         std::to_string(r.erased_blocks) + "," + metrics::metric_csv_row(r.report);
}

}  // namespace meg::protocol
