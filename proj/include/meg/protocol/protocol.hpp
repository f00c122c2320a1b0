#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "meg/channel/channel.hpp"
#include "meg/genmodel/autoencoder.hpp"
#include "meg/genmodel/diffusion.hpp"
#include "meg/genmodel/prompt.hpp"
#include "meg/metrics/metrics.hpp"
#include "meg/protocol/frame.hpp"
#include "meg/seedcodec/codec.hpp"

namespace meg::protocol {

/// Loaded model handles shared read-only by every session.
struct Deployment {
  ImageGeometry geometry;
  genmodel::EmbedderConfig embedder;
  genmodel::NoiseSchedule schedule;
  std::shared_ptr<const genmodel::Autoencoder> autoencoder;
  std::shared_ptr<const genmodel::NoisePredictor> denoiser;
  std::vector<std::shared_ptr<const seedcodec::CodecPair>> codecs;
  std::shared_ptr<const metrics::FeatureExtractor> extractor;

  /// Codec whose compression rate has the same Q0.16 code as `f_c`.
  const seedcodec::CodecPair& codec_for(double f_c) const;
  /// Throws ProtocolError when any model disagrees with the geometry.
  void validate() const;
};

struct GenerationRequest {
  std::string prompt;
  double compression_rate = 0.5;
  ImageGeometry geometry;
  std::uint64_t noise_seed = 0;  // seeds the initial latent z_T
};

struct EsOutput {
  genmodel::LatentFeature latent;
  seedcodec::Seed seed;
  SeedFrame frame;
};

enum class EsState { idle, inferring, transmitting, done };
enum class UeState { idle, receiving, decoding, done };
std::string to_string(EsState s);
std::string to_string(UeState s);

/// Edge-server side: idle -> inferring -> transmitting -> done.
/// Any other call throws ProtocolError and leaves the state unchanged.
class EsSession {
 public:
  explicit EsSession(const Deployment& deployment) : deployment_(&deployment) {}

  EsState state() const noexcept { return state_; }

  void accept(const GenerationRequest& request, std::size_t block_length);
  /// Runs generation and compression; returns the frame to send.
  const EsOutput& infer();
  /// Payload blocks in transmission order.
  std::vector<std::vector<float>> transmit_blocks();
  void finish();

 private:
  void require(EsState s, const char* op) const;

  const Deployment* deployment_;
  EsState state_ = EsState::idle;
  GenerationRequest request_;
  std::size_t block_length_ = 1;
  std::optional<EsOutput> output_;
};

/// One payload block as it arrives: raw channel output with the CSI
/// (gain and power) the receiver uses for zero-forcing.
struct ReceivedBlock {
  std::vector<float> y;
  double gain = 1.0;
  double power = 1.0;
};

struct UeOutput {
  genmodel::LatentFeature latent;
  genmodel::PixelImage image;
  bool degraded = false;
  std::size_t erased_blocks = 0;
};

/// User-equipment side: idle -> receiving -> decoding -> done.
class UeSession {
 public:
  explicit UeSession(const Deployment& deployment) : deployment_(&deployment) {}

  UeState state() const noexcept { return state_; }

  /// Starts a frame from its (noise-free) header bytes.
  void begin(std::span<const std::uint8_t> header);
  /// Stores block `index`; nullopt marks a block that never arrived.
  void receive(std::size_t index, std::optional<ReceivedBlock> block);
  void end_of_frame();
  const UeOutput& decode();

 private:
  void require(UeState s, const char* op) const;

  const Deployment* deployment_;
  UeState state_ = UeState::idle;
  SeedFrame header_;
  std::size_t symbol_count_ = 0;
  std::vector<std::optional<ReceivedBlock>> blocks_;
  std::optional<UeOutput> output_;
};

/// Request -> embed -> generate_latent -> compress -> frame.
EsOutput es_handle_request(const Deployment& deployment, const GenerationRequest& request,
                           std::size_t block_length);

/// Equalizes, reassembles, decompresses and decodes one frame. Missing or
/// zero-power blocks are erased (zeros substituted, result flagged).
UeOutput ue_receive(const Deployment& deployment, std::span<const std::uint8_t> header,
                    const std::vector<std::optional<ReceivedBlock>>& blocks);

/// Sends `symbols` block by block: block b uses trace gain b and power
/// powers[b] (1 when `powers` is shorter). Noise comes from `rng`.
std::vector<ReceivedBlock> send_blocks(std::span<const float> symbols, const channel::FadingTrace& trace,
                                       std::span<const double> powers, double noise_std, std::mt19937_64& rng);

/// Zero-forcing reassembly; erased blocks become zeros.
std::vector<float> equalize_blocks(const std::vector<std::optional<ReceivedBlock>>& blocks, std::size_t symbols,
                                   std::size_t block_length, std::size_t* erased = nullptr);

/// Unit-power analog link for a real vector: normalize, send, equalize,
/// rescale. A perfect link returns the input unchanged.
std::vector<float> analog_link(std::span<const float> values, const channel::FadingTrace& trace,
                               std::span<const double> powers, double noise_std, std::mt19937_64& rng,
                               std::size_t* erased = nullptr);

struct GenerationResult {
  metrics::TransmissionMode mode = metrics::TransmissionMode::meg;
  genmodel::PixelImage image;
  metrics::MetricReport report;
  std::vector<double> power_log;  // per block
  bool degraded = false;
  std::size_t erased_blocks = 0;
  std::uint64_t trace_seed = 0;
  std::uint64_t noise_seed = 0;
};

struct LinkConfig {
  bool perfect = false;
  channel::ChannelKind channel = channel::ChannelKind::rayleigh_block;
  std::size_t block_length = 16;
  double snr_db = 20.0;
  std::uint64_t trace_seed = 1;
  std::uint64_t noise_seed = 2;
};

struct EndToEndConfig {
  GenerationRequest request;
  LinkConfig link;
  std::vector<metrics::TransmissionMode> modes{metrics::TransmissionMode::centralized,
                                               metrics::TransmissionMode::raw_feature,
                                               metrics::TransmissionMode::meg};
  std::vector<double> meg_powers;  // per seed block; empty means unit power
  std::string config_hash;
};

struct EndToEndResult {
  genmodel::LatentFeature latent;
  genmodel::PixelImage ground_truth;
  channel::FadingTrace trace;
  std::vector<GenerationResult> results;  // in `modes` order
};

/// Blocks needed by the longest of the requested modes.
std::size_t blocks_needed(const Deployment& deployment, const EndToEndConfig& config);

/// Generates the image once, then sends it in every requested mode over one
/// shared fading trace with identical noise seeds. Metrics compare against
/// the perfect-channel image decode(generate_latent(prompt)).
EndToEndResult run_end_to_end(const Deployment& deployment, const EndToEndConfig& config);
/// Same, over a caller-supplied trace (must cover blocks_needed()).
EndToEndResult run_end_to_end(const Deployment& deployment, const EndToEndConfig& config,
                              const channel::FadingTrace& trace);

/// PSNR (8-bit view, i_max 255), single-image FID-proxy and MSE of one image.
metrics::MetricReport image_report(const genmodel::PixelImage& image, const genmodel::PixelImage& reference,
                                   const metrics::FeatureExtractor& extractor);

inline constexpr int kGenerationCsvVersion = 1;
std::string generation_csv_header();
std::string generation_csv_row(const GenerationResult& r);

}  // namespace meg::protocol
