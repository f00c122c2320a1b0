#include <cmath>
#include <functional>
#include <random>

#include "doctest.h"
#include "meg/protocol/protocol.hpp"
#include "support/deployment.hpp"

using namespace meg;
using namespace meg::protocol;
using metrics::TransmissionMode;

namespace {

SeedFrame random_frame(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::uint32_t> u16(0, 65535);
  std::uniform_int_distribution<std::uint32_t> bits;
  std::uniform_int_distribution<std::size_t> len(0, 300);
  SeedFrame f;
  f.compression_q16 = static_cast<std::uint16_t>(u16(rng));
  f.latent_channels = static_cast<std::uint16_t>(u16(rng));
  f.latent_height = static_cast<std::uint16_t>(u16(rng));
  f.latent_width = static_cast<std::uint16_t>(u16(rng));
  f.scale = std::bit_cast<float>(bits(rng));
  f.block_length = 1 + bits(rng) % 4096;
  f.payload.resize(len(rng));
  for (auto& v : f.payload) v = std::bit_cast<float>(bits(rng));
  return f;
}

GenerationRequest request(const Deployment& d, double fc = 0.5, std::uint64_t seed = 7) {
  return {"bright ring left", fc, d.geometry, seed};
}

}  // namespace

TEST_CASE("frame encode/decode is byte-identical") {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 10000; ++i) {
    const SeedFrame f = random_frame(rng);
    const auto bytes = encode_frame(f);
    REQUIRE(bytes.size() == kFrameHeaderSize + 4 * f.payload.size());
    const SeedFrame back = decode_frame(bytes);
    REQUIRE(encode_frame(back) == bytes);
  }
}

TEST_CASE("frame layout and corruption") {
  SeedFrame f;
  f.compression_q16 = compression_to_q16(0.5);
  f.latent_channels = 2;
  f.latent_height = 8;
  f.latent_width = 8;
  f.scale = 1.5f;
  f.block_length = 16;
  f.payload = {1.0f, -2.0f};
  auto bytes = encode_frame(f);
  CHECK(bytes[0] == 'M');
  CHECK(bytes[3] == 'S');
  CHECK(bytes[4] == 1);
  CHECK(bytes[6] == 0x00);
  CHECK(bytes[7] == 0x80);
  CHECK(bytes[8] == 2);
  CHECK(bytes[24] == 2);
  CHECK(decode_frame(bytes) == f);
  CHECK(compression_to_q16(0.1) == 6554);

  auto bad = bytes;
  bad[9] ^= 1;
  CHECK_THROWS_AS(decode_frame(bad), FrameError);
  bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_frame(bad), FrameError);
  bad = bytes;
  bad.pop_back();
  CHECK_THROWS_AS(decode_frame(bad), FrameError);
  CHECK_THROWS_AS(decode_frame(std::vector<std::uint8_t>(10)), FrameError);
  // Payload bytes are outside the checksum.
  bad = bytes;
  bad[kFrameHeaderSize] ^= 0x40;
  CHECK_NOTHROW(decode_frame(bad));
}

TEST_CASE("chunk_seed") {
  std::vector<float> s(10);
  std::iota(s.begin(), s.end(), 0.5f);
  auto c = chunk_seed(s, 3);
  REQUIRE(c.size() == 4);
  CHECK(c[0].size() == 3);
  CHECK(c[3].size() == 1);
  std::vector<float> joined;
  for (auto& b : c) joined.insert(joined.end(), b.begin(), b.end());
  CHECK(joined == s);
  CHECK(chunk_seed(s, 10).size() == 1);
  CHECK(chunk_seed(s, 50).size() == 1);
  CHECK_THROWS_AS(chunk_seed(s, 0), ArgumentError);
}

TEST_CASE("edge server output") {
  auto d = testing::untrained_deployment();
  auto a = es_handle_request(d, request(d), 16);
  auto b = es_handle_request(d, request(d), 16);
  CHECK(a.frame.payload.size() == seed_length(128, 0.5));
  CHECK(encode_frame(a.frame) == encode_frame(b.frame));
  CHECK(decode_frame(encode_frame(a.frame)) == a.frame);
  CHECK(a.frame.scale == a.seed.scale);
  auto c = es_handle_request(d, request(d, 0.25, 8), 16);
  CHECK(c.frame.payload.size() == 32);

  auto wrong = request(d);
  wrong.geometry.height = 64;
  CHECK_THROWS_AS(es_handle_request(d, wrong, 16), ProtocolError);
  CHECK_THROWS_AS(es_handle_request(d, request(d, 0.9), 16), ProtocolError);
  auto empty = request(d);
  empty.prompt = " ";
  CHECK_THROWS_AS(es_handle_request(d, empty, 16), ArgumentError);
}

TEST_CASE("edge server state machine rejects every illegal call") {
  auto d = testing::untrained_deployment();
  // Legal successor of each state under each op (-1: illegal).
  const int table[4][4] = {
      {1, -1, -1, -1},  // idle: accept
      {-1, 2, -1, -1},  // inferring: infer
      {-1, -1, 2, 3},   // transmitting: transmit, finish
      {-1, -1, -1, -1},
  };
  const auto req = request(d);
  std::function<void(EsSession&, int)> ops[4] = {
      [&](EsSession& s, int) { s.accept(req, 16); },
      [&](EsSession& s, int) { (void)s.infer(); },
      [&](EsSession& s, int) { (void)s.transmit_blocks(); },
      [&](EsSession& s, int) { s.finish(); },
  };
  std::size_t traces = 0;
  for (int len = 1; len <= 5; ++len) {
    int total = 1;
    for (int i = 0; i < len; ++i) total *= 4;
    for (int code = 0; code < total; ++code) {
      EsSession s(d);
      int c = code;
      int model = 0;
      for (int i = 0; i < len; ++i) {
        const int op = c % 4;
        c /= 4;
        const int next = table[model][op];
        if (next < 0) {
          const auto before = s.state();
          CHECK_THROWS_AS(ops[op](s, 0), ProtocolError);
          CHECK(s.state() == before);
        } else {
          ops[op](s, 0);
          model = next;
        }
        REQUIRE(static_cast<int>(s.state()) == model);
      }
      ++traces;
    }
  }
  CHECK(traces == 4 + 16 + 64 + 256 + 1024);
}

TEST_CASE("user equipment state machine rejects every illegal call") {
  auto d = testing::untrained_deployment();
  auto es = es_handle_request(d, request(d), 16);
  auto header = encode_frame(es.frame);
  header.resize(kFrameHeaderSize);
  const auto chunks = chunk_seed(es.frame.payload, 16);
  const int table[4][4] = {
      {1, -1, -1, -1},  // idle: begin
      {-1, 1, 2, -1},   // receiving: receive, end_of_frame
      {-1, -1, -1, 3},  // decoding: decode
      {-1, -1, -1, -1},
  };
  std::function<void(UeSession&)> ops[4] = {
      [&](UeSession& s) { s.begin(header); },
      [&](UeSession& s) { s.receive(0, ReceivedBlock{chunks[0], 1.0, 1.0}); },
      [&](UeSession& s) { s.end_of_frame(); },
      [&](UeSession& s) { (void)s.decode(); },
  };
  for (int len = 1; len <= 5; ++len) {
    int total = 1;
    for (int i = 0; i < len; ++i) total *= 4;
    for (int code = 0; code < total; ++code) {
      UeSession s(d);
      int c = code;
      int model = 0;
      for (int i = 0; i < len; ++i) {
        const int op = c % 4;
        c /= 4;
        const int next = table[model][op];
        if (next < 0) {
          const auto before = s.state();
          CHECK_THROWS_AS(ops[op](s), ProtocolError);
          CHECK(s.state() == before);
        } else {
          ops[op](s);
          model = next;
        }
        REQUIRE(static_cast<int>(s.state()) == model);
      }
    }
  }
}

TEST_CASE("noiseless link reproduces the local pipeline") {
  auto d = testing::untrained_deployment();
  for (auto kind : {channel::ChannelKind::awgn, channel::ChannelKind::rayleigh_block}) {
    EndToEndConfig cfg;
    cfg.request = request(d);
    cfg.link.channel = kind;
    cfg.link.snr_db = std::numeric_limits<double>::infinity();
    cfg.modes = {TransmissionMode::meg};
    auto res = run_end_to_end(d, cfg);
    auto es = es_handle_request(d, cfg.request, 16);
    const auto& codec = d.codec_for(0.5);
    auto local = d.autoencoder->decode(seedcodec::decompress(codec, es.seed.symbols, es.seed.scale));
    const auto& img = res.results[0].image;
    double worst = 0;
    for (std::size_t i = 0; i < img.values.size(); ++i)
      worst = std::max(worst, std::abs(double(img.values[i]) - local.values[i]));
    CHECK(worst < 1e-6);
    CHECK_FALSE(res.results[0].degraded);
  }
}

TEST_CASE("erased blocks are zero-filled and flagged") {
  auto d = testing::untrained_deployment();
  auto es = es_handle_request(d, request(d), 16);
  auto header = encode_frame(es.frame);
  std::vector<std::optional<ReceivedBlock>> none(channel::block_count(es.frame.payload.size(), 16));
  auto out = ue_receive(d, std::span(header).first(kFrameHeaderSize), none);
  CHECK(out.degraded);
  CHECK(out.erased_blocks == none.size());
  for (float v : out.image.values) CHECK(std::isfinite(v));

  std::vector<std::optional<ReceivedBlock>> zero_power;
  for (auto& c : chunk_seed(es.frame.payload, 16)) zero_power.push_back(ReceivedBlock{c, 1.0, 0.0});
  auto z = ue_receive(d, std::span(header).first(kFrameHeaderSize), zero_power);
  CHECK(z.degraded);
  CHECK(z.image == out.image);

  auto bad = header;
  bad[12] ^= 1;
  CHECK_THROWS_AS(ue_receive(d, std::span(bad).first(kFrameHeaderSize), none), FrameError);
}

TEST_CASE("end-to-end modes share one trace and report consistent metrics") {
  auto d = testing::untrained_deployment();
  EndToEndConfig cfg;
  cfg.request = request(d);
  cfg.link.snr_db = 5.0;
  cfg.config_hash = "abc";
  auto res = run_end_to_end(d, cfg);
  REQUIRE(res.results.size() == 3);
  CHECK(res.trace.gains.size() == blocks_needed(d, cfg));
  CHECK(res.trace.gains.size() == 1024 / 16);
  for (const auto& r : res.results) {
    CHECK(r.trace_seed == cfg.link.trace_seed);
    CHECK(r.noise_seed == cfg.link.noise_seed);
    CHECK(r.report.symbols == metrics::symbol_count(r.mode, d.geometry, 0.5));
    CHECK(r.report.config_hash == "abc");
    auto ext = image_report(r.image, res.ground_truth, *d.extractor);
    CHECK(ext.psnr_db == r.report.psnr_db);
    CHECK(ext.fid_score == r.report.fid_score);
    CHECK(r.power_log.size() == channel::block_count(r.report.symbols, 16));
  }
  CHECK(res.results[0].report.symbols == 1024);
  CHECK(res.results[1].report.symbols == 128);
  CHECK(res.results[2].report.symbols == 64);

  // Same trace object supplied explicitly gives identical results.
  auto again = run_end_to_end(d, cfg, res.trace);
  for (std::size_t i = 0; i < 3; ++i) CHECK(again.results[i].image == res.results[i].image);

  auto row = generation_csv_row(res.results[2]);
  CHECK(row.rfind("1,meg,", 0) == 0);
  CHECK(row.find(",abc") != std::string::npos);
}

TEST_CASE("perfect channel gives the ground truth for uncompressed modes") {
  auto d = testing::untrained_deployment();
  EndToEndConfig cfg;
  cfg.request = request(d);
  cfg.link.perfect = true;
  auto res = run_end_to_end(d, cfg);
  CHECK(res.results[0].report.psnr_db == metrics::kPsnrInfinity);
  CHECK(res.results[1].report.psnr_db == metrics::kPsnrInfinity);
  CHECK(res.results[1].report.fid_score == 0.0);
  CHECK(std::isfinite(res.results[2].report.psnr_db));
}

TEST_CASE("zero power on a block erases it") {
  auto d = testing::untrained_deployment();
  EndToEndConfig cfg;
  cfg.request = request(d);
  cfg.modes = {TransmissionMode::meg};
  cfg.meg_powers = {1.0, 0.0, 1.0, 1.0};
  auto res = run_end_to_end(d, cfg);
  CHECK(res.results[0].degraded);
  CHECK(res.results[0].erased_blocks == 1);
  CHECK(res.results[0].power_log == cfg.meg_powers);
}
