#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "json.hpp"
#include "meg/errors.hpp"
#include "meg/expcli/eval.hpp"
#include "meg/expcli/power.hpp"
#include "meg/expcli/sweep.hpp"
#include "meg/expcli/table.hpp"

using namespace meg;
using namespace meg::expcli;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny_config(const fs::path& out) {
  ExperimentConfig c = preset_config(Preset::desk);
  apply_ini_text(c, R"(
[autoencoder]
corpus_variants = 1
hidden = 32
epochs = 2
[diffusion]
steps = 4
hidden = 32
train_steps = 20
[codec]
compression_rates = 0.25,0.5
training_latents = 8
bottleneck = 16
epochs = 2
[sweep]
snr_db = -10,10
trials = 3
[power]
p_max = 1,2
compression_rate = 0.5
batch_prompts = 2
pool_size = 2
episodes = 32
eval_every = 16
validation_traces = 4
test_traces = 8
)");
  c.out = out;
  return c;
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("meg_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("fnv1a matches published test vectors") {
  CHECK(fnv1a("") == 0xcbf29ce484222325ull);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a("foobar") == 0x85944171f73967e8ull);
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
}

TEST_CASE("canonical form round-trips and drives the hash") {
  ExperimentConfig c = preset_config(Preset::desk);
  const std::string text = canonical_form(c);
  ExperimentConfig back = preset_config(Preset::desk);
  back.seed = 99;
  back.trials = 17;
  apply_ini_text(back, text);
  CHECK(canonical_form(back) == text);
  CHECK(config_hash(back) == config_hash(c));

  ExperimentConfig runtime = c;
  runtime.out = "/elsewhere";
  runtime.jobs = 8;
  CHECK(config_hash(runtime) == config_hash(c));

  ExperimentConfig changed = c;
  changed.codec.training_snr_db = 10.0;
  CHECK(config_hash(changed) != config_hash(c));
  changed = c;
  changed.seed = 2;
  CHECK(config_hash(changed) != config_hash(c));
  CHECK(text.find("[power]") != std::string::npos);
  CHECK(text.find("jobs") == std::string::npos);
}

TEST_CASE("config files reject unknown keys and bad values") {
  ExperimentConfig c;
  CHECK_THROWS_AS(apply_ini_text(c, "[codec]\nepochz = 3\n"), ConfigError);
  CHECK_THROWS_AS(apply_ini_text(c, "[nowhere]\nx = 1\n"), ConfigError);
  CHECK_THROWS_AS(apply_ini_text(c, "[codec]\nepochs = -3\n"), ConfigError);
  CHECK_THROWS_AS(apply_ini_text(c, "[sweep]\nsnr_db = 1,,2\n"), ConfigError);
  CHECK_THROWS_AS(apply_ini_text(c, "[power]\nnormalize_advantages = maybe\n"), ConfigError);
  apply_ini_text(c, "# comment\n[codec]\ntraining_snr_db = inf\nchannel = awgn\n[metrics]\nfeature_seed = 0x10\n");
  CHECK(std::isinf(c.codec.training_snr_db));
  CHECK(c.codec.channel == channel::ChannelKind::awgn);
  CHECK(c.feature_seed == 16);
}

TEST_CASE("validation catches cross-module contract violations") {
  ExperimentConfig c = preset_config(Preset::desk);
  CHECK_NOTHROW(c.validate());
  ExperimentConfig bad = c;
  bad.geometry.downsample = 3;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.compression_rates = {0.5, 0.5};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.compression_rates = {1.2};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.power.compression_rate = 0.4;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.p_max = {1.0, 0.0};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.jobs = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(parse_preset("laptop"), ConfigError);
}

TEST_CASE("paper-arithmetic table reproduces the reference counts") {
  const auto t = table_report(preset_config(Preset::paper_arithmetic));
  REQUIRE(t.symbols.size() == 7);
  CHECK(t.symbols[0].symbols == 1048576);
  CHECK(t.symbols[1].symbols == 16384);
  const std::size_t meg[] = {1638, 4915, 8192, 11469, 14746};
  for (std::size_t i = 0; i < 5; ++i) CHECK(t.symbols[2 + i].symbols == meg[i]);
  const auto& mid = t.parameters[2];
  CHECK(mid.compression_rate == 0.5);
  CHECK(mid.layers[0].parameters == 134225920);
  CHECK(mid.layers[1].parameters == 134234112);
  CHECK(mid.layers[3].parameters == 147465000);
  CHECK(mid.layers[5].parameters == 147472384);
  CHECK(mid.layers[6].parameters == 32768);
  CHECK(mid.total == 563430184);
  const std::string text = format_table(t);
  CHECK(text.find("11,469") != std::string::npos);
  CHECK(text.find("563,430,184") != std::string::npos);
  CHECK(table_csv(t, "h").find("1,symbols,meg,0.7,11469,h") != std::string::npos);
}

TEST_CASE("paper-arithmetic preset refuses to train") {
  ExperimentConfig c = preset_config(Preset::paper_arithmetic);
  c.out = temp_dir("paper");
  CHECK_THROWS_AS(cmd_train(c), ConfigError);
}

TEST_CASE("train caches by stage key and rebuilds only what is missing") {
  const ExperimentConfig c = tiny_config(temp_dir("train"));
  const auto first = cmd_train(c);
  REQUIRE(first.stages.size() == 4);
  for (const auto& s : first.stages) CHECK_FALSE(s.cached);

  const auto second = cmd_train(c);
  for (const auto& s : second.stages) CHECK(s.cached);

  const fs::path victim = bundle_dir(c) / codec_file_name(0.25);
  const std::string before = read_file(victim);
  fs::remove(victim);
  const auto third = cmd_train(c);
  for (const auto& s : third.stages) CHECK(s.cached == (s.file != victim.filename().string()));
  CHECK(read_file(victim) == before);

  const auto manifest = nlohmann::json::parse(read_file(third.manifest));
  CHECK(manifest["config_hash"] == config_hash(c));
  REQUIRE(manifest["files"].size() == 4);
  std::set<std::string> listed;
  for (const auto& f : manifest["files"]) {
    listed.insert(f["file"].get<std::string>());
    CHECK(f["fnv1a64"] == file_hash(bundle_dir(c) / f["file"].get<std::string>()));
  }
  std::set<std::string> on_disk;
  for (const auto& e : fs::directory_iterator(bundle_dir(c))) {
    if (e.path().extension() == ".bin") on_disk.insert(e.path().filename().string());
  }
  CHECK(listed == on_disk);

  ExperimentConfig changed = c;
  changed.codec.epochs = 3;
  const auto fourth = cmd_train(changed);
  CHECK(fourth.stages[0].cached);
  CHECK(fourth.stages[1].cached);
  CHECK_FALSE(fourth.stages[2].cached);
  CHECK_FALSE(fourth.stages[3].cached);
}

TEST_CASE("loading a missing or stale bundle names the fix") {
  ExperimentConfig c = tiny_config(temp_dir("missing"));
  try {
    load_bundle(c);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("meg train") != std::string::npos);
  }
  cmd_train(c);
  CHECK_NOTHROW(load_bundle(c));
  c.autoencoder.epochs = 5;
  CHECK_THROWS_AS(load_bundle(c), ConfigError);
}

TEST_CASE("sweep is deterministic across worker counts and pairs modes") {
  ExperimentConfig c = tiny_config(temp_dir("sweep"));
  cmd_train(c);
  const auto d = load_bundle(c);
  c.jobs = 1;
  const auto a = run_sweep(c, d);
  c.jobs = 3;
  const auto b = run_sweep(c, d);
  REQUIRE(a.rows.size() == 2 * 3 * 2 * 3);
  REQUIRE(b.rows.size() == a.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(sweep_csv_row(a.rows[i], a.config_hash) == sweep_csv_row(b.rows[i], b.config_hash));
  }
  for (std::size_t i = 0; i < a.rows.size(); i += 6) {
    const auto& r0 = a.rows[i];
    for (std::size_t k = 1; k < 6; ++k) {
      CHECK(a.rows[i + k].seed == r0.seed);
      CHECK(a.rows[i + k].snr_db == r0.snr_db);
      CHECK(a.rows[i + k].trial == r0.trial);
    }
    CHECK(a.rows[i].psnr_db == a.rows[i + 3].psnr_db);
    CHECK(a.rows[i + 1].fid_proxy == a.rows[i + 4].fid_proxy);
    CHECK(a.rows[i + 2].symbols == 32);
    CHECK(a.rows[i + 5].symbols == 64);
  }
  std::set<std::uint64_t> seeds;
  for (const auto& r : a.rows) seeds.insert(r.seed);
  CHECK(seeds.size() == 6);

  const auto files = write_sweep(c, a, c.out / "sweep");
  CHECK(files.size() == 9);
  const std::string csv = read_file(c.out / "sweep" / "sweep.csv");
  CHECK(csv.rfind(sweep_csv_header() + "\n", 0) == 0);
  std::size_t lines = 0;
  for (char ch : csv) lines += ch == '\n';
  CHECK(lines == a.rows.size() + 1);
  CHECK(csv.find("," + a.config_hash + "\n") != std::string::npos);
  CHECK(read_file(c.out / "sweep" / "fig_psnr_vs_snr.svg").find("<polyline") != std::string::npos);
}

TEST_CASE("power rows compare both policies on shared traces") {
  const ExperimentConfig c = tiny_config(temp_dir("power"));
  cmd_train(c);
  const auto d = load_bundle(c);
  const auto res = run_power(c, d);
  REQUIRE(res.rows.size() == 2);
  for (const auto& r : res.rows) {
    CHECK(r.n == 8);
    CHECK(r.comparison.wins + r.comparison.losses + r.comparison.ties == 8);
    CHECK(r.curve.size() == 32);
    for (std::size_t i = 0; i < r.curve.size(); ++i) CHECK(r.curve[i].episode == i + 1);
    CHECK(r.uniform_fid >= 0.0);
    CHECK(r.drl_fid >= 0.0);
  }
  CHECK(res.audit.violations == 0);
  CHECK(res.audit.steps >= res.audit.episodes);
  const auto files = write_power(res, c.out / "power");
  CHECK(fs::exists(c.out / "power" / "curve_pmax1.csv"));
  CHECK(fs::exists(c.out / "power" / "agent_pmax2.bin"));
  const std::string csv = read_file(c.out / "power" / "power.csv");
  CHECK(csv.find("\n1,1,") != std::string::npos);
  CHECK(csv.find("\n1,2,") != std::string::npos);

  const auto again = run_power(c, d);
  CHECK(power_csv_row(again.rows[0], again.config_hash) == power_csv_row(res.rows[0], res.config_hash));
}

TEST_CASE("eval writes one image per mode") {
  const ExperimentConfig c = tiny_config(temp_dir("eval"));
  cmd_train(c);
  const auto d = load_bundle(c);
  EvalRequest req;
  req.perfect = true;
  const auto r = run_eval(c, d, req);
  REQUIRE(r.results.size() == 3);
  CHECK(std::isinf(r.results[0].report.psnr_db));
  const auto files = write_eval(r, c.out / "eval");
  CHECK(files.size() == 5);
  const std::string pgm = read_file(c.out / "eval" / "meg.pgm");
  CHECK(pgm.rfind("P5\n32 32\n255\n", 0) == 0);
  CHECK(pgm.size() == std::string("P5\n32 32\n255\n").size() + 1024);
}

TEST_CASE("median and figure output") {
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
  CHECK_THROWS_AS(median({}), ArgumentError);
  Figure f{"fig", "t", "x", "y", {{"a", {0, 1, 2}, {1, std::numeric_limits<double>::infinity(), 3}}}};
  const std::string csv = figure_csv(f);
  CHECK(csv.find("fig,a,1,inf") != std::string::npos);
  const std::string svg = figure_svg(f);
  CHECK(svg.rfind("<svg", 0) == 0);
  std::size_t circles = 0;
  for (std::size_t p = svg.find("<circle"); p != std::string::npos; p = svg.find("<circle", p + 1)) ++circles;
  CHECK(circles == 2);
}
