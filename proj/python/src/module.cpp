#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "meg/channel/channel.hpp"
#include "meg/errors.hpp"
#include "meg/expcli/bundle.hpp"
#include "meg/expcli/eval.hpp"
#include "meg/expcli/power.hpp"
#include "meg/expcli/sweep.hpp"
#include "meg/expcli/table.hpp"
#include "meg/metrics/metrics.hpp"
#include "meg/protocol/frame.hpp"

namespace py = pybind11;
using namespace meg;
using namespace meg::expcli;

namespace {

const ConfigField& find_field(const std::string& section, const std::string& key) {
  for (const auto& f : config_fields()) {
    if (f.section == section && f.key == key) return f;
  }
  throw ConfigError("unknown config key " + section + "." + key);
}

py::array_t<float> image_array(const genmodel::PixelImage& img) {
  py::array_t<float> a({img.channels, img.height, img.width});
  std::copy(img.values.begin(), img.values.end(), a.mutable_data());
  return a;
}

py::dict generation_dict(const protocol::GenerationResult& r) {
  py::dict d;
  d["mode"] = metrics::to_string(r.mode);
  d["image"] = image_array(r.image);
  d["psnr_db"] = r.report.psnr_db;
  d["fid"] = r.report.fid_score;
  d["mse"] = r.report.mse;
  d["symbols"] = r.report.symbols;
  d["power_log"] = r.power_log;
  d["degraded"] = r.degraded;
  return d;
}

py::list train(const ExperimentConfig& c) {
  TrainReport report;
  {
    py::gil_scoped_release release;
    report = cmd_train(c);
  }
  py::list out;
  for (const auto& s : report.stages) {
    py::dict d;
    d["stage"] = s.stage;
    d["file"] = s.file;
    d["cached"] = s.cached;
    d["seconds"] = s.seconds;
    out.append(d);
  }
  return out;
}

py::list sweep(const ExperimentConfig& c) {
  SweepResult result;
  {
    py::gil_scoped_release release;
    result = run_sweep(c, load_bundle(c));
  }
  py::list out;
  for (const auto& r : result.rows) {
    py::dict d;
    d["mode"] = metrics::to_string(r.mode);
    d["compression_rate"] = r.compression_rate;
    d["snr_db"] = r.snr_db;
    d["trial"] = r.trial;
    d["psnr_db"] = r.psnr_db;
    d["fid_proxy"] = r.fid_proxy;
    d["symbols"] = r.symbols;
    d["seed"] = r.seed;
    out.append(d);
  }
  return out;
}

py::dict power(const ExperimentConfig& c) {
  PowerResult result;
  {
    py::gil_scoped_release release;
    result = run_power(c, load_bundle(c));
  }
  py::list rows;
  for (const auto& r : result.rows) {
    py::dict d;
    d["p_max"] = r.p_max;
    d["uniform_fid"] = r.uniform_fid;
    d["drl_fid"] = r.drl_fid;
    d["n"] = r.n;
    d["mean_gain"] = r.comparison.mean_difference;
    d["wins"] = r.comparison.wins;
    d["losses"] = r.comparison.losses;
    d["ties"] = r.comparison.ties;
    d["sign_p"] = r.comparison.p_value;
    rows.append(d);
  }
  py::dict out;
  out["rows"] = rows;
  out["audit_steps"] = result.audit.steps;
  out["audit_violations"] = result.audit.violations;
  return out;
}

py::dict table(const ExperimentConfig& c) {
  const TableReport t = table_report(c);
  py::list symbols;
  for (const auto& s : t.symbols) {
    py::dict d;
    d["mode"] = metrics::to_string(s.mode);
    d["compression_rate"] = s.compression_rate;
    d["symbols"] = s.symbols;
    symbols.append(d);
  }
  py::list params;
  for (const auto& b : t.parameters) {
    py::dict d;
    py::list layers;
    for (const auto& l : b.layers) layers.append(py::make_tuple(l.layer, l.parameters));
    d["compression_rate"] = b.compression_rate;
    d["layers"] = layers;
    d["total"] = b.total;
    params.append(d);
  }
  py::dict out;
  out["symbols"] = symbols;
  out["parameters"] = params;
  return out;
}

py::dict evaluate(const ExperimentConfig& c, const std::string& prompt, double rate, double snr_db, bool perfect) {
  protocol::EndToEndResult result;
  {
    py::gil_scoped_release release;
    result = run_eval(c, load_bundle(c), {prompt, rate, snr_db, perfect});
  }
  py::dict out;
  out["ground_truth"] = image_array(result.ground_truth);
  py::list modes;
  for (const auto& r : result.results) modes.append(generation_dict(r));
  out["results"] = modes;
  return out;
}

double psnr(py::array_t<float, py::array::c_style | py::array::forcecast> a,
            py::array_t<float, py::array::c_style | py::array::forcecast> b, double i_max) {
  return metrics::psnr({a.data(), static_cast<std::size_t>(a.size())}, {b.data(), static_cast<std::size_t>(b.size())},
                       i_max);
}

py::array_t<double> fading_trace(const std::string& kind, std::size_t block_length, std::size_t blocks,
                                 std::uint64_t seed) {
  const auto tr = channel::sample_fading_trace({channel::parse_channel_kind(kind), block_length, 0.0}, blocks, seed);
  py::array_t<double> a(static_cast<py::ssize_t>(tr.gains.size()));
  std::copy(tr.gains.begin(), tr.gains.end(), a.mutable_data());
  return a;
}

py::bytes encode_frame(double rate, std::array<std::uint16_t, 3> latent_shape, float scale, std::uint32_t block_length,
                       const std::vector<float>& payload) {
  protocol::SeedFrame f;
  f.compression_q16 = protocol::compression_to_q16(rate);
  f.latent_channels = latent_shape[0];
  f.latent_height = latent_shape[1];
  f.latent_width = latent_shape[2];
  f.scale = scale;
  f.block_length = block_length;
  f.payload = payload;
  const auto bytes = protocol::encode_frame(f);
  return {reinterpret_cast<const char*>(bytes.data()), bytes.size()};
}

py::dict decode_frame(const py::bytes& data) {
  const std::string_view s = data;
  const auto f = protocol::decode_frame({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
  py::dict d;
  d["version"] = f.version;
  d["compression_rate"] = f.compression_rate();
  d["latent_shape"] = py::make_tuple(f.latent_channels, f.latent_height, f.latent_width);
  d["scale"] = f.scale;
  d["block_length"] = f.block_length;
  d["payload"] = f.payload;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Mobile edge generation simulator";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<FrameError>(m, "FrameError", PyExc_ValueError);

  py::class_<ExperimentConfig>(m, "Config")
      .def(py::init([](const std::string& preset) { return preset_config(parse_preset(preset)); }),
           py::arg("preset") = "desk")
      .def("apply", [](ExperimentConfig& c, const std::string& text) { apply_ini_text(c, text); }, py::arg("ini"))
      .def("get", [](const ExperimentConfig& c, const std::string& section,
                     const std::string& key) { return find_field(section, key).get(c); })
      .def("set", [](ExperimentConfig& c, const std::string& section, const std::string& key,
                     const std::string& value) { find_field(section, key).set(c, value); })
      .def("validate", &ExperimentConfig::validate)
      .def("canonical", [](const ExperimentConfig& c) { return canonical_form(c); })
      .def_property_readonly("hash", [](const ExperimentConfig& c) { return config_hash(c); })
      .def_property_readonly("preset", [](const ExperimentConfig& c) { return to_string(c.preset); })
      .def_readwrite("seed", &ExperimentConfig::seed)
      .def_readwrite("jobs", &ExperimentConfig::jobs)
      .def_readwrite("out", &ExperimentConfig::out)
      .def("__repr__", [](const ExperimentConfig& c) { return "<Config " + to_string(c.preset) + " " + config_hash(c) + ">"; });

  m.def("train", &train, py::arg("config"), "Train or reuse the cached model bundle");
  m.def("sweep", &sweep, py::arg("config"), "PSNR and FID proxy rows over modes, rates and SNRs");
  m.def("power", &power, py::arg("config"), "PPO power allocation against uniform allocation");
  m.def("table", &table, py::arg("config"), "Symbol counts and codec parameter counts");
  m.def("evaluate", &evaluate, py::arg("config"), py::arg("prompt") = "bright ring center",
        py::arg("compression_rate") = 0.5, py::arg("snr_db") = 10.0, py::arg("perfect") = false);

  m.def("psnr", &psnr, py::arg("generated"), py::arg("reference"), py::arg("i_max") = 255.0);
  m.def("frechet_distance", &metrics::frechet_distance, py::arg("features_g"), py::arg("features_0"));
  m.def("fading_trace", &fading_trace, py::arg("kind"), py::arg("block_length"), py::arg("blocks"), py::arg("seed"));
  m.def("encode_frame", &encode_frame, py::arg("compression_rate"), py::arg("latent_shape"), py::arg("scale"),
        py::arg("block_length"), py::arg("payload"));
  m.def("decode_frame", &decode_frame, py::arg("data"));
}
