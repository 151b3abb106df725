#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "spoofguard/detector.hpp"
#include "spoofguard/dtw.hpp"
#include "spoofguard/error.hpp"
#include "spoofguard/geo.hpp"
#include "spoofguard/lstm.hpp"
#include "spoofguard/pipeline.hpp"
#include "spoofguard/simgen.hpp"
#include "spoofguard/turns.hpp"

namespace py = pybind11;
using namespace spoofguard;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<double> to_vector(const Array& a) {
  if (a.ndim() != 1) throw InvalidInputError("expected a 1-d array");
  return {a.data(), a.data() + a.size()};
}

py::dict trace_dict(const simgen::SensorTrace& trace) {
  py::dict channels;
  for (const auto& ch : trace.channels) {
    std::vector<double> t, v;
    for (const auto& sample : ch.samples) {
      t.push_back(sample.t);
      v.push_back(sample.value);
    }
    channels[py::str(ch.name)] = py::make_tuple(Array(static_cast<py::ssize_t>(t.size()), t.data()),
                                                Array(static_cast<py::ssize_t>(v.size()), v.data()));
  }
  py::dict out;
  out["channels"] = channels;
  out["ground_truth"] = py::module_::import("json").attr("loads")(simgen::ground_truth_json(trace).dump());
  return out;
}

py::object json_to_py(const nlohmann::json& doc) {
  return py::module_::import("json").attr("loads")(doc.dump());
}

nlohmann::json py_to_json(const py::object& obj) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(obj).cast<std::string>());
}

pipeline::RunConfig run_config(const py::object& config) {
  return config.is_none() ? pipeline::RunConfig{} : pipeline::run_config_from_json(py_to_json(config));
}

std::vector<dtw::LabeledTemplate> to_templates(const std::vector<std::pair<Array, std::string>>& templates) {
  std::vector<dtw::LabeledTemplate> out;
  for (const auto& [series, label] : templates) out.push_back({to_vector(series), parse_turn_label(label)});
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "GNSS spoofing detection toolkit";

  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);

  m.def(
      "haversine_distance",
      [](double lat1, double lon1, double lat2, double lon2) {
        return geo::haversine_distance(geo::GeoPoint::from_degrees(lat1, lon1),
                                       geo::GeoPoint::from_degrees(lat2, lon2));
      },
      py::arg("lat1_deg"), py::arg("lon1_deg"), py::arg("lat2_deg"), py::arg("lon2_deg"),
      "Great-circle distance in meters.");

  m.def("compute_threshold", &detector::compute_threshold, py::arg("model_max_abs_error_m"),
        py::arg("positioning_error_m"));

  m.def(
      "dtw",
      [](const Array& a, const Array& b, std::optional<std::size_t> radius) {
        const auto x = to_vector(a), y = to_vector(b);
        const auto r = radius ? dtw::fastdtw(x, y, *radius) : dtw::dtw_exact(x, y);
        return py::make_tuple(r.distance, r.path);
      },
      py::arg("a"), py::arg("b"), py::arg("radius") = py::none(),
      "(distance, path); exact unless a FastDTW radius is given.");

  m.def(
      "knn_classify",
      [](const Array& query, const std::vector<std::pair<Array, std::string>>& templates, std::size_t k) {
        const auto tpl = to_templates(templates);
        dtw::KnnConfig cfg;
        cfg.k = k;
        return std::string(to_string(dtw::knn_classify(to_vector(query), tpl, cfg).label));
      },
      py::arg("query"), py::arg("templates"), py::arg("k") = 3, "Label of the query among (series, label) templates.");

  m.def(
      "simulate",
      [](std::uint64_t seed, double duration_s, bool include_stop, double gnss_noise_m) {
        auto route = simgen::random_route(seed, duration_s, include_stop);
        route.noise.gnss_m = gnss_noise_m;
        return trace_dict(simgen::generate_trace(route));
      },
      py::arg("seed"), py::arg("duration_s") = 40.0, py::arg("include_stop") = true, py::arg("gnss_noise_m") = 0.0,
      "Simulated drive as {'channels': {name: (t, value)}, 'ground_truth': {...}}.");

  m.def(
      "load_trace", [](const std::filesystem::path& dir) { return trace_dict(simgen::load_trace(dir)); },
      py::arg("directory"));

  m.def(
      "model_info",
      [](const std::filesystem::path& path) {
        const auto net = lstm::load_model(path);
        py::dict d;
        d["hidden"] = net.dims().hidden;
        d["window"] = net.metadata.window;
        d["feature_order"] = net.metadata.feature_order;
        d["validation_rmse"] = net.metadata.validation_rmse;
        d["validation_max_abs_error"] = net.metadata.validation_max_abs_error;
        d["validation_mae"] = net.metadata.validation_mae;
        d["seed"] = net.metadata.seed;
        d["config_hash"] = net.metadata.config_hash;
        d["parameters"] = net.parameter_count();
        return d;
      },
      py::arg("path"));

  m.def(
      "predict_shift",
      [](const std::filesystem::path& path, const py::array_t<double, py::array::c_style | py::array::forcecast>& windows) {
        const auto net = lstm::load_model(path);
        if (windows.ndim() != 3 || static_cast<std::size_t>(windows.shape(2)) != lstm::kFeatureCount) {
          throw DimensionError("windows must have shape (n, W, 4)");
        }
        const auto n = static_cast<std::size_t>(windows.shape(0));
        const auto w = static_cast<Eigen::Index>(windows.shape(1));
        std::vector<lstm::SupervisedWindow> batch(n);
        const double* p = windows.data();
        for (auto& sw : batch) {
          sw.inputs.resize(w, static_cast<Eigen::Index>(lstm::kFeatureCount));
          std::copy(p, p + sw.inputs.size(), sw.inputs.data());
          p += sw.inputs.size();
        }
        const auto out = lstm::predict(net, batch);
        return Array(static_cast<py::ssize_t>(out.size()), out.data());
      },
      py::arg("model_path"), py::arg("windows"), "Shifts in meters for scaled (n, W, 4) windows.");

  m.def(
      "detect",
      [](const std::filesystem::path& trace_dir, const std::filesystem::path& model_path,
         const std::filesystem::path& templates_dir, const py::object& config) {
        auto c = run_config(config);
        const auto model = lstm::load_model(model_path);
        const auto templates = turns::load_templates(templates_dir);
        c.detection.model_max_abs_error_m = model.metadata.validation_max_abs_error;
        const auto report =
            std::filesystem::exists(trace_dir / "attack.json")
                ? detector::run_detection(attacks::load_spoofed(trace_dir), model, templates, c.detection, c.routing)
                : detector::run_detection(simgen::load_trace(trace_dir), model, templates, c.detection, nullptr,
                                          c.routing);
        return json_to_py(detector::to_json(report.summary));
      },
      py::arg("trace_dir"), py::arg("model_path"), py::arg("templates_dir"), py::arg("config") = py::none(),
      "Runs the detector on a saved trace and returns the summary.");

  m.def(
      "default_config", [] { return json_to_py(pipeline::to_json(pipeline::RunConfig{})); },
      "The default run configuration as a dict.");

  m.def(
      "config_hash", [](const py::object& config) { return pipeline::config_hash(run_config(config)); },
      py::arg("config") = py::none());
}
