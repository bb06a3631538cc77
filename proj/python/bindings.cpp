#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>
#include <sstream>

#include "facevox/cli/commands.hpp"
#include "facevox/evaluation/evaluation.hpp"
#include "facevox/geometry/dataset.hpp"
#include "facevox/model/model.hpp"
#include "facevox/training/training.hpp"

namespace py = pybind11;
using namespace facevox;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// Depth views map to (height, width) arrays; grids to (z, y, x) arrays,
// matching the x-fastest storage order.
Array to_array(const geometry::DepthView& d) {
  Array a({d.height, d.width});
  std::memcpy(a.mutable_data(), d.values.data(), d.values.size() * sizeof(double));
  return a;
}

Array to_array(const geometry::VoxelGrid& g) {
  Array a({g.n, g.n, g.n});
  std::memcpy(a.mutable_data(), g.values.data(), g.values.size() * sizeof(double));
  return a;
}

geometry::DepthView to_depth(const Array& a) {
  if (a.ndim() != 2) throw py::value_error("depth view must be a 2-D array");
  geometry::DepthView d(a.shape(1), a.shape(0));
  std::memcpy(d.values.data(), a.data(), d.values.size() * sizeof(double));
  return d;
}

geometry::VoxelGrid to_grid(const Array& a) {
  if (a.ndim() != 3 || a.shape(0) != a.shape(1) || a.shape(1) != a.shape(2))
    throw py::value_error("voxel grid must be a cubic 3-D array");
  geometry::VoxelGrid g(a.shape(0));
  std::memcpy(g.values.data(), a.data(), g.values.size() * sizeof(double));
  return g;
}

std::vector<geometry::Vec3> to_points(const Array& a) {
  if (a.ndim() != 2 || a.shape(1) != 3) throw py::value_error("points must be an (N, 3) array");
  std::vector<geometry::Vec3> out(a.shape(0));
  for (py::ssize_t i = 0; i < a.shape(0); ++i) out[i] = {a.at(i, 0), a.at(i, 1), a.at(i, 2)};
  return out;
}

cli::RunConfig config_from(const std::map<std::string, std::string>& settings) {
  cli::KeyValues kv(settings.begin(), settings.end());
  return cli::resolve_config({}, kv);
}

std::string value_text(const py::handle& v) {
  if (py::isinstance<py::bool_>(v)) return v.cast<bool>() ? "true" : "false";
  if (py::isinstance<py::list>(v) || py::isinstance<py::tuple>(v)) {
    std::ostringstream s;
    bool first = true;
    for (auto item : v) {
      s << (first ? "" : ",") << py::str(item).cast<std::string>();
      first = false;
    }
    return s.str();
  }
  return py::str(v).cast<std::string>();
}

std::map<std::string, std::string> settings_from(const py::kwargs& kwargs) {
  std::map<std::string, std::string> out;
  for (auto [k, v] : kwargs) out[k.cast<std::string>()] = value_text(v);
  return out;
}

class Generator {
 public:
  explicit Generator(const std::filesystem::path& checkpoint) : bundle_(training::load_generator(checkpoint)) {}
  Array predict(const Array& depth) const {
    return to_array(model::generator_forward(bundle_.config, bundle_.params, to_depth(depth)));
  }
  std::size_t view_size() const { return bundle_.config.view_size; }
  std::size_t parameter_count() const { return bundle_.params.scalar_count(); }

 private:
  training::GeneratorBundle bundle_;
};

}  // namespace

PYBIND11_MODULE(_facevox, m) {
  m.doc() = "Depth view to voxel grid reconstruction";

  py::register_exception<cli::ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<training::TrainingAborted>(m, "TrainingAborted", PyExc_ArithmeticError);

  m.def(
      "synth_sample",
      [](std::uint64_t seed, const py::kwargs& kwargs) {
        const auto s = geometry::synth_sample(seed, config_from(settings_from(kwargs)).synth);
        return py::make_tuple(to_array(s.depth), to_array(s.grid));
      },
      py::arg("seed"), "Synthesize one (depth, grid) pair. Keyword arguments are config keys.");

  m.def(
      "iou", [](const Array& p, const Array& t, double threshold) { return evaluation::iou(to_grid(p), to_grid(t), threshold); },
      py::arg("pred"), py::arg("truth"), py::arg("threshold") = 0.5);
  m.def(
      "ce", [](const Array& p, const Array& t) { return evaluation::ce_metric(to_grid(p), to_grid(t)); }, py::arg("pred"),
      py::arg("truth"));
  m.def(
      "hausdorff",
      [](const Array& a, const Array& b) {
        if (a.ndim() == 3) return evaluation::hausdorff(to_grid(a), to_grid(b));
        const auto pa = to_points(a), pb = to_points(b);
        return evaluation::hausdorff(std::span<const geometry::Vec3>(pa), std::span<const geometry::Vec3>(pb));
      },
      py::arg("a"), py::arg("b"), "Symmetric Hausdorff distance between point sets or occupied voxels.");

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::vector<const char*> argv{"facevox"};
        for (const auto& a : args) argv.push_back(a.c_str());
        std::ostringstream out, err;
        const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Run a command-line invocation; returns (exit code, stdout, stderr).");

  py::class_<Generator>(m, "Generator")
      .def(py::init<const std::filesystem::path&>(), py::arg("checkpoint"))
      .def("predict", &Generator::predict, py::arg("depth"))
      .def_property_readonly("view_size", &Generator::view_size)
      .def_property_readonly("parameter_count", &Generator::parameter_count);

  py::class_<training::Trainer>(m, "Trainer")
      .def(py::init([](const py::kwargs& kwargs) { return training::Trainer(config_from(settings_from(kwargs)).train); }),
           "Fresh trainer. Keyword arguments are config keys.")
      .def_static("load", &training::Trainer::load, py::arg("path"))
      .def("save", &training::Trainer::save, py::arg("path"))
      .def(
          "train_iteration",
          [](training::Trainer& t, const Array& depth, const Array& grid) {
            const auto l = t.train_iteration({to_depth(depth), to_grid(grid)});
            py::dict d;
            d["critic"] = l.critic;
            d["generator"] = l.generator;
            d["bce"] = l.bce;
            return d;
          },
          py::arg("depth"), py::arg("grid"))
      .def(
          "predict",
          [](const training::Trainer& t, const Array& depth) {
            return to_array(model::generator_forward(t.options().model, t.generator(), to_depth(depth)));
          },
          py::arg("depth"))
      .def_property_readonly("iteration", &training::Trainer::iteration)
      .def_property_readonly("critic_steps", [](const training::Trainer& t) { return t.critic_state().t; })
      .def_property_readonly("generator_steps", [](const training::Trainer& t) { return t.generator_state().t; });
}
