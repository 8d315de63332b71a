#include "simsr/ad/grad_check.hpp"
#include "simsr/ad/ops.hpp"
#include "simsr/baselines.hpp"
#include "simsr/datagen.hpp"
#include "simsr/error.hpp"
#include "simsr/eval.hpp"
#include "simsr/geodesy.hpp"
#include "simsr/network.hpp"

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace simsr;

namespace {

using IndexArray = py::array_t<std::uint32_t, py::array::c_style | py::array::forcecast>;

// Dict values may be numbers, strings or sequences of numbers.
KeyValues to_key_values(const py::dict& d) {
  KeyValues kv;
  for (const auto& [k, v] : d) {
    std::string text;
    if (py::isinstance<py::list>(v) || py::isinstance<py::tuple>(v)) {
      for (const auto& item : v) text += (text.empty() ? "" : ", ") + py::str(item).cast<std::string>();
    } else {
      text = py::str(v).cast<std::string>();
    }
    kv.set(py::str(k).cast<std::string>(), text);
  }
  return kv;
}

py::dict to_dict(const KeyValues& kv) {
  py::dict d;
  for (const auto& [k, v] : kv.entries()) d[py::str(k)] = v;
  return d;
}

template <std::size_t N>
std::vector<std::array<std::uint32_t, N>> to_cells(const IndexArray& a) {
  if (a.ndim() != 2 || a.shape(1) != static_cast<py::ssize_t>(N))
    throw Error(Errc::shape_mismatch, "expected an index array with " + std::to_string(N) + " columns");
  std::vector<std::array<std::uint32_t, N>> out(static_cast<std::size_t>(a.shape(0)));
  auto r = a.unchecked<2>();
  for (py::ssize_t i = 0; i < a.shape(0); ++i)
    for (std::size_t c = 0; c < N; ++c) out[static_cast<std::size_t>(i)][c] = r(i, static_cast<py::ssize_t>(c));
  return out;
}

template <std::size_t N>
IndexArray from_cells(const std::vector<std::array<std::uint32_t, N>>& cells) {
  IndexArray out({static_cast<py::ssize_t>(cells.size()), static_cast<py::ssize_t>(N)});
  auto w = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < cells.size(); ++i)
    for (std::size_t c = 0; c < N; ++c) w(static_cast<py::ssize_t>(i), static_cast<py::ssize_t>(c)) = cells[i][c];
  return out;
}

py::array_t<double> table_distances(const NeighborhoodTable& t) {
  py::array_t<double> out({static_cast<py::ssize_t>(t.rows), static_cast<py::ssize_t>(t.k)});
  std::copy(t.distance.begin(), t.distance.end(), out.mutable_data());
  return out;
}

IndexArray table_indices(const NeighborhoodTable& t) {
  IndexArray out({static_cast<py::ssize_t>(t.rows), static_cast<py::ssize_t>(t.k)});
  std::copy(t.index.begin(), t.index.end(), out.mutable_data());
  return out;
}

}  // namespace

PYBIND11_MODULE(_simsr, m) {
  m.doc() = "Learned super-resolution of coarse lattice simulations onto detailed surfaces";

  static py::exception<Error> error_type(m, "SimsrError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::handle(error_type.ptr())(std::string(errc_name(e.code())) + ": " + e.what());
      exc.attr("code") = errc_name(e.code());
      PyErr_SetObject(error_type.ptr(), exc.ptr());
    }
  });

  py::class_<SurfaceMesh>(m, "SurfaceMesh")
      .def(py::init([](const Points& v, const IndexArray& t) { return SurfaceMesh(v, to_cells<3>(t)); }),
           py::arg("vertices"), py::arg("triangles"))
      .def_property_readonly("vertices", &SurfaceMesh::vertices)
      .def_property_readonly("triangles", [](const SurfaceMesh& s) { return from_cells(s.triangles()); })
      .def_property_readonly("vertex_count", &SurfaceMesh::vertex_count)
      .def("__repr__", [](const SurfaceMesh& s) {
        return "<SurfaceMesh vertices=" + std::to_string(s.vertex_count()) +
               " triangles=" + std::to_string(s.triangle_count()) + ">";
      });

  py::class_<LatticeMesh>(m, "LatticeMesh")
      .def(py::init([](const Points& v, const IndexArray& t) { return LatticeMesh(v, to_cells<4>(t)); }),
           py::arg("vertices"), py::arg("tetrahedra"))
      .def_property_readonly("vertices", &LatticeMesh::vertices)
      .def_property_readonly("tetrahedra", [](const LatticeMesh& l) { return from_cells(l.tetrahedra()); })
      .def_property_readonly("vertex_count", &LatticeMesh::vertex_count)
      .def("__repr__", [](const LatticeMesh& l) {
        return "<LatticeMesh vertices=" + std::to_string(l.vertex_count()) +
               " tetrahedra=" + std::to_string(l.tetrahedra().size()) + ">";
      });

  m.def("load_surface", &load_surface, py::arg("path"));
  m.def("load_lattice", &load_lattice, py::arg("path"));
  m.def("box_lattice", &box_lattice, py::arg("nx"), py::arg("ny"), py::arg("nz"), py::arg("lo"), py::arg("hi"));

  py::class_<EmbeddingWeights>(m, "EmbeddingWeights");
  m.def("embed_surface", &embed_surface, py::arg("surface"), py::arg("lattice"));
  m.def("embedded_predict", &embedded_predict, py::arg("weights"), py::arg("lr_disp"));

  py::class_<NeighborhoodTable>(m, "NeighborhoodTable")
      .def_readonly("k", &NeighborhoodTable::k)
      .def_readonly("rows", &NeighborhoodTable::rows)
      .def_property_readonly("index", &table_indices)
      .def_property_readonly("distance", &table_distances);
  m.def("read_table", &read_table, py::arg("path"));
  m.def("write_table", &write_table, py::arg("table"), py::arg("path"));

  py::class_<Precomputed>(m, "Precomputed")
      .def_property_readonly("assignment", [](const Precomputed& p) { return p.assignment.hr_index; })
      .def_property_readonly("assignment_cost", [](const Precomputed& p) { return p.assignment.total_cost; })
      .def_readonly("table", &Precomputed::table);
  m.def("precompute", &precompute, py::arg("surface"), py::arg("lattice"), py::arg("k") = 20,
        py::call_guard<py::gil_scoped_release>());
  m.def(
      "linear_assignment", [](const Eigen::MatrixXd& costs) { return linear_assignment(costs).hr_index; },
      py::arg("costs"));

  py::class_<DisplacementFrame>(m, "DisplacementFrame")
      .def(py::init<>())
      .def_readwrite("frame_id", &DisplacementFrame::frame_id)
      .def_readwrite("params", &DisplacementFrame::params)
      .def_readwrite("lr_disp", &DisplacementFrame::lr_disp)
      .def_readwrite("hr_disp", &DisplacementFrame::hr_disp);

  py::class_<FrameSet>(m, "FrameSet")
      .def(py::init<>())
      .def_readwrite("lattice_vertices", &FrameSet::lattice_vertices)
      .def_readwrite("surface_vertices", &FrameSet::surface_vertices)
      .def_readwrite("frames", &FrameSet::frames)
      .def("__len__", [](const FrameSet& f) { return f.frames.size(); })
      .def(
          "find",
          [](const FrameSet& f, std::uint32_t id) -> const DisplacementFrame& {
            const auto* frame = f.find(id);
            if (!frame) throw Error(Errc::index_out_of_range, "frame " + std::to_string(id) + " not in the container");
            return *frame;
          },
          py::arg("frame_id"), py::return_value_policy::copy);
  m.def("read_frames", &read_frames, py::arg("path"));
  m.def("write_frames", &write_frames, py::arg("frames"), py::arg("path"));

  py::class_<Dataset>(m, "Dataset")
      .def_readonly("surface", &Dataset::surface)
      .def_readonly("lattice", &Dataset::lattice)
      .def_readwrite("frames", &Dataset::frames)
      .def_readonly("train_ids", &Dataset::train_ids)
      .def_readonly("test_ids", &Dataset::test_ids);

  m.def(
      "gen_config", [](const py::dict& overrides) { return to_dict(GenConfig::from(to_key_values(overrides)).to_key_values()); },
      py::arg("overrides") = py::dict(), "Full generator config with overrides applied.");
  m.def(
      "generate",
      [](const py::dict& config) {
        const auto cfg = GenConfig::from(to_key_values(config));
        py::gil_scoped_release release;
        return generate(cfg);
      },
      py::arg("config") = py::dict());
  m.def(
      "write_dataset",
      [](const Dataset& data, const py::dict& config, const std::filesystem::path& dir) {
        write_dataset(data, GenConfig::from(to_key_values(config)), dir);
        return dir / "manifest.json";
      },
      py::arg("dataset"), py::arg("config"), py::arg("directory"));
  m.def("load_dataset", &load_dataset, py::arg("manifest"));
  m.def(
      "perturb_force",
      [](const DisplacementFrame& f, const LatticeMesh& l, const Vec3& site, const Vec3& dir, double mag, double radius) {
        return perturb_force(f, l, site, dir, mag, radius);
      },
      py::arg("frame"), py::arg("lattice"), py::arg("site"), py::arg("direction"), py::arg("magnitude"),
      py::arg("radius") = 15.0);

  m.def(
      "model_config", [](const py::dict& overrides) { return to_dict(ModelConfig::from(to_key_values(overrides)).to_key_values()); },
      py::arg("overrides") = py::dict(), "Full model config with overrides applied.");
  m.def(
      "positional_encode",
      [](const Points& p, int levels) {
        const auto t = positional_encode(p, levels);
        py::array_t<double> out({static_cast<py::ssize_t>(t.rows()), static_cast<py::ssize_t>(t.cols())});
        std::copy(t.data(), t.data() + t.size(), out.mutable_data());
        return out;
      },
      py::arg("positions"), py::arg("levels"));

  py::class_<Model>(m, "Model")
      .def(py::init([](const py::dict& config, const SurfaceMesh& s, const LatticeMesh& l, const NeighborhoodTable& t) {
             return std::make_unique<Model>(ModelConfig::from(to_key_values(config)), s, l, t);
           }),
           py::arg("config"), py::arg("surface"), py::arg("lattice"), py::arg("table"))
      .def_property_readonly("config", [](const Model& model) { return to_dict(model.config().to_key_values()); })
      .def_property_readonly("parameter_count", [](const Model& model) { return model.params().scalar_count(); })
      .def(
          "train",
          [](Model& model, const FrameSet& frames, const std::vector<std::uint32_t>& ids) {
            std::vector<EpochLog> log;
            {
              py::gil_scoped_release release;
              log = model.train(frames, ids);
            }
            py::list out;
            for (const auto& e : log) {
              py::dict d;
              d["epoch"] = e.epoch;
              d["total"] = e.total;
              d["recon"] = e.recon;
              d["normal"] = e.normal;
              d["reg"] = e.reg;
              d["beta"] = e.beta;
              out.append(d);
            }
            return out;
          },
          py::arg("frames"), py::arg("ids"))
      .def("predict_displacement", &Model::predict_displacement, py::arg("lr_disp"),
           py::call_guard<py::gil_scoped_release>())
      .def("infer", &Model::infer, py::arg("lr_disp"), py::call_guard<py::gil_scoped_release>())
      .def("interpolation_weights",
           [](const Model& model) {
             ad::Tape tape;
             const auto w = model.interpolation_weights(tape, false).value();
             py::array_t<double> out({static_cast<py::ssize_t>(model.surface().vertex_count()),
                                      static_cast<py::ssize_t>(model.interp_k())});
             std::copy(w.data(), w.data() + w.size(), out.mutable_data());
             return out;
           })
      .def("save", &Model::save, py::arg("path"))
      .def("load", &Model::load, py::arg("path"));

  py::class_<RbfInterpolator>(m, "RbfInterpolator")
      .def(py::init([](const SurfaceMesh& s, const std::vector<std::uint32_t>& assignment, double sigma) {
             AssignmentMap map;
             map.hr_index = assignment;
             return RbfInterpolator(mapped_geodesic_distances(s, map), map, sigma);
           }),
           py::arg("surface"), py::arg("assignment"), py::arg("sigma") = 0.0)
      .def_property_readonly("sigma", &RbfInterpolator::sigma)
      .def("fit", &RbfInterpolator::fit, py::arg("lr_disp"))
      .def("evaluate", &RbfInterpolator::evaluate, py::arg("weights"))
      .def("predict", &RbfInterpolator::predict, py::arg("lr_disp"));

  m.def(
      "mls_reconstruct",
      [](const LatticeMesh& l, const Points& lr, const SurfaceMesh& s, const NeighborhoodTable& t, int degree,
         double sigma, int neighbors, bool trivariate) {
        MlsConfig cfg;
        cfg.degree = degree;
        cfg.sigma = sigma;
        cfg.neighbors = neighbors;
        cfg.trivariate = trivariate;
        return mls_reconstruct(l, lr, s, t, cfg);
      },
      py::arg("lattice"), py::arg("lr_disp"), py::arg("surface"), py::arg("table"), py::arg("degree") = 2,
      py::arg("sigma") = 0.0, py::arg("neighbors") = 20, py::arg("trivariate") = false,
      py::call_guard<py::gil_scoped_release>());

  py::class_<VertexErrors>(m, "VertexErrors")
      .def_readonly("errors", &VertexErrors::errors)
      .def_readonly("mean", &VertexErrors::mean)
      .def_readonly("max", &VertexErrors::max);
  m.def("per_vertex_error", &per_vertex_error, py::arg("pred"), py::arg("target"));

  py::class_<ErrorStats>(m, "ErrorStats")
      .def_readonly("mean", &ErrorStats::mean)
      .def_readonly("median", &ErrorStats::median)
      .def_readonly("std", &ErrorStats::std)
      .def_readonly("max", &ErrorStats::max)
      .def_readonly("min", &ErrorStats::min)
      .def_readonly("frames", &ErrorStats::frames);
  m.def("aggregate", &aggregate, py::arg("frame_means"));
  m.def("export_heatmap", &export_heatmap, py::arg("surface"), py::arg("values"), py::arg("path"));

  m.def(
      "grad_check_sine",
      [](const std::vector<double>& point, double omega, double h) {
        ad::Tensor x(ad::Shape{point.size()}, std::vector<double>(point));
        return ad::grad_check([omega](ad::Tape&, const ad::Var& v) { return ad::sum(ad::sine(v, omega)); }, x, h);
      },
      py::arg("point"), py::arg("omega") = 1.0, py::arg("h") = 1e-6,
      "Max relative error between the reverse-mode and finite-difference gradients of sum(sin(omega x)).");
}
