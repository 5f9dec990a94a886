#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "spinemorph/error.hpp"
#include "spinemorph/evaluation.hpp"
#include "spinemorph/mesh.hpp"
#include "spinemorph/mesh_io.hpp"
#include "spinemorph/morphometry.hpp"
#include "spinemorph/synthetic.hpp"

namespace py = pybind11;
using namespace spinemorph;

namespace {

using Points = py::array_t<double, py::array::c_style | py::array::forcecast>;
using Indices = py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>;

py::array_t<double> to_array(const std::vector<Vec3>& points) {
    py::array_t<double> out({static_cast<py::ssize_t>(points.size()), py::ssize_t{3}});
    auto view = out.mutable_unchecked<2>();
    for (std::size_t i = 0; i < points.size(); ++i)
        for (int k = 0; k < 3; ++k) view(static_cast<py::ssize_t>(i), k) = points[i][k];
    return out;
}

py::array_t<std::uint32_t> faces_array(const TriangleMesh& mesh) {
    py::array_t<std::uint32_t> out({static_cast<py::ssize_t>(mesh.face_count()), py::ssize_t{3}});
    auto view = out.mutable_unchecked<2>();
    for (std::size_t i = 0; i < mesh.face_count(); ++i)
        for (int k = 0; k < 3; ++k) view(static_cast<py::ssize_t>(i), k) = mesh.faces()[i][static_cast<std::size_t>(k)];
    return out;
}

TriangleMesh mesh_from_arrays(const Points& vertices, const Indices& faces) {
    if (vertices.ndim() != 2 || vertices.shape(1) != 3) throw py::value_error("vertices must have shape (n, 3)");
    if (faces.ndim() != 2 || faces.shape(1) != 3) throw py::value_error("faces must have shape (m, 3)");
    std::vector<Vec3> v(static_cast<std::size_t>(vertices.shape(0)));
    auto pv = vertices.unchecked<2>();
    for (py::ssize_t i = 0; i < vertices.shape(0); ++i) v[static_cast<std::size_t>(i)] = Vec3(pv(i, 0), pv(i, 1), pv(i, 2));
    std::vector<Face> f(static_cast<std::size_t>(faces.shape(0)));
    auto pf = faces.unchecked<2>();
    for (py::ssize_t i = 0; i < faces.shape(0); ++i)
        for (int k = 0; k < 3; ++k) {
            if (pf(i, k) < 0) throw py::value_error("negative face index");
            f[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] = static_cast<std::uint32_t>(pf(i, k));
        }
    return TriangleMesh(std::move(v), std::move(f));
}

py::dict measurements_dict(const Measurements& m) {
    py::dict d;
    for (std::size_t i = 0; i < kDimensionCount; ++i) d[py::str(std::string(kDimensionKeys[i]))] = m.values[i];
    return d;
}

py::dict landmarks_dict(const Landmarks& lm) {
    py::dict d;
    for (std::size_t i = 0; i < Landmarks::kNames.size(); ++i)
        d[py::str(std::string(Landmarks::kNames[i]))] = py::make_tuple(lm[i].x(), lm[i].y(), lm[i].z());
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Vertebral body morphometry on triangle meshes";

    static py::handle error_type = py::exception<Error>(m, "SpinemorphError", PyExc_ValueError).release();
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::object exc = error_type(e.what());
            exc.attr("code") = std::string(to_string(e.code()));
            PyErr_SetObject(error_type.ptr(), exc.ptr());
        }
    });

    m.attr("DIMENSIONS") = py::cast(std::vector<std::string>(kDimensionKeys.begin(), kDimensionKeys.end()));
    m.attr("LANDMARKS") = py::cast(std::vector<std::string>(Landmarks::kNames.begin(), Landmarks::kNames.end()));

    py::class_<TriangleMesh>(m, "Mesh")
        .def(py::init(&mesh_from_arrays), py::arg("vertices"), py::arg("faces"))
        .def_property_readonly("vertices", [](const TriangleMesh& self) { return to_array(self.vertices()); })
        .def_property_readonly("faces", &faces_array)
        .def_property_readonly("vertex_count", &TriangleMesh::vertex_count)
        .def_property_readonly("face_count", &TriangleMesh::face_count)
        .def("surface_area", &surface_area)
        .def("center_of_mass", [](const TriangleMesh& self) { return Eigen::Vector3d(center_of_mass(self)); })
        .def("vertex_normals", [](const TriangleMesh& self) { return to_array(vertex_normals(self)); })
        .def("density", &mesh_density)
        .def("obb",
             [](const TriangleMesh& self) {
                 const ObbFrame obb = oriented_bounding_box(self);
                 Eigen::Matrix3d axes;
                 for (int i = 0; i < 3; ++i) axes.row(i) = obb.axes[static_cast<std::size_t>(i)].transpose();
                 return py::make_tuple(Eigen::Vector3d(obb.center), axes,
                                       Eigen::Vector3d(obb.half_extents[0], obb.half_extents[1], obb.half_extents[2]));
             },
             "(center, axes as rows, half extents)")
        .def("cut",
             [](const TriangleMesh& self, const Eigen::Vector3d& origin, const Eigen::Vector3d& normal) {
                 return cut_mesh_by_plane(self, Plane::through(origin, normal));
             },
             py::arg("origin"), py::arg("normal"), "Keep the side the normal points to")
        .def("plane_intersection",
             [](const TriangleMesh& self, const Eigen::Vector3d& origin, const Eigen::Vector3d& normal) {
                 return to_array(plane_mesh_intersection(self, Plane::through(origin, normal)));
             },
             py::arg("origin"), py::arg("normal"))
        .def("line_intersection",
             [](const TriangleMesh& self, const Eigen::Vector3d& origin, const Eigen::Vector3d& direction) {
                 return to_array(line_mesh_intersection(self, origin, direction));
             },
             py::arg("origin"), py::arg("direction"))
        .def("__repr__", [](const TriangleMesh& self) {
            return "<Mesh " + std::to_string(self.vertex_count()) + " vertices, " + std::to_string(self.face_count()) +
                   " faces>";
        });

    m.def("load_mesh", [](const std::filesystem::path& p) { return load_mesh(p); }, py::arg("path"));
    m.def(
        "save_mesh",
        [](const TriangleMesh& mesh, const std::filesystem::path& p, bool binary) {
            save_mesh(mesh, p, MeshFormat::kAuto, SaveOptions{binary});
        },
        py::arg("mesh"), py::arg("path"), py::arg("binary") = false);

    m.def(
        "measure_manifest_json",
        [](const std::filesystem::path& p, double max_angle, bool fallback_single) {
            MeasureOptions opts{max_angle, fallback_single};
            SpineReport report;
            {
                py::gil_scoped_release release;
                report = measure_manifest(p, opts);
            }
            return report_to_json(report);
        },
        py::arg("manifest"), py::arg("max_angle") = 45.0, py::arg("fallback_single") = false);

    m.def(
        "generate_vertebra",
        [](double width, double depth, double height, double dome, double wedge, double resolution) {
            VertebraSpec spec;
            spec.width = width;
            spec.depth = depth;
            spec.height_central = height;
            spec.endplate_dome = dome;
            spec.wedge_angle_deg = wedge;
            GeneratedVertebra v = generate_vertebra(spec, resolution);
            return py::make_tuple(v.mesh, landmarks_dict(v.truth.landmarks), measurements_dict(v.truth.measurements));
        },
        py::arg("width") = 45.0, py::arg("depth") = 32.0, py::arg("height_central") = 25.0,
        py::arg("endplate_dome") = 0.0, py::arg("wedge_angle_deg") = 0.0, py::arg("resolution") = kDefaultResolution,
        "Returns (mesh, landmarks, measurements) in local coordinates");

    m.def(
        "generate_dataset",
        [](const std::filesystem::path& out, std::size_t count, std::uint64_t seed, double resolution,
           std::size_t vertebrae, double lordosis_min, double lordosis_max, unsigned jobs) {
            DatasetOptions opts;
            opts.count = count;
            opts.seed = seed;
            opts.resolution = resolution;
            opts.vertebra_count = vertebrae;
            opts.ranges.lordosis_deg = {lordosis_min, lordosis_max};
            opts.jobs = jobs;
            DatasetManifest ds;
            {
                py::gil_scoped_release release;
                ds = generate_dataset(opts, out);
            }
            return ds.manifests;
        },
        py::arg("out"), py::arg("count") = 50, py::arg("seed") = 7, py::arg("resolution") = kDefaultResolution,
        py::arg("vertebrae") = 5, py::arg("lordosis_min") = 40.0, py::arg("lordosis_max") = 74.0, py::arg("jobs") = 1,
        "Writes the dataset and returns the manifest paths");

    m.def("mae", [](const std::vector<double>& p, const std::vector<double>& t) { return mae(p, t); },
          py::arg("predicted"), py::arg("truth"));
    m.def(
        "icc",
        [](const Eigen::MatrixXd& ratings) {
            const IccResult r = icc(ratings);
            return py::make_tuple(r.value, r.zero_variance);
        },
        py::arg("ratings"), "ICC(2,1) of an (n targets, k raters) matrix; returns (value, zero_variance)");

    m.def(
        "evaluate_json",
        [](const std::filesystem::path& pred, const std::filesystem::path& truth) {
            return evaluation_to_json(evaluate(load_predictions(pred), read_annotations(truth)));
        },
        py::arg("pred"), py::arg("truth"));
}
