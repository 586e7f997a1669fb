#include "robct/calibration.hpp"
#include "robct/config.hpp"
#include "robct/digest.hpp"
#include "robct/error.hpp"
#include "robct/healpix.hpp"
#include "robct/parallel.hpp"
#include "robct/pipeline.hpp"
#include "robct/reconstruction.hpp"
#include "robct/serialize.hpp"
#include "robct/world.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

namespace py = pybind11;
using namespace robct;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

ExperimentConfig parse_config(const std::string& text) {
    return config_from_json(parse_json(text, ErrorCode::ConfigError));
}

Array to_array(const Volume& v) {
    Array a({v.n, v.n, v.n});
    std::memcpy(a.mutable_data(), v.values.data(), v.values.size() * sizeof(double));
    return a;
}

Volume from_array(const Array& a, double spacing) {
    if (a.ndim() != 3 || a.shape(0) != a.shape(1) || a.shape(1) != a.shape(2)) {
        throw Error(ErrorCode::InvalidArgument, "volume must be a cubic (n, n, n) array indexed [z, y, x]");
    }
    Volume v = Volume::centered(static_cast<int>(a.shape(0)), spacing);
    std::memcpy(v.values.data(), a.data(), v.values.size() * sizeof(double));
    return v;
}

RigidPose pose_from_matrix(const std::optional<Array>& m) {
    if (!m) return RigidPose::identity();
    if (m->ndim() != 2 || m->shape(0) != 4 || m->shape(1) != 4) throw Error(ErrorCode::InvalidArgument, "pose must be 4x4");
    const auto r = m->unchecked<2>();
    Mat3 rot;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) rot(i, j) = r(i, j);
    return {Quat(rot), Vec3(r(0, 3), r(1, 3), r(2, 3))};
}

Array pose_matrix(const RigidPose& p) {
    Array out({4, 4});
    auto w = out.mutable_unchecked<2>();
    const Mat3 r = p.rotation_matrix();
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) w(i, j) = i < 3 ? (j < 3 ? r(i, j) : p.translation()[i]) : (j == 3 ? 1.0 : 0.0);
    return out;
}

}  // namespace

PYBIND11_MODULE(_robct, m) {
    m.doc() = "Robotic sample holder CT: planning, simulation, calibration and reconstruction";
    static py::exception<Error> error(m, "RobctError");
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            PyErr_SetString(error.ptr(), e.what());
        }
    });

    m.def("set_thread_count", &set_thread_count, py::arg("threads"));

    m.def("npix", &npix, py::arg("n_side"));
    m.def(
        "pixel_center",
        [](int n_side, std::int64_t index) {
            const SpherePoint p = pixel_center(n_side, index);
            return py::dict(py::arg("direction") = py::make_tuple(p.direction.x(), p.direction.y(), p.direction.z()),
                            py::arg("lon") = p.lon, py::arg("lat") = p.lat, py::arg("ring") = p.ring);
        },
        py::arg("n_side"), py::arg("index"));
    m.def(
        "pixel_index",
        [](int n_side, const std::array<double, 3>& d) { return pixel_index(n_side, Vec3(d[0], d[1], d[2])); },
        py::arg("n_side"), py::arg("direction"));

    m.def(
        "waypoints",
        [](const std::string& spec) {
            const auto w = make_waypoints(parse_trajectory_spec(spec), WorldConfig{});
            Array dirs({static_cast<py::ssize_t>(w.size()), py::ssize_t{3}});
            auto d = dirs.mutable_unchecked<2>();
            py::list poses;
            for (std::size_t k = 0; k < w.size(); ++k) {
                for (int a = 0; a < 3; ++a) d(static_cast<py::ssize_t>(k), a) = w[k].view_direction[a];
                poses.append(pose_matrix(w[k].sample_pose));
            }
            return py::dict(py::arg("view_directions") = dirs, py::arg("sample_poses") = poses);
        },
        py::arg("spec"), "View directions (N, 3) and 4x4 sample poses of a trajectory such as 'spherical:4'.");

    m.def("sha256_hex", [](const py::bytes& data) { return to_hex(sha256(std::string(data))); }, py::arg("data"));
    m.def(
        "canonical_json", [](const std::string& text) { return canonical_json(parse_json(text, ErrorCode::InvalidArgument)); },
        py::arg("text"));

    m.def(
        "phantom_volume",
        [](int n, double spacing, double mu_brick, int oversample) {
            return to_array(voxelize(default_phantom(mu_brick), Volume::centered(n, spacing), oversample));
        },
        py::arg("n") = 64, py::arg("spacing") = 0.75, py::arg("mu_brick") = 0.02, py::arg("oversample") = 2,
        "Voxelized default phantom as an (n, n, n) array indexed [z, y, x].");
    m.def(
        "forward_project",
        [](const Array& volume, double spacing, const std::optional<Array>& sample_pose) {
            const Volume v = from_array(volume, spacing);
            const ProjectionGeometry g = WorldConfig{}.imaging_geometry().in_frame(pose_from_matrix(sample_pose));
            const DetectorImage img = forward_project(v, g);
            Array out({img.height, img.width});
            std::memcpy(out.mutable_data(), img.values.data(), img.values.size() * sizeof(double));
            return out;
        },
        py::arg("volume"), py::arg("spacing"), py::arg("sample_pose") = py::none(),
        "Line integrals on the imaging detector for a centered volume; returns (height, width).");
    m.def(
        "read_volume",
        [](const std::filesystem::path& path) {
            const Volume v = read_volume(path);
            return py::make_tuple(to_array(v), v.spacing, py::make_tuple(v.origin.x(), v.origin.y(), v.origin.z()));
        },
        py::arg("path"), "Returns (array[z, y, x], spacing_mm, origin).");
    m.def(
        "write_volume",
        [](const std::filesystem::path& path, const Array& volume, double spacing) { write_volume(path, from_array(volume, spacing)); },
        py::arg("path"), py::arg("volume"), py::arg("spacing"));

    m.def(
        "normalize_config", [](const std::string& text) { return config_to_json(parse_config(text)).dump(); }, py::arg("text"),
        "Parses and validates a config JSON string; returns it with every default filled in.");

    m.def(
        "run_plan",
        [](const std::string& config, const std::filesystem::path& out) {
            const PlanOutcome r = run_plan(parse_config(config), out);
            return py::dict(py::arg("planned") = r.planned.str(), py::arg("from_cache") = r.from_cache,
                            py::arg("trajectory_id") = to_hex(r.trajectory.trajectory_id));
        },
        py::arg("config"), py::arg("out"));
    m.def(
        "run_execute",
        [](const std::string& config, const std::filesystem::path& out) {
            const ExecuteOutcome r = run_execute(parse_config(config), out);
            return py::dict(py::arg("executed") = r.executed.str(), py::arg("reflexes") = r.reflexes);
        },
        py::arg("config"), py::arg("out"));
    m.def(
        "run_measure",
        [](const std::string& config, const std::filesystem::path& out) {
            const MeasureOutcome r = run_measure(parse_config(config), out);
            return py::dict(py::arg("views") = r.views, py::arg("observations") = r.observations);
        },
        py::arg("config"), py::arg("out"));
    m.def(
        "run_calibrate",
        [](const std::string& config, const std::filesystem::path& out) {
            const CalibrateOutcome r = run_calibrate(parse_config(config), out);
            return py::dict(py::arg("calibrated") = r.calibrated.str());
        },
        py::arg("config"), py::arg("out"));
    m.def(
        "run_reconstruct",
        [](const std::string& config, const std::filesystem::path& out, const std::optional<std::filesystem::path>& compare) {
            const ReconstructOutcome r = run_reconstruct(parse_config(config), out, compare);
            py::dict gradients, ratios;
            for (const auto& g : r.gradients) gradients[py::str(g.name)] = g.gradient;
            for (const auto& [name, ratio] : r.ratios) ratios[py::str(name)] = ratio;
            return py::dict(py::arg("views") = r.views, py::arg("calibrated") = r.calibrated, py::arg("lambda") = r.result.lambda,
                            py::arg("cost_history") = r.result.cost_history, py::arg("gradients") = gradients,
                            py::arg("ratios") = ratios);
        },
        py::arg("config"), py::arg("out"), py::arg("compare") = py::none());
    m.def("run_report", [](const std::filesystem::path& out) { return run_report(out); }, py::arg("out"));
}
