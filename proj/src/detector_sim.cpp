#include "robct/detector_sim.hpp"

#include "robct/error.hpp"
#include "robct/parallel.hpp"
#include "robct/serialize.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

namespace robct {

static_assert(std::endian::native == std::endian::little, "stack files assume a little-endian host");

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Interval {
    double lo = -kInf;
    double hi = kInf;

    bool empty() const { return !(hi > lo); }
    void clip(double a, double b) {
        lo = std::max(lo, a);
        hi = std::min(hi, b);
    }
};

// Parameter range of the line inside |p_i + s d_i| <= h.
bool slab(double p, double d, double h, Interval& iv) {
    if (std::abs(d) < 1e-300) return std::abs(p) <= h;
    double t0 = (-h - p) / d;
    double t1 = (h - p) / d;
    if (t0 > t1) std::swap(t0, t1);
    iv.clip(t0, t1);
    return !iv.empty();
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

HelixModel HelixModel::make(double turns, int marker_count, double height_mm, double inner_diameter_mm,
                            double marker_diameter_mm) {
    if (marker_count < 1 || !(height_mm > 0.0) || !(inner_diameter_mm > 0.0) || !(marker_diameter_mm > 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "invalid helix dimensions");
    }
    HelixModel h;
    h.cylinder_height_mm = height_mm;
    h.inner_diameter_mm = inner_diameter_mm;
    h.marker_count = marker_count;
    h.marker_diameter_mm = marker_diameter_mm;
    h.turns = turns;
    const double r = h.radius();
    for (int k = 0; k < marker_count; ++k) {
        const double t = (k + 0.5) / marker_count;
        const double angle = 2.0 * std::numbers::pi * turns * t;
        h.markers.emplace_back(r * std::cos(angle), r * std::sin(angle), height_mm * (t - 0.5));
    }
    return h;
}

HelixModel HelixModel::jittered(double sigma_mm, std::mt19937_64& rng) const {
    HelixModel h = *this;
    if (sigma_mm <= 0.0) return h;
    std::normal_distribution<double> n(0.0, sigma_mm);
    for (auto& m : h.markers) {
        const double a = n(rng);
        const double b = n(rng);
        const double c = n(rng);
        m += Vec3(a, b, c);
    }
    return h;
}

RigidPose place_sample(const RigidPose& commanded, double repeatability_mm, double rotation_sigma_deg,
                       std::mt19937_64& rng) {
    if (repeatability_mm < 0.0 || rotation_sigma_deg < 0.0) {
        throw Error(ErrorCode::InvalidArgument, "placement noise must be non-negative");
    }
    std::normal_distribution<double> n(0.0, 1.0);
    Vec3 dt;
    for (int i = 0; i < 3; ++i) dt[i] = repeatability_mm * n(rng);
    Vec3 omega;
    const double sr = rotation_sigma_deg * std::numbers::pi / 180.0;
    for (int i = 0; i < 3; ++i) omega[i] = sr * n(rng);
    if (dt.isZero(0.0) && omega.isZero(0.0)) return commanded;
    return {commanded.rotation() * quat_from_rotation_vector(omega), commanded.translation() + dt};
}

std::vector<CircleObservation> observe_fiducials(const ProjectionGeometry& g, const RigidPose& holder_pose,
                                                 const HelixModel& helix, const ObservationNoise& noise,
                                                 std::mt19937_64& rng) {
    if (noise.sigma_px < 0.0 || noise.n_false < 0) {
        throw Error(ErrorCode::InvalidArgument, "noise parameters must be non-negative");
    }
    const std::size_t n = helix.markers.size();
    const double pitch = 0.5 * (g.pitch_u + g.pitch_v);

    std::vector<CircleObservation> projected(n);
    std::vector<char> visible(n, 0);
    for (std::size_t k = 0; k < n; ++k) {
        const Vec3 p = holder_pose.apply(helix.markers[k]);
        try {
            const PixelCoord px = project_point(g, p);
            const double mag = magnification_at(g, p);
            auto& c = projected[k];
            c.u = px.u;
            c.v = px.v;
            c.radius = 0.5 * helix.marker_diameter_mm * mag / pitch;
            c.marker = static_cast<int>(k);
            visible[k] = px.u >= 0.0 && px.v >= 0.0 && px.u <= g.width && px.v <= g.height;
        } catch (const Error&) {
            visible[k] = 0;
        }
    }

    std::vector<char> keep = visible;
    for (std::size_t i = 0; i < n; ++i) {
        if (!visible[i]) continue;
        for (std::size_t j = i + 1; j < n; ++j) {
            if (!visible[j]) continue;
            const double d = std::hypot(projected[i].u - projected[j].u, projected[i].v - projected[j].v);
            if (d < projected[i].radius + projected[j].radius) keep[i] = keep[j] = 0;
        }
    }

    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<CircleObservation> out;
    for (std::size_t k = 0; k < n; ++k) {
        const double du = gauss(rng);
        const double dv = gauss(rng);
        if (!keep[k]) continue;
        CircleObservation c = projected[k];
        c.u += noise.sigma_px * du;
        c.v += noise.sigma_px * dv;
        out.push_back(c);
    }

    double typical_radius = 0.5 * helix.marker_diameter_mm * g.pitch_u / pitch;
    if (!out.empty()) {
        typical_radius = 0.0;
        for (const auto& c : out) typical_radius += c.radius;
        typical_radius /= static_cast<double>(out.size());
    }
    std::uniform_real_distribution<double> uu(0.0, g.width);
    std::uniform_real_distribution<double> vv(0.0, g.height);
    for (int f = 0; f < noise.n_false; ++f) {
        CircleObservation c;
        c.false_positive = true;
        c.radius = typical_radius;
        for (int attempt = 0; attempt < 10000; ++attempt) {
            c.u = uu(rng);
            c.v = vv(rng);
            if (noise.false_min_distance_px <= 0.0) break;
            bool far = true;
            for (std::size_t k = 0; k < n && far; ++k) {
                if (visible[k]) {
                    far = std::hypot(c.u - projected[k].u, c.v - projected[k].v) >= noise.false_min_distance_px;
                }
            }
            if (far) break;
        }
        out.push_back(c);
    }
    return out;
}

Primitive Primitive::box(const Vec3& center, const Vec3& size, double mu, const Quat& rotation) {
    if (mu < 0.0 || (size.array() <= 0.0).any()) throw Error(ErrorCode::InvalidArgument, "invalid box primitive");
    Primitive p;
    p.kind = PrimitiveKind::Box;
    p.pose = RigidPose(rotation, center);
    p.half_extents = 0.5 * size;
    p.mu = mu;
    return p;
}

Primitive Primitive::sphere(const Vec3& center, double radius, double mu) {
    if (mu < 0.0 || !(radius > 0.0)) throw Error(ErrorCode::InvalidArgument, "invalid sphere primitive");
    Primitive p;
    p.kind = PrimitiveKind::Sphere;
    p.pose = RigidPose::translation_only(center);
    p.radius = radius;
    p.mu = mu;
    return p;
}

Primitive Primitive::cylinder(const Vec3& center, double radius, double height, double mu, const Quat& rotation) {
    if (mu < 0.0 || !(radius > 0.0) || !(height > 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "invalid cylinder primitive");
    }
    Primitive p;
    p.kind = PrimitiveKind::Cylinder;
    p.pose = RigidPose(rotation, center);
    p.radius = radius;
    p.half_height = 0.5 * height;
    p.mu = mu;
    return p;
}

namespace {

// p and d in the primitive's own frame.
double local_chord(const Primitive& prim, const Vec3& p, const Vec3& d) {
    switch (prim.kind) {
        case PrimitiveKind::Sphere: {
            const double b = p.dot(d);
            const double c = p.squaredNorm() - prim.radius * prim.radius;
            const double disc = b * b - c;
            return disc > 0.0 ? 2.0 * std::sqrt(disc) : 0.0;
        }
        case PrimitiveKind::Box: {
            Interval iv;
            for (int i = 0; i < 3; ++i) {
                if (!slab(p[i], d[i], prim.half_extents[i], iv)) return 0.0;
            }
            return iv.hi - iv.lo;
        }
        case PrimitiveKind::Cylinder: {
            Interval iv;
            if (!slab(p.z(), d.z(), prim.half_height, iv)) return 0.0;
            const double a = d.x() * d.x() + d.y() * d.y();
            const double c = p.x() * p.x() + p.y() * p.y() - prim.radius * prim.radius;
            if (a < 1e-300) return c <= 0.0 ? iv.hi - iv.lo : 0.0;
            const double b = p.x() * d.x() + p.y() * d.y();
            const double disc = b * b - a * c;
            if (disc <= 0.0) return 0.0;
            const double root = std::sqrt(disc);
            iv.clip((-b - root) / a, (-b + root) / a);
            return iv.empty() ? 0.0 : iv.hi - iv.lo;
        }
    }
    return 0.0;
}

}  // namespace

double chord_length(const Primitive& prim, const Vec3& p, const Vec3& d) {
    const RigidPose to_local = prim.pose.inverse();
    return local_chord(prim, to_local.apply(p), to_local.rotate(d));
}

Phantom default_phantom(double mu_brick) {
    const double mu_plate = 20.0 * mu_brick;
    const double wall = 1.5;
    const Vec3 size(31, 21, 31);
    const double hx = 0.5 * size.x(), hy = 0.5 * size.y(), hz = 0.5 * size.z();
    Phantom ph;
    auto& p = ph.primitives;
    // Top plate, then four side walls hanging below it; the bottom stays open.
    p.push_back(Primitive::box(Vec3(0, 0, hz - 0.5 * wall), Vec3(size.x(), size.y(), wall), mu_brick));
    const double wall_h = size.z() - wall;
    const double wall_z = -hz + 0.5 * wall_h;
    p.push_back(Primitive::box(Vec3(0, hy - 0.5 * wall, wall_z), Vec3(size.x(), wall, wall_h), mu_brick));
    p.push_back(Primitive::box(Vec3(0, -hy + 0.5 * wall, wall_z), Vec3(size.x(), wall, wall_h), mu_brick));
    p.push_back(Primitive::box(Vec3(hx - 0.5 * wall, 0, wall_z), Vec3(wall, size.y() - 2 * wall, wall_h), mu_brick));
    p.push_back(Primitive::box(Vec3(-hx + 0.5 * wall, 0, wall_z), Vec3(wall, size.y() - 2 * wall, wall_h), mu_brick));
    // Two studs' support tubes under the top.
    for (double x : {-9.0, 9.0}) p.push_back(Primitive::cylinder(Vec3(x, 0, wall_z), 3.0, wall_h, mu_brick));
    // Absorber plate cut at an angle, between the tubes.
    const Quat tilt = Quat(Eigen::AngleAxisd(25.0 * std::numbers::pi / 180.0, Vec3::UnitX())) *
                      Quat(Eigen::AngleAxisd(12.0 * std::numbers::pi / 180.0, Vec3::UnitY()));
    p.push_back(Primitive::box(Vec3(0, 0, -2.0), Vec3(8, 14, 4), mu_plate, tilt));
    return ph;
}

DetectorImage project_phantom(const Phantom& phantom, const ProjectionGeometry& g, const RigidPose& sample_pose) {
    g.validate();
    DetectorImage img;
    img.width = g.width;
    img.height = g.height;
    img.pitch_mm = g.pitch_u;
    img.values.assign(static_cast<std::size_t>(g.width) * g.height, 0.0);
    std::vector<RigidPose> to_local;
    for (const auto& prim : phantom.primitives) to_local.push_back(compose(sample_pose, prim.pose).inverse());
    parallel_for(static_cast<std::size_t>(g.height), [&](std::size_t row) {
        for (int u = 0; u < g.width; ++u) {
            const Vec3 target = g.detector_point(u + 0.5, static_cast<double>(row) + 0.5);
            const Vec3 d = (target - g.source).normalized();
            double sum = 0.0;
            for (std::size_t k = 0; k < phantom.primitives.size(); ++k) {
                const auto& prim = phantom.primitives[k];
                if (prim.mu == 0.0) continue;
                sum += prim.mu * local_chord(prim, to_local[k].apply(g.source), to_local[k].rotate(d));
            }
            img.values[row * static_cast<std::size_t>(g.width) + static_cast<std::size_t>(u)] = sum;
        }
    });
    return img;
}

void ProjectionStack::add_view(int id, const ProjectionGeometry& g, const DetectorImage& image) {
    if (geometries.empty() && width == 0) {
        width = g.width;
        height = g.height;
        pitch_u = g.pitch_u;
        pitch_v = g.pitch_v;
    }
    if (g.width != width || g.height != height || image.width != width || image.height != height) {
        throw Error(ErrorCode::InvalidArgument, "all views in a stack must share detector dimensions");
    }
    view_ids.push_back(id);
    geometries.push_back(g);
    for (double v : image.values) data.push_back(static_cast<float>(v));
}

void write_stack(const std::filesystem::path& path, const ProjectionStack& stack, bool with_data) {
    std::ostringstream h;
    h << "robct-stack 1\n";
    h << "width " << stack.width << "\nheight " << stack.height << "\n";
    h << "pitch " << fmt(stack.pitch_u) << " " << fmt(stack.pitch_v) << "\n";
    h << "views " << stack.view_count() << "\n";
    h << "data " << (with_data ? "float32le" : "none") << "\n";
    for (std::size_t i = 0; i < stack.view_count(); ++i) {
        const auto& g = stack.geometries[i];
        h << "view " << stack.view_ids[i];
        for (const Vec3* v : {&g.source, &g.detector_origin, &g.detector_u, &g.detector_v}) {
            for (int k = 0; k < 3; ++k) h << " " << fmt((*v)[k]);
        }
        h << "\n";
    }
    h << "end_header\n";
    std::string text = h.str();
    if (with_data) {
        if (stack.data.size() != stack.view_count() * stack.pixels_per_view()) {
            throw Error(ErrorCode::InvalidArgument, "stack payload size does not match its views");
        }
        const auto* bytes = reinterpret_cast<const char*>(stack.data.data());
        text.append(bytes, bytes + stack.data.size() * sizeof(float));
    }
    write_text_file(path, text);
}

ProjectionStack read_stack(const std::filesystem::path& path) {
    const std::string raw = read_text_file(path);
    const auto end = raw.find("end_header\n");
    if (raw.rfind("robct-stack 1\n", 0) != 0 || end == std::string::npos) {
        throw Error(ErrorCode::CorruptFile, path.string() + " is not a projection stack");
    }
    std::istringstream in(raw.substr(0, end));
    ProjectionStack s;
    std::string key, data_kind;
    std::size_t views = 0;
    std::getline(in, key);
    while (in >> key) {
        if (key == "width") in >> s.width;
        else if (key == "height") in >> s.height;
        else if (key == "pitch") in >> s.pitch_u >> s.pitch_v;
        else if (key == "views") in >> views;
        else if (key == "data") in >> data_kind;
        else if (key == "view") {
            int id = 0;
            ProjectionGeometry g;
            in >> id;
            for (Vec3* v : {&g.source, &g.detector_origin, &g.detector_u, &g.detector_v}) {
                for (int k = 0; k < 3; ++k) in >> (*v)[k];
            }
            g.width = s.width;
            g.height = s.height;
            g.pitch_u = s.pitch_u;
            g.pitch_v = s.pitch_v;
            s.view_ids.push_back(id);
            s.geometries.push_back(g);
        } else {
            throw Error(ErrorCode::CorruptFile, "unknown stack header key '" + key + "'");
        }
        if (!in) throw Error(ErrorCode::CorruptFile, "truncated stack header");
    }
    if (s.geometries.size() != views || s.width < 1 || s.height < 1) {
        throw Error(ErrorCode::CorruptFile, "stack header is inconsistent");
    }
    const std::size_t payload = raw.size() - end - std::string("end_header\n").size();
    if (data_kind == "float32le") {
        const std::size_t expected = views * s.pixels_per_view() * sizeof(float);
        if (payload != expected) throw Error(ErrorCode::CorruptFile, "stack payload has the wrong size");
        s.data.resize(views * s.pixels_per_view());
        std::copy_n(raw.data() + end + 11, expected, reinterpret_cast<char*>(s.data.data()));
    } else if (data_kind != "none" || payload != 0) {
        throw Error(ErrorCode::CorruptFile, "unexpected stack payload");
    }
    return s;
}

std::string observations_csv(const std::vector<ViewObservation>& obs) {
    std::string out = "view,u,v,radius\n";
    for (const auto& o : obs) {
        out += std::to_string(o.view) + "," + fmt(o.circle.u) + "," + fmt(o.circle.v) + "," + fmt(o.circle.radius) + "\n";
    }
    return out;
}

std::vector<ViewObservation> parse_observations_csv(const std::string& text) {
    std::vector<ViewObservation> out;
    std::istringstream in(text);
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (first) {
            first = false;
            if (line.rfind("view,", 0) == 0) continue;
        }
        ViewObservation o;
        char c1 = 0, c2 = 0, c3 = 0;
        std::istringstream ls(line);
        if (!(ls >> o.view >> c1 >> o.circle.u >> c2 >> o.circle.v >> c3 >> o.circle.radius) || c1 != ',' || c2 != ',' ||
            c3 != ',') {
            throw Error(ErrorCode::CorruptFile, "bad observation row: " + line);
        }
        out.push_back(o);
    }
    return out;
}

}  // namespace robct
