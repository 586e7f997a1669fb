#include "robct/healpix.hpp"

#include "robct/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace robct {

namespace {

std::int64_t isqrt(std::int64_t v) {
    auto r = static_cast<std::int64_t>(std::sqrt(static_cast<double>(v)));
    while (r * r > v) --r;
    while ((r + 1) * (r + 1) <= v) ++r;
    return r;
}

void check_nside(int n_side) {
    if (n_side < 1) {
        throw Error(ErrorCode::InvalidNSide, "n_side must be >= 1, got " + std::to_string(n_side));
    }
}

SpherePoint make_point(std::int64_t index, int ring, double z, double phi) {
    constexpr double pi = std::numbers::pi;
    SpherePoint p;
    p.index = index;
    p.ring = ring;
    const double sin_theta = std::sqrt(std::max(0.0, (1.0 - z) * (1.0 + z)));
    p.direction = Vec3(sin_theta * std::cos(phi), sin_theta * std::sin(phi), z);
    p.lat = std::asin(z);
    p.lon = phi > pi ? phi - 2.0 * pi : phi;
    return p;
}

}  // namespace

SphereGrid::SphereGrid(int n) : n_side(n), n_pix(npix(n)) {}

std::int64_t npix(int n_side) {
    check_nside(n_side);
    return 12 * static_cast<std::int64_t>(n_side) * n_side;
}

int ring_count(int n_side) {
    check_nside(n_side);
    return 4 * n_side - 1;
}

int ring_size(int n_side, int ring) {
    check_nside(n_side);
    if (ring < 1 || ring > 4 * n_side - 1) {
        throw Error(ErrorCode::IndexOutOfRange, "ring out of range");
    }
    const int mirrored = ring > 2 * n_side ? 4 * n_side - ring : ring;
    return mirrored < n_side ? 4 * mirrored : 4 * n_side;
}

SpherePoint pixel_center(int n_side, std::int64_t index) {
    constexpr double pi = std::numbers::pi;
    const std::int64_t total = npix(n_side);
    if (index < 0 || index >= total) {
        throw Error(ErrorCode::IndexOutOfRange,
                    "pixel " + std::to_string(index) + " outside [0, " + std::to_string(total) + ")");
    }
    const std::int64_t ns = n_side;
    const double fact = 3.0 * static_cast<double>(ns * ns);
    const std::int64_t ncap = 2 * ns * (ns - 1);

    if (index < ncap) {
        const std::int64_t ring = (1 + isqrt(1 + 2 * index)) / 2;
        const std::int64_t j = index - 2 * ring * (ring - 1);
        const double z = 1.0 - static_cast<double>(ring * ring) / fact;
        const double phi = (pi / (2.0 * ring)) * (j + 0.5);
        return make_point(index, static_cast<int>(ring), z, phi);
    }
    if (index < total - ncap) {
        const std::int64_t ip = index - ncap;
        const std::int64_t ring = ip / (4 * ns) + ns;
        const std::int64_t j = ip % (4 * ns);
        const int shift = static_cast<int>((ring - ns + 1) % 2);
        const double z = 4.0 / 3.0 - 2.0 * static_cast<double>(ring) / (3.0 * ns);
        const double phi = (pi / (2.0 * ns)) * (j + 0.5 * shift);
        return make_point(index, static_cast<int>(ring), z, phi);
    }
    const std::int64_t ip = total - index;
    const std::int64_t mirror_ring = (1 + isqrt(2 * ip - 1)) / 2;
    const std::int64_t j = 4 * mirror_ring - (ip - 2 * mirror_ring * (mirror_ring - 1));
    const double z = -1.0 + static_cast<double>(mirror_ring * mirror_ring) / fact;
    const double phi = (pi / (2.0 * mirror_ring)) * (j + 0.5);
    return make_point(index, static_cast<int>(4 * ns - mirror_ring), z, phi);
}

std::vector<SpherePoint> sample_sphere(int n_side) {
    const std::int64_t total = npix(n_side);
    std::vector<SpherePoint> points;
    points.reserve(static_cast<std::size_t>(total));
    for (std::int64_t i = 0; i < total; ++i) {
        points.push_back(pixel_center(n_side, i));
    }
    return points;
}

std::vector<SpherePoint> subsample_sphere(int n_side, std::int64_t count) {
    const std::int64_t total = npix(n_side);
    if (count < 1 || count > total) {
        throw Error(ErrorCode::InvalidArgument, "subsample count must be in [1, n_pix]");
    }
    std::vector<SpherePoint> points;
    points.reserve(static_cast<std::size_t>(count));
    for (std::int64_t k = 0; k < count; ++k) {
        points.push_back(pixel_center(n_side, (k * total) / count));
    }
    return points;
}

RigidPose rotation_for_direction(const Vec3& direction) {
    const Vec3 d = direction.normalized();
    const Vec3 z = Vec3::UnitZ();
    const Vec3 axis = z.cross(d);
    const double s = axis.norm();
    const double c = z.dot(d);
    if (s < 1e-15) {
        if (c > 0.0) {
            return RigidPose::identity();
        }
        return RigidPose::axis_angle(Vec3::UnitX(), std::numbers::pi);
    }
    return RigidPose::axis_angle(axis / s, std::atan2(s, c));
}

RigidPose rotation_for_point(const SpherePoint& p) { return rotation_for_direction(p.direction); }

SpherePoint sphere_point_from_direction(const Vec3& direction, std::int64_t index) {
    const Vec3 d = direction.normalized();
    SpherePoint p;
    p.index = index;
    p.direction = d;
    p.lat = std::asin(std::clamp(d.z(), -1.0, 1.0));
    p.lon = std::atan2(d.y(), d.x());
    return p;
}

std::int64_t pixel_index(int n_side, const Vec3& direction) {
    check_nside(n_side);
    const double norm = direction.norm();
    if (!(norm > 0.0)) throw Error(ErrorCode::InvalidArgument, "direction must be non-zero");
    const std::int64_t n = n_side;
    const Vec3 d = direction / norm;
    const double z = std::clamp(d.z(), -1.0, 1.0);
    double phi = std::atan2(d.y(), d.x());
    if (phi < 0.0) phi += 2.0 * std::numbers::pi;
    double tt = phi / (0.5 * std::numbers::pi);  // [0, 4)
    if (tt >= 4.0) tt = 0.0;
    const auto wrap = [](std::int64_t v, std::int64_t m) { return ((v % m) + m) % m; };
    if (std::abs(z) <= 2.0 / 3.0) {
        const double t1 = static_cast<double>(n) * (0.5 + tt);
        const double t2 = static_cast<double>(n) * z * 0.75;
        const auto jp = static_cast<std::int64_t>(t1 - t2);
        const auto jm = static_cast<std::int64_t>(t1 + t2);
        const std::int64_t ir = n + 1 + jp - jm;  // 1 .. 2n+1 within the belt
        const std::int64_t kshift = 1 - (ir & 1);
        const std::int64_t ip = wrap((jp + jm - n + kshift + 1) / 2, 4 * n);
        return 2 * n * (n - 1) + (ir - 1) * 4 * n + ip;
    }
    const double tp = tt - std::floor(tt);
    const double tmp = static_cast<double>(n) * std::sqrt(3.0 * (1.0 - std::abs(z)));
    const auto jp = static_cast<std::int64_t>(tp * tmp);
    const auto jm = static_cast<std::int64_t>((1.0 - tp) * tmp);
    const std::int64_t ir = jp + jm + 1;  // ring counted from the nearer pole
    const std::int64_t ip = wrap(static_cast<std::int64_t>(tt * static_cast<double>(ir)), 4 * ir);
    if (z > 0.0) return 2 * ir * (ir - 1) + ip;
    return 12 * n * n - 2 * ir * (ir + 1) + ip;
}

}  // namespace robct
