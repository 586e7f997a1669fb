#include "robct/geometry.hpp"

#include "robct/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace robct {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::RayParallel: return "RayParallel";
        case ErrorCode::BehindSource: return "BehindSource";
        case ErrorCode::InvalidNSide: return "InvalidNSide";
        case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
        case ErrorCode::LimitViolation: return "LimitViolation";
        case ErrorCode::NoSolution: return "NoSolution";
        case ErrorCode::Unreachable: return "Unreachable";
        case ErrorCode::EmptyPlan: return "EmptyPlan";
        case ErrorCode::DigestMismatch: return "DigestMismatch";
        case ErrorCode::CorruptFile: return "CorruptFile";
        case ErrorCode::Miss: return "Miss";
        case ErrorCode::HomingUnreachable: return "HomingUnreachable";
        case ErrorCode::TooFewMatches: return "TooFewMatches";
        case ErrorCode::NotConverged: return "NotConverged";
        case ErrorCode::NumericalBreakdown: return "NumericalBreakdown";
        case ErrorCode::OutOfBounds: return "OutOfBounds";
        case ErrorCode::ConfigError: return "ConfigError";
        case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

Quat quat_from_rotation_vector(const Vec3& omega) {
    const double angle = omega.norm();
    if (angle < 1e-300) {
        return Quat::Identity();
    }
    // Small angles: the normalized half-angle form is still exact in double.
    const double half = 0.5 * angle;
    const double s = std::sin(half) / angle;
    Quat q(std::cos(half), omega.x() * s, omega.y() * s, omega.z() * s);
    q.normalize();
    return q;
}

Vec3 rotation_vector(const Quat& q_in) {
    Quat q = q_in.normalized();
    if (q.w() < 0.0) {
        q.coeffs() *= -1.0;
    }
    const Vec3 v = q.vec();
    const double s = v.norm();
    if (s < 1e-300) {
        return Vec3::Zero();
    }
    const double angle = 2.0 * std::atan2(s, q.w());
    return v * (angle / s);
}

RigidPose::RigidPose(const Quat& rotation, const Vec3& translation)
    : rotation_(rotation.normalized()), translation_(translation) {}

RigidPose RigidPose::axis_angle(const Vec3& axis, double angle_rad) {
    return rotation_only(Quat(Eigen::AngleAxisd(angle_rad, axis.normalized())));
}

RigidPose RigidPose::inverse() const {
    const Quat qi = rotation_.conjugate();
    return {qi, -(qi * translation_)};
}

double RigidPose::rotation_distance(const RigidPose& other) const {
    return rotation_.angularDistance(other.rotation_);
}

RigidPose compose(const RigidPose& a, const RigidPose& b) {
    return {a.rotation() * b.rotation(), a.rotation() * b.translation() + a.translation()};
}

void ProjectionGeometry::validate() const {
    if (width < 1 || height < 1 || !(pitch_u > 0.0) || !(pitch_v > 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "detector size and pitch must be positive");
    }
    if (std::abs(detector_u.norm() - 1.0) > 1e-9 || std::abs(detector_v.norm() - 1.0) > 1e-9) {
        throw Error(ErrorCode::InvalidArgument, "detector axes must be unit vectors");
    }
    if (std::abs(detector_u.dot(detector_v)) > 1e-9) {
        throw Error(ErrorCode::InvalidArgument, "detector axes must be orthogonal");
    }
    if (std::abs((source - detector_origin).dot(normal())) <= 1.0) {
        throw Error(ErrorCode::InvalidArgument, "source lies in the detector plane");
    }
}

ProjectionGeometry ProjectionGeometry::moved(const RigidPose& motion) const {
    ProjectionGeometry g = *this;
    g.source = motion.apply(source);
    g.detector_origin = motion.apply(detector_origin);
    g.detector_u = motion.rotate(detector_u);
    g.detector_v = motion.rotate(detector_v);
    return g;
}

ProjectionGeometry ProjectionGeometry::in_frame(const RigidPose& frame) const {
    return moved(frame.inverse());
}

Mat34 ProjectionGeometry::camera_matrix() const {
    // With d = p - s and n = u x v the detector hit gives
    //   u_px = [((s-o).u)(d.n) + ((o-s).n)(d.u)] / (pitch_u (d.n)),
    // which is a ratio of two affine functions of p.
    const Vec3 n = normal();
    const Vec3 so = source - detector_origin;
    const double depth = -so.dot(n);  // (o - s).n
    const Vec3 row_u = (so.dot(detector_u) * n + depth * detector_u) / pitch_u;
    const Vec3 row_v = (so.dot(detector_v) * n + depth * detector_v) / pitch_v;
    Mat34 p;
    p.block<1, 3>(0, 0) = row_u.transpose();
    p.block<1, 3>(1, 0) = row_v.transpose();
    p.block<1, 3>(2, 0) = n.transpose();
    p(0, 3) = -row_u.dot(source);
    p(1, 3) = -row_v.dot(source);
    p(2, 3) = -n.dot(source);
    return p;
}

namespace {

double ray_parameter(const ProjectionGeometry& g, const Vec3& p) {
    const Vec3 n = g.normal();
    const Vec3 d = p - g.source;
    const double dn = d.dot(n);
    if (std::abs(dn) <= 1e-12 * d.norm()) {
        throw Error(ErrorCode::RayParallel, "ray does not cross the detector plane");
    }
    const double t = (g.detector_origin - g.source).dot(n) / dn;
    if (!(t > 0.0)) {
        throw Error(ErrorCode::BehindSource, "point lies behind the source");
    }
    return t;
}

}  // namespace

double magnification_at(const ProjectionGeometry& g, const Vec3& p) { return ray_parameter(g, p); }

PixelCoord project_point(const ProjectionGeometry& g, const Vec3& p) {
    const double t = ray_parameter(g, p);
    const Vec3 rel = g.source + t * (p - g.source) - g.detector_origin;
    return {rel.dot(g.detector_u) / g.pitch_u, rel.dot(g.detector_v) / g.pitch_v};
}

MapPoint mollweide(double lon, double lat) {
    constexpr double pi = std::numbers::pi;
    constexpr double half_pi = 0.5 * std::numbers::pi;
    const double sqrt2 = std::numbers::sqrt2;

    double theta;
    if (std::abs(lat) >= half_pi) {
        theta = std::copysign(half_pi, lat);
    } else {
        const double target = pi * std::sin(lat);
        auto f = [&](double t) { return 2.0 * t + std::sin(2.0 * t) - target; };
        theta = lat;
        bool converged = false;
        for (int it = 0; it < 50; ++it) {
            const double deriv = 2.0 + 2.0 * std::cos(2.0 * theta);
            if (deriv < 1e-12) {
                break;
            }
            const double step = f(theta) / deriv;
            theta -= step;
            theta = std::clamp(theta, -half_pi, half_pi);
            if (std::abs(step) < 1e-10) {
                converged = true;
                break;
            }
        }
        if (!converged) {
            // f is monotone on [-pi/2, pi/2].
            double lo = -half_pi;
            double hi = half_pi;
            for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
                const double mid = 0.5 * (lo + hi);
                (f(mid) < 0.0 ? lo : hi) = mid;
            }
            theta = 0.5 * (lo + hi);
        }
    }
    return {(2.0 * sqrt2 / pi) * lon * std::cos(theta), sqrt2 * std::sin(theta)};
}

std::optional<LonLat> inverse_mollweide(double x, double y) {
    constexpr double pi = std::numbers::pi;
    const double sqrt2 = std::numbers::sqrt2;
    if ((x * x) / 8.0 + (y * y) / 2.0 > 1.0) {
        return std::nullopt;
    }
    const double theta = std::asin(std::clamp(y / sqrt2, -1.0, 1.0));
    const double lat = std::asin(std::clamp((2.0 * theta + std::sin(2.0 * theta)) / pi, -1.0, 1.0));
    const double c = std::cos(theta);
    const double lon = c < 1e-15 ? 0.0 : pi * x / (2.0 * sqrt2 * c);
    if (std::abs(lon) > pi + 1e-12) {
        return std::nullopt;
    }
    return LonLat{std::clamp(lon, -pi, pi), lat};
}

}  // namespace robct
