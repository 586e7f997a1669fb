#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <optional>

namespace robct {

using Vec3 = Eigen::Vector3d;
using Quat = Eigen::Quaterniond;
using Mat3 = Eigen::Matrix3d;
using Mat34 = Eigen::Matrix<double, 3, 4>;

// Rotation-vector (axis * angle) <-> unit quaternion.
Quat quat_from_rotation_vector(const Vec3& omega);
Vec3 rotation_vector(const Quat& q);

/// Rigid transform: unit quaternion rotation followed by a translation in mm.
/// The quaternion is renormalized on construction and after every composition.
class RigidPose {
public:
    RigidPose() = default;
    RigidPose(const Quat& rotation, const Vec3& translation);

    static RigidPose identity() { return {}; }
    static RigidPose translation_only(const Vec3& t) { return {Quat::Identity(), t}; }
    static RigidPose rotation_only(const Quat& q) { return {q, Vec3::Zero()}; }
    // Takes the quaternion as stored, for exact round trips of serialized poses.
    static RigidPose from_raw(const Quat& q, const Vec3& t) {
        RigidPose p;
        p.rotation_ = q;
        p.translation_ = t;
        return p;
    }
    static RigidPose axis_angle(const Vec3& axis, double angle_rad);

    const Quat& rotation() const { return rotation_; }
    const Vec3& translation() const { return translation_; }
    Mat3 rotation_matrix() const { return rotation_.toRotationMatrix(); }

    Vec3 apply(const Vec3& p) const { return rotation_ * p + translation_; }
    Vec3 rotate(const Vec3& v) const { return rotation_ * v; }

    RigidPose inverse() const;

    // Angle of the relative rotation and distance between translations.
    double rotation_distance(const RigidPose& other) const;
    double translation_distance(const RigidPose& other) const {
        return (translation_ - other.translation_).norm();
    }

private:
    Quat rotation_ = Quat::Identity();
    Vec3 translation_ = Vec3::Zero();
};

/// Result applies b first, then a.
RigidPose compose(const RigidPose& a, const RigidPose& b);
inline RigidPose invert(const RigidPose& p) { return p.inverse(); }
inline RigidPose operator*(const RigidPose& a, const RigidPose& b) { return compose(a, b); }

struct PixelCoord {
    double u = 0.0;
    double v = 0.0;
};

/// Flat-panel cone-beam geometry. The detector is parametrized by the corner of
/// pixel (0,0) and two orthonormal pixel axes; pixel (i,j) has its center at
/// continuous coordinate (i + 0.5, j + 0.5).
struct ProjectionGeometry {
    Vec3 source = Vec3::Zero();
    Vec3 detector_origin = Vec3::Zero();
    Vec3 detector_u = Vec3::UnitY();
    Vec3 detector_v = -Vec3::UnitZ();
    double pitch_u = 1.0;
    double pitch_v = 1.0;
    int width = 1;
    int height = 1;

    Vec3 normal() const { return detector_u.cross(detector_v); }

    // World position of continuous pixel coordinate (u, v).
    Vec3 detector_point(double u, double v) const {
        return detector_origin + detector_u * (u * pitch_u) + detector_v * (v * pitch_v);
    }

    Vec3 detector_center() const { return detector_point(0.5 * width, 0.5 * height); }

    // Throws InvalidArgument when the axes are not orthonormal or the source
    // lies within 1 mm of the detector plane.
    void validate() const;

    // Same physical geometry expressed in the frame whose pose (in this
    // geometry's frame) is `frame`.
    ProjectionGeometry in_frame(const RigidPose& frame) const;

    // Same physical geometry after moving every world point by `motion`.
    ProjectionGeometry moved(const RigidPose& motion) const;

    // Homogeneous 3x4 camera matrix mapping [x;1] to (u*w, v*w, w).
    Mat34 camera_matrix() const;
};

/// Intersection of the ray source->p with the detector plane, in pixel units.
/// Throws RayParallel or BehindSource.
PixelCoord project_point(const ProjectionGeometry& g, const Vec3& p);

/// Ray parameter t of the detector hit (hit = source + t * (p - source)); the
/// magnification of a point at p. Throws like project_point.
double magnification_at(const ProjectionGeometry& g, const Vec3& p);

struct MapPoint {
    double x = 0.0;
    double y = 0.0;
};

/// Mollweide projection onto the unit-radius map (x in [-2√2, 2√2], y in [-√2, √2]).
MapPoint mollweide(double lon, double lat);

struct LonLat {
    double lon = 0.0;
    double lat = 0.0;
};

/// Inverse Mollweide; empty outside the ellipse.
std::optional<LonLat> inverse_mollweide(double x, double y);

}  // namespace robct
