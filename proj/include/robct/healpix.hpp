#pragma once

#include "robct/geometry.hpp"

#include <cstdint>
#include <vector>

namespace robct {

struct SphereGrid {
    int n_side = 1;
    std::int64_t n_pix = 12;

    explicit SphereGrid(int n_side);
};

struct SpherePoint {
    std::int64_t index = 0;
    Vec3 direction = Vec3::UnitZ();
    double lon = 0.0;  // [-pi, pi]
    double lat = 0.0;  // [-pi/2, pi/2]
    int ring = 1;      // 1-based, north to south
};

/// 12 * n_side^2. Throws InvalidNSide for n_side < 1.
std::int64_t npix(int n_side);

/// Number of rings (4 n_side - 1) and pixels in a given 1-based ring.
int ring_count(int n_side);
int ring_size(int n_side, int ring);

/// Ring-scheme pixel center. Throws InvalidNSide / IndexOutOfRange.
SpherePoint pixel_center(int n_side, std::int64_t index);

/// Ring-scheme index of the pixel containing `direction` (need not be unit).
std::int64_t pixel_index(int n_side, const Vec3& direction);

/// All centers in index order.
std::vector<SpherePoint> sample_sphere(int n_side);

/// `count` centers picked at a uniform stride over the index order.
std::vector<SpherePoint> subsample_sphere(int n_side, std::int64_t count);

/// Minimal rotation taking +z onto the point direction, zero roll. The antipode
/// -z maps to a 180 degree turn about +x.
RigidPose rotation_for_point(const SpherePoint& p);
RigidPose rotation_for_direction(const Vec3& direction);

/// Point on the unit sphere from a direction (lon/lat filled in).
SpherePoint sphere_point_from_direction(const Vec3& direction, std::int64_t index = 0);

}  // namespace robct
