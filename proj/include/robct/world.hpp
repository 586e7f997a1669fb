#pragma once

#include "robct/arm.hpp"
#include "robct/geometry.hpp"

#include <string>
#include <vector>

namespace robct {

struct DetectorSampling {
    int width = 720;
    int height = 720;
    double pitch_mm = 0.6;
};

/// Lab layout. The isocenter sits at the world origin, the beam runs along +x
/// and z points up.
struct WorldConfig {
    double source_to_iso_mm = 1360.0;
    double iso_to_detector_mm = 790.0;
    DetectorSampling calibration_detector{720, 720, 0.6};
    DetectorSampling imaging_detector{64, 64, 1.25};
    double repeatability_mm = 0.1;
    double rotation_sigma_deg = 0.05;

    double source_to_detector_mm() const { return source_to_iso_mm + iso_to_detector_mm; }
    double magnification() const { return source_to_detector_mm() / source_to_iso_mm; }
    Vec3 beam_direction() const { return Vec3::UnitX(); }

    // Detector normal antiparallel to the central ray, principal point at the
    // detector center.
    ProjectionGeometry geometry(const DetectorSampling& d) const;
    ProjectionGeometry calibration_geometry() const { return geometry(calibration_detector); }
    ProjectionGeometry imaging_geometry() const { return geometry(imaging_detector); }
};

enum class EnvironmentPreset { Full, TableOnly, TableOnlyNoBeam };

std::string to_string(EnvironmentPreset p);
EnvironmentPreset environment_preset_from_string(const std::string& s);

struct Environment {
    std::vector<Obstacle> obstacles;
    AllowanceSet allowances;

    const Obstacle* find(const std::string& id) const;
    Environment without(ObstacleKind kind) const;
};

/// Table below the mount, detector panel, hutch walls and a 60 mm square beam
/// box from source to detector.
Environment default_environment(const WorldConfig& world, EnvironmentPreset preset = EnvironmentPreset::Full,
                                double beam_width_mm = 60.0);

/// Fixed mid-workspace configuration used for recovery transits.
JointConfig default_homing_config();

}  // namespace robct
