#pragma once

#include "robct/geometry.hpp"

#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace robct {

struct HelixModel {
    double cylinder_height_mm = 118.0;
    double inner_diameter_mm = 50.0;
    int marker_count = 50;
    double marker_diameter_mm = 2.0;
    double turns = 2.0;
    std::vector<Vec3> markers;  // holder frame, origin at the cylinder center, axis +z

    /// Markers at helix parameter t_k = (k + 0.5) / n, equally spaced along the arc.
    static HelixModel make(double turns = 2.0, int marker_count = 50, double height_mm = 118.0,
                           double inner_diameter_mm = 50.0, double marker_diameter_mm = 2.0);

    /// Copy with Gaussian per-marker placement error (as-built deviations).
    HelixModel jittered(double sigma_mm, std::mt19937_64& rng) const;

    double radius() const { return 0.5 * inner_diameter_mm; }
};

struct CircleObservation {
    double u = 0.0;
    double v = 0.0;
    double radius = 0.0;  // px
    // Simulation truth, never used by calibration.
    int marker = -1;
    bool false_positive = false;
};

struct ObservationNoise {
    double sigma_px = 0.0;
    int n_false = 0;
    // Rejection-samples false circles at least this far from every projected
    // marker; 0 draws them uniformly over the image.
    double false_min_distance_px = 0.0;
};

/// Commanded pose perturbed by N(0, repeatability) per translation axis and
/// a rotation vector with N(0, rotation_sigma) components in the sample frame.
RigidPose place_sample(const RigidPose& commanded, double repeatability_mm, double rotation_sigma_deg,
                       std::mt19937_64& rng);

/// Projected marker circles. Markers behind the source or off the detector
/// are lost; markers whose circles overlap another are dropped together.
/// Noise for every marker is drawn before any false positive.
std::vector<CircleObservation> observe_fiducials(const ProjectionGeometry& g, const RigidPose& holder_pose,
                                                 const HelixModel& helix, const ObservationNoise& noise,
                                                 std::mt19937_64& rng);

enum class PrimitiveKind { Box, Sphere, Cylinder };

struct Primitive {
    PrimitiveKind kind = PrimitiveKind::Box;
    RigidPose pose;               // primitive frame in the sample frame
    Vec3 half_extents = Vec3::Zero();  // box
    double radius = 0.0;          // sphere, cylinder
    double half_height = 0.0;     // cylinder along local z
    double mu = 0.0;              // 1/mm

    static Primitive box(const Vec3& center, const Vec3& size, double mu, const Quat& rotation = Quat::Identity());
    static Primitive sphere(const Vec3& center, double radius, double mu);
    static Primitive cylinder(const Vec3& center, double radius, double height, double mu,
                              const Quat& rotation = Quat::Identity());
};

struct Phantom {
    std::vector<Primitive> primitives;
};

/// Chord length of the line p + s d (d unit, both in the phantom frame)
/// through the primitive, in mm.
double chord_length(const Primitive& prim, const Vec3& p, const Vec3& d);

/// Hollow 31 x 21 x 31 mm brick (walls, top, two inner tubes) at mu_brick and
/// a tilted 4 mm plate inside it at 20 times that attenuation.
Phantom default_phantom(double mu_brick = 0.02);

struct DetectorImage {
    int width = 0;
    int height = 0;
    double pitch_mm = 1.0;
    std::vector<double> values;  // row-major, v major

    double at(int u, int v) const { return values[static_cast<std::size_t>(v) * width + u]; }
};

/// Exact line integrals through the posed phantom, one ray per pixel center.
DetectorImage project_phantom(const Phantom& phantom, const ProjectionGeometry& g, const RigidPose& sample_pose);

/// Views that share detector dimensions, each with its own geometry.
struct ProjectionStack {
    int width = 0;
    int height = 0;
    double pitch_u = 1.0;
    double pitch_v = 1.0;
    std::vector<int> view_ids;
    std::vector<ProjectionGeometry> geometries;
    std::vector<float> data;  // views concatenated, row-major

    std::size_t view_count() const { return geometries.size(); }
    std::size_t pixels_per_view() const { return static_cast<std::size_t>(width) * height; }
    void add_view(int id, const ProjectionGeometry& g, const DetectorImage& image);
};

/// Text header with dims, pitch and 12 geometry numbers per view, then raw
/// little-endian float32 pixels. `with_data` false writes the header only.
void write_stack(const std::filesystem::path& path, const ProjectionStack& stack, bool with_data = true);
ProjectionStack read_stack(const std::filesystem::path& path);

struct ViewObservation {
    int view = 0;
    CircleObservation circle;
};

/// CSV with columns view,u,v,radius.
std::string observations_csv(const std::vector<ViewObservation>& obs);
std::vector<ViewObservation> parse_observations_csv(const std::string& text);

}  // namespace robct
