#pragma once

#include "robct/detector_sim.hpp"
#include "robct/geometry.hpp"
#include "robct/planner.hpp"

#include <optional>
#include <string>
#include <vector>

namespace robct {

struct ExpectedPoint {
    int marker = 0;
    double u = 0.0;
    double v = 0.0;
};

/// Marker projections under a holder pose; markers that cannot be projected
/// are left out.
std::vector<ExpectedPoint> expected_projection(const ProjectionGeometry& g, const RigidPose& holder_pose,
                                               const HelixModel& helix);

struct Correspondence {
    int observation = 0;  // index into the observed list
    int expected = 0;     // index into the expected list
    double distance_px = 0.0;
};

struct MatchResult {
    std::vector<Correspondence> matches;
    std::vector<int> rejected;  // observation indices
};

/// Greedy nearest-first one-to-one assignment of observations to expected
/// points closer than `threshold_px` (any distance when rejection is off).
/// Throws TooFewMatches below `min_matches`.
MatchResult match_circles(const std::vector<CircleObservation>& observed, const std::vector<ExpectedPoint>& expected,
                          double threshold_px, int min_matches = 10, bool reject = true);

struct CalibrationOptions {
    double threshold_px = 15.0;
    int min_matches = 10;
    bool reject_false_positives = true;
    double lambda0 = 1e-3;
    int max_iterations = 100;
    double step_tolerance = 1e-8;
    double fd_step_mm = 1e-5;
    double fd_step_rad = 1e-6;
    double max_rms_px = 2.0;  // a converged view counts as calibrated below this residual
};

struct CalibrationResult {
    RigidPose refined_pose;  // holder in world
    double residual_rms = 0.0;
    int matched = 0;
    int rejected = 0;
    int iterations = 0;
    bool converged = false;
    std::vector<double> cost_history;  // sum of squares after each accepted step, first entry at the guess

    bool success(const CalibrationOptions& opts) const { return converged && residual_rms <= opts.max_rms_px; }
};

/// Levenberg-Marquardt on the reprojection error over translation and a
/// rotation vector relative to the guess. Throws TooFewMatches or NotConverged.
CalibrationResult calibrate(const std::vector<CircleObservation>& observed, const ProjectionGeometry& g,
                            const HelixModel& helix, const RigidPose& guess, const CalibrationOptions& opts = {});

struct CalibrationView {
    int view = 0;
    ProjectionGeometry geometry;
    std::vector<CircleObservation> observed;
    RigidPose guess;
};

struct ViewCalibration {
    int view = 0;
    std::optional<CalibrationResult> result;
    std::string error;  // set when calibrate threw
    bool success = false;
};

struct StackCalibration {
    std::vector<ViewCalibration> views;  // sorted by view id
    Ratio table;                         // calibrated / executed

    std::size_t success_count() const { return static_cast<std::size_t>(table.numerator); }
};

StackCalibration calibrate_stack(const std::vector<CalibrationView>& views, const HelixModel& helix,
                                 const CalibrationOptions& opts = {});

/// CSV report: view,matched,rejected,rms,converged,success.
std::string calibration_report_csv(const StackCalibration& s);

}  // namespace robct
