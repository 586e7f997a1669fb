#pragma once

#include "robct/calibration.hpp"
#include "robct/config.hpp"
#include "robct/planner.hpp"
#include "robct/reconstruction.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace robct {

namespace fs = std::filesystem;

/// File names inside a run directory.
namespace run_files {
inline constexpr const char* config = "config.json";
inline constexpr const char* trajectory = "trajectory.json";
inline constexpr const char* cache_dir = "cache";
inline constexpr const char* execution = "execution.json";
inline constexpr const char* map = "map.csv";
inline constexpr const char* stack = "stack.rct";
inline constexpr const char* observations = "observations.csv";
inline constexpr const char* guesses = "guesses.json";
inline constexpr const char* truth = "truth.json";
inline constexpr const char* calibration = "calibration.csv";
inline constexpr const char* refined = "refined.json";
inline constexpr const char* calibrated_stack = "stack_calibrated.rct";
inline constexpr const char* volume = "volume.vol";
inline constexpr const char* profiles = "profiles.csv";
inline constexpr const char* gradients = "gradients.csv";
inline constexpr const char* comparison = "gradient_comparison.csv";
inline constexpr const char* cost = "cost.csv";
inline constexpr const char* reachmap = "reachmap.pgm";
inline constexpr const char* report = "report.txt";
}  // namespace run_files

/// Independent stream seed for a stage, derived from the experiment seed.
std::uint64_t stage_seed(std::uint64_t seed, std::uint64_t stage, std::uint64_t index = 0);

ArmModel experiment_arm(const ExperimentConfig& c);
Environment experiment_environment(const ExperimentConfig& c);
PlanOptions experiment_plan_options(const ExperimentConfig& c);

struct PlanOutcome {
    Trajectory trajectory;
    bool from_cache = false;
    Ratio planned;
};

/// Plans (or loads from the run's cache) and writes config and trajectory.
PlanOutcome run_plan(const ExperimentConfig& c, const fs::path& dir);

struct ExecuteOutcome {
    ExecutionLog log;
    Ratio executed;
    std::size_t reflexes = 0;
};

ExecuteOutcome run_execute(const ExperimentConfig& c, const fs::path& dir);

struct MeasureOutcome {
    std::size_t views = 0;
    std::size_t observations = 0;
};

/// One projection and one fiducial observation set per executed way-point
/// with a usable image.
MeasureOutcome run_measure(const ExperimentConfig& c, const fs::path& dir);

struct CalibrateOutcome {
    StackCalibration stack;
    Ratio calibrated;
};

/// Refines every view; only successful views enter the calibrated stack.
CalibrateOutcome run_calibrate(const ExperimentConfig& c, const fs::path& dir);

struct ProfileGradient {
    std::string name;
    double gradient = 0.0;
};

struct ReconstructOutcome {
    ReconResult result;
    std::size_t views = 0;
    bool calibrated = false;
    std::vector<ProfileGradient> gradients;
    // Filled when compared against another run: this / other per profile.
    std::vector<std::pair<std::string, double>> ratios;
};

/// Reconstructs the calibrated stack when present, else the nominal one.
ReconstructOutcome run_reconstruct(const ExperimentConfig& c, const fs::path& dir,
                                   const std::optional<fs::path>& compare_dir = std::nullopt);

std::vector<ProfileGradient> read_gradients(const fs::path& path);

/// Mollweide raster, width 2h by h: white outside the ellipse and where no
/// reached way-point is near, black for planned or executed way-points and
/// gray for reflex-skipped ones.
std::string reachmap_pgm(const std::vector<MapEntry>& map, int height = 256);
inline constexpr unsigned char kReachedGray = 0;
inline constexpr unsigned char kReflexGray = 128;
inline constexpr unsigned char kEmptyGray = 255;

/// Table rows for whatever stages have run in `dir`.
std::string run_report(const fs::path& dir);

}  // namespace robct
