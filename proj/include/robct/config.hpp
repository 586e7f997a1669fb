#pragma once

#include "robct/arm.hpp"
#include "robct/calibration.hpp"
#include "robct/planner.hpp"
#include "robct/reconstruction.hpp"
#include "robct/world.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

namespace robct {

struct MeasurementParams {
    double sigma_px = 0.0;             // circle-center noise
    int false_circles = 0;             // per view
    double false_min_distance_px = 0.0;
    double helix_jitter_mm = 0.0;      // as-built marker deviation, fixed per run
};

struct ExperimentConfig {
    std::optional<std::uint64_t> seed;  // required before any stage runs
    TrajectorySpec trajectory{TrajectoryKind::Spherical, 4};
    ToolKind tool = ToolKind::Straight;
    EnvironmentPreset environment = EnvironmentPreset::Full;
    // Declarative replacements for the reference arm and the preset layout.
    // The tool kind of a custom arm still follows `tool`.
    std::optional<ArmModel> arm;
    std::optional<Environment> custom_environment;
    WorldConfig world;
    RoadmapParams roadmap;
    bool reflexes = true;
    ReflexParams reflex;
    MeasurementParams measurement;
    double phantom_mu = 0.02;
    CalibrationOptions calibration;
    int volume_n = 64;
    double volume_spacing_mm = 0.75;
    SolverSettings solver;

    /// Throws ConfigError on missing seed or out-of-range values.
    void validate() const;
    std::uint64_t require_seed() const;
};

/// Unknown keys and wrong types are ConfigError. Missing keys keep defaults.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& c);

ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const ExperimentConfig& c);

}  // namespace robct
