#include "robct/world.hpp"

#include "robct/error.hpp"

namespace robct {

ProjectionGeometry WorldConfig::geometry(const DetectorSampling& d) const {
    ProjectionGeometry g;
    g.source = Vec3(-source_to_iso_mm, 0, 0);
    g.detector_u = Vec3::UnitY();
    g.detector_v = -Vec3::UnitZ();
    g.pitch_u = d.pitch_mm;
    g.pitch_v = d.pitch_mm;
    g.width = d.width;
    g.height = d.height;
    const Vec3 center(iso_to_detector_mm, 0, 0);
    g.detector_origin = center - g.detector_u * (0.5 * d.width * d.pitch_mm) - g.detector_v * (0.5 * d.height * d.pitch_mm);
    return g;
}

std::string to_string(EnvironmentPreset p) {
    switch (p) {
        case EnvironmentPreset::Full: return "full";
        case EnvironmentPreset::TableOnly: return "table-only";
        case EnvironmentPreset::TableOnlyNoBeam: return "table-only-no-beam";
    }
    return "full";
}

EnvironmentPreset environment_preset_from_string(const std::string& s) {
    if (s == "full") return EnvironmentPreset::Full;
    if (s == "table-only") return EnvironmentPreset::TableOnly;
    if (s == "table-only-no-beam") return EnvironmentPreset::TableOnlyNoBeam;
    throw Error(ErrorCode::ConfigError, "unknown environment preset '" + s + "'");
}

const Obstacle* Environment::find(const std::string& id) const {
    for (const auto& o : obstacles) {
        if (o.id == id) return &o;
    }
    return nullptr;
}

Environment Environment::without(ObstacleKind kind) const {
    Environment e = *this;
    std::erase_if(e.obstacles, [&](const Obstacle& o) { return o.kind == kind; });
    return e;
}

Environment default_environment(const WorldConfig& world, EnvironmentPreset preset, double beam_width_mm) {
    Environment env;
    const double half_beam = 0.5 * beam_width_mm;
    const double det = world.iso_to_detector_mm;
    const double src = world.source_to_iso_mm;

    env.obstacles.push_back({"table", ObstacleKind::Table, Box{Vec3(-1500, -900, -400), Vec3(1000, 600, -350)}});
    if (preset != EnvironmentPreset::TableOnlyNoBeam) {
        env.obstacles.push_back(
            {"beam", ObstacleKind::Beam, Box{Vec3(-src, -half_beam, -half_beam), Vec3(det, half_beam, half_beam)}});
    }
    if (preset == EnvironmentPreset::Full) {
        env.obstacles.push_back({"detector", ObstacleKind::Detector, Box{Vec3(det, -216, -216), Vec3(det + 60, 216, 216)}});
        env.obstacles.push_back({"hutch-back", ObstacleKind::Hutch, Box{Vec3(-1500, -720, -350), Vec3(1000, -700, 900)}});
        env.obstacles.push_back({"hutch-front", ObstacleKind::Hutch, Box{Vec3(-1500, 420, -350), Vec3(1000, 440, 900)}});
        env.obstacles.push_back({"hutch-ceiling", ObstacleKind::Hutch, Box{Vec3(-1500, -720, 520), Vec3(1000, 440, 540)}});
    }
    env.allowances.insert({"link1", "table"});
    env.allowances.insert({"holder", "beam"});
    return env;
}

JointConfig default_homing_config() { return JointConfig{-0.42, 0.42, -0.86, -1.59, -0.44, -1.01, 0.24}; }

}  // namespace robct
