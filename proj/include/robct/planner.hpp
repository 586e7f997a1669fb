#pragma once

#include "robct/arm.hpp"
#include "robct/digest.hpp"
#include "robct/geometry.hpp"
#include "robct/world.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace robct {

enum class TrajectoryKind { Circular, Spherical };

struct TrajectorySpec {
    TrajectoryKind kind = TrajectoryKind::Circular;
    int count = 1;  // n for circular, n_side for spherical

    static TrajectorySpec circular(int n) { return {TrajectoryKind::Circular, n}; }
    static TrajectorySpec spherical(int n_side) { return {TrajectoryKind::Spherical, n_side}; }
};

/// "circular:900" or "spherical:10".
TrajectorySpec parse_trajectory_spec(const std::string& text);
std::string to_string(const TrajectorySpec& spec);

enum class WaypointStatus { Pending, Planned, Unreachable, Executed, ReflexSkipped };

std::string to_string(WaypointStatus s);
WaypointStatus waypoint_status_from_string(const std::string& s);

struct Waypoint {
    int index = 0;
    std::int64_t grid_index = 0;  // HEALPix pixel or circle step
    RigidPose sample_pose;        // world frame; sample at the isocenter
    Vec3 view_direction = Vec3::UnitX();  // beam direction in the sample frame
    WaypointStatus status = WaypointStatus::Pending;
    std::optional<JointConfig> config;
    std::vector<JointConfig> path;       // from the previous planned config (exclusive) to config
    std::vector<JointConfig> home_path;  // from the homing config (exclusive) to config

    double lon() const;
    double lat() const;
};

/// Rotation that puts the sample z axis along the beam when the grid point is
/// the north pole; the beam then leaves the sample along the point direction.
RigidPose spherical_rotation(const Vec3& direction);

/// Circular: n equiangular rotations about the vertical axis. Spherical:
/// HEALPix centers visited ring by ring, alternating azimuth direction.
std::vector<Waypoint> make_waypoints(const TrajectorySpec& spec, const WorldConfig& world = {});

struct RoadmapParams {
    int samples = 2000;
    int k_nearest = 10;
    double step_rad = 0.02;
    int ik_seeds = 24;  // per way-point, the homing config is always the first
    std::uint64_t seed = 1;
};

/// Sampled configurations plus the k-nearest-neighbour edges between valid
/// ones. Samples are drawn independently of the environment; only the
/// validity flags and the edge checks depend on it.
struct Roadmap {
    RoadmapParams params;
    JointConfig homing;
    std::vector<JointConfig> samples;  // samples[0] is the homing config
    std::vector<bool> valid;
    std::vector<std::pair<int, int>> edges;  // collision-free, i < j

    std::vector<JointConfig> nodes() const;  // valid samples only
};

Roadmap build_roadmap(const ArmModel& arm, const Environment& env, const JointConfig& homing,
                      const RoadmapParams& params = {});

/// Straight joint-space segment checked every `step_rad` of the largest joint move.
bool segment_valid(const ArmModel& arm, const Environment& env, const JointConfig& a, const JointConfig& b,
                   double step_rad);

int interpolation_steps(const JointConfig& a, const JointConfig& b, double step_rad);

struct Trajectory {
    TrajectorySpec spec;
    nlohmann::json params;  // everything besides the environment that shaped the plan
    std::vector<Waypoint> waypoints;
    Digest trajectory_id{};
    Digest environment_id{};
    JointConfig homing_config;

    std::size_t planned_count() const;
};

struct PlanOptions {
    ToolKind tool = ToolKind::Straight;
    RoadmapParams roadmap;
    IkOptions ik;
    std::set<int> forced_unreachable;  // way-point indices treated as failing
};

/// Skip rule on an abstract chain: walks 0..n-1 and keeps i when
/// connect(last_kept, i) holds (last_kept = -1 for the start). Returns the
/// kept indices in visiting order.
std::vector<int> plan_chain(int n, const std::function<bool(int from, int to)>& connect);

/// IK goal candidates for every way-point, from environment independent seeds
/// plus the solutions of the neighbouring way-points in visiting order.
std::vector<std::vector<JointConfig>> goal_candidates(const ArmModel& arm, const std::vector<Waypoint>& waypoints,
                                                      const JointConfig& homing, const RoadmapParams& params,
                                                      const IkOptions& ik = {});

/// Plans every way-point; throws EmptyPlan when none is reachable.
Trajectory plan_trajectory(const ArmModel& arm, const Environment& env, const std::vector<Waypoint>& waypoints,
                           const Roadmap& roadmap, const TrajectorySpec& spec, const PlanOptions& options = {});

nlohmann::json environment_json(const Environment& env);
nlohmann::json arm_json(const ArmModel& arm);
/// Inverses of the two above; malformed input is ConfigError.
Environment environment_from_json(const nlohmann::json& j);
ArmModel arm_from_json(const nlohmann::json& j);
Digest environment_id(const Environment& env);
Digest trajectory_id(const TrajectorySpec& spec, const nlohmann::json& params, const Digest& env_id);

/// Parameters hashed into the trajectory id.
nlohmann::json plan_params_json(const ArmModel& arm, const PlanOptions& options, const JointConfig& homing);

nlohmann::json trajectory_to_json(const Trajectory& t);
Trajectory trajectory_from_json(const nlohmann::json& j);

std::filesystem::path cache_path(const std::filesystem::path& dir, const Digest& trajectory_id);
std::filesystem::path cache_store(const Trajectory& t, const std::filesystem::path& dir);

/// Empty on a cache miss. Throws CorruptFile for unreadable or tampered files
/// and DigestMismatch when the stored ids disagree with the request.
std::optional<Trajectory> cache_load(const TrajectorySpec& spec, const nlohmann::json& params,
                                     const Environment& env, const std::filesystem::path& dir);

struct ReflexParams {
    double sigma_rad = 0.002;
    double threshold_mm = 5.0;
    double step_rad = 0.02;
};

struct ReflexEvent {
    int waypoint = 0;
    double clearance_mm = 0.0;
};

struct ExecutionLog {
    std::vector<WaypointStatus> outcome;  // per way-point
    std::vector<bool> image_usable;
    std::vector<ReflexEvent> reflexes;
    std::vector<int> recoveries;  // way-points after which the arm transited via homing
    Digest trajectory_id{};

    std::size_t executed_count() const;
};

/// Walks the planned segments with noisy clearance checks. Throws
/// DigestMismatch when the environment differs from the planned one and
/// HomingUnreachable when a recovery transit collides.
ExecutionLog execute(const Trajectory& t, const ArmModel& arm, const Environment& env, const ReflexParams& reflex,
                     std::uint64_t seed);

nlohmann::json execution_log_to_json(const ExecutionLog& log);
ExecutionLog execution_log_from_json(const nlohmann::json& j);

struct Ratio {
    std::int64_t numerator = 0;
    std::int64_t denominator = 0;

    double percent() const;
    std::string str() const;  // "X / Y (Z %)"
};

struct MapEntry {
    int waypoint = 0;
    double lon = 0.0;
    double lat = 0.0;
    WaypointStatus status = WaypointStatus::Pending;
};

struct ReachabilityReport {
    Ratio planned;     // planned / potential
    Ratio executed;    // executed / planned
    Ratio calibrated;  // calibrated / executed, filled in by calibration
    std::vector<MapEntry> map;
};

ReachabilityReport reachability_report(const Trajectory& t, const ExecutionLog* log = nullptr);

std::string map_csv(const std::vector<MapEntry>& map);
std::vector<MapEntry> parse_map_csv(const std::string& text);

}  // namespace robct
