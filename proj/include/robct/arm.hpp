#pragma once

#include "robct/geometry.hpp"

#include <array>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace robct {

inline constexpr int kJointCount = 7;
inline constexpr double kArmReachMm = 855.0;

using JointVector = Eigen::Matrix<double, kJointCount, 1>;

struct JointConfig {
    JointVector angles = JointVector::Zero();

    JointConfig() = default;
    explicit JointConfig(const JointVector& a) : angles(a) {}
    JointConfig(std::initializer_list<double> values);

    double operator[](int i) const { return angles[i]; }
    double& operator[](int i) { return angles[i]; }
    bool operator==(const JointConfig& other) const { return angles == other.angles; }
};

struct JointLimit {
    double min = 0.0;
    double max = 0.0;
};

struct Capsule {
    Vec3 a = Vec3::Zero();
    Vec3 b = Vec3::Zero();
    double radius = 0.0;
};

struct Box {
    Vec3 min = Vec3::Zero();
    Vec3 max = Vec3::Zero();
};

enum class ToolKind { Straight, Curved };

std::string to_string(ToolKind kind);
ToolKind tool_kind_from_string(const std::string& s);

struct ToolTransform {
    ToolKind kind = ToolKind::Straight;
    double length_mm = 70.0;
    RigidPose offset;  // flange -> cylinder base

    static ToolTransform straight(double length_mm = 70.0);
    static ToolTransform curved(double length_mm = 70.0);
};

// Frames a collision body can be attached to. Link0 is the mount, Link1..7
// follow each joint, Tool is the cylinder base and Holder the helix center.
enum class BodyFrame { Link0, Link1, Link2, Link3, Link4, Link5, Link6, Link7, Flange, Tool, Holder };

std::string frame_name(BodyFrame frame);
BodyFrame frame_from_name(const std::string& name);

struct LinkBody {
    std::string name;
    BodyFrame frame = BodyFrame::Link0;
    int rank = 0;                   // position along the chain; bodies within 2 ranks never self-collide
    std::vector<Capsule> capsules;  // in the body's frame
};

enum class ObstacleKind { Table, Detector, Hutch, Beam, Other };

std::string to_string(ObstacleKind kind);
ObstacleKind obstacle_kind_from_string(const std::string& s);

struct Obstacle {
    std::string id;
    ObstacleKind kind = ObstacleKind::Other;
    std::variant<Box, Capsule> shape;  // world frame, mm
};

using Allowance = std::pair<std::string, std::string>;  // (body name, obstacle id)
using AllowanceSet = std::set<Allowance>;

struct ArmModel {
    std::array<RigidPose, kJointCount> joint_offsets;  // parent frame -> joint frame before rotation
    std::array<Vec3, kJointCount> joint_axes;
    std::array<JointLimit, kJointCount> joint_limits;
    RigidPose flange_offset;   // link7 -> flange
    RigidPose mount_pose;      // world -> arm base
    ToolTransform tool;
    RigidPose holder_offset;   // tool frame -> helix center (holder frame)
    RigidPose sample_offset;   // holder frame -> sample center
    std::vector<LinkBody> bodies;
    double inflation_mm = 10.0;

    // Panda-sized reference arm: 230 + 280 + 280 + 65 mm along the straight
    // chain, so the zero configuration reaches exactly 855 mm above the mount.
    static ArmModel reference(ToolKind tool = ToolKind::Straight);

    void set_tool(const ToolTransform& t);
    void validate() const;

    bool within_limits(const JointConfig& q, double tol = 0.0) const;
    JointConfig clamp(const JointConfig& q) const;

    // Upper bound on the tool-frame distance from the mount.
    double max_reach() const;

    RigidPose tool_target_for_sample(const RigidPose& sample_pose) const;
    RigidPose holder_for_sample(const RigidPose& sample_pose) const;
};

struct FkResult {
    RigidPose end_effector;                 // tool frame
    std::array<RigidPose, 8> link_poses;    // mount + 7 joint frames
    RigidPose flange;
    RigidPose holder;
    RigidPose sample;

    const RigidPose& frame(BodyFrame f) const;
};

/// Throws LimitViolation when q is outside the joint limits.
FkResult forward_kinematics(const ArmModel& arm, const JointConfig& q);

/// No limit check; used inside solvers that clamp themselves.
FkResult forward_kinematics_unchecked(const ArmModel& arm, const JointConfig& q);

/// Tool frame at the zero configuration, published with the link table.
RigidPose reference_home_pose(ToolKind tool);

struct IkOptions {
    double damping = 1e-3;
    int max_iterations = 200;
    double position_tolerance_mm = 0.01;
    double rotation_tolerance_rad = 0.01 * 3.14159265358979323846 / 180.0;
    int restarts = 10;             // total seeds tried, including the caller's
    double rotation_weight_mm = 200.0;
    double max_step_rad = 0.25;
};

struct IkResult {
    JointConfig q;
    int iterations = 0;
    double position_error_mm = 0.0;
    double rotation_error_rad = 0.0;
};

/// Damped least squares on the 6-D pose error of the tool frame. Throws
/// Unreachable for targets beyond the reach sphere and NoSolution when every
/// restart fails. The random generator supplies restart seeds.
IkResult solve_ik(const ArmModel& arm, const RigidPose& target, const JointConfig& seed,
                  std::mt19937_64& rng, const IkOptions& options = {});

/// Single damped-least-squares descent, no restarts; empty on failure.
std::optional<IkResult> solve_ik_single(const ArmModel& arm, const RigidPose& target,
                                        const JointConfig& seed, const IkOptions& options = {});

JointConfig random_config(const ArmModel& arm, std::mt19937_64& rng);

enum class ConfigStatusKind { Valid, SelfCollision, EnvCollision, LimitViolation };

struct ConfigStatus {
    ConfigStatusKind kind = ConfigStatusKind::Valid;
    std::string first;   // body name
    std::string second;  // body name or obstacle id

    bool valid() const { return kind == ConfigStatusKind::Valid; }
};

std::string to_string(const ConfigStatus& s);

/// Collision and limit check with every capsule inflated by `inflation_mm`
/// (defaults to the model's inflation when negative).
ConfigStatus check_config(const ArmModel& arm, const JointConfig& q,
                          const std::vector<Obstacle>& obstacles, const AllowanceSet& allowances,
                          double inflation_mm = -1.0);

/// Minimum surface distance (uninflated) over non-adjacent body pairs and
/// body/obstacle pairs, negative when penetrating. Allowances are honored.
double min_clearance(const ArmModel& arm, const JointConfig& q, const std::vector<Obstacle>& obstacles,
                     const AllowanceSet& allowances = {});

// Distance primitives, exposed for tests.
double segment_segment_distance(const Vec3& p0, const Vec3& p1, const Vec3& q0, const Vec3& q1);
double point_box_signed_distance(const Vec3& p, const Box& box);
double segment_box_signed_distance(const Vec3& p0, const Vec3& p1, const Box& box);
double capsule_capsule_distance(const Capsule& a, const Capsule& b);
double capsule_box_distance(const Capsule& c, const Box& box);

/// Body pairs considered for self collision (rank distance > 2).
bool bodies_checked_for_self_collision(const LinkBody& a, const LinkBody& b);

}  // namespace robct
