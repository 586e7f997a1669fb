#include "robct/arm.hpp"

#include "robct/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace robct {

namespace {

constexpr double kPi = std::numbers::pi;

const std::array<std::pair<BodyFrame, const char*>, 11> kFrameNames = {{
    {BodyFrame::Link0, "link0"},
    {BodyFrame::Link1, "link1"},
    {BodyFrame::Link2, "link2"},
    {BodyFrame::Link3, "link3"},
    {BodyFrame::Link4, "link4"},
    {BodyFrame::Link5, "link5"},
    {BodyFrame::Link6, "link6"},
    {BodyFrame::Link7, "link7"},
    {BodyFrame::Flange, "flange"},
    {BodyFrame::Tool, "tool"},
    {BodyFrame::Holder, "holder"},
}};

Capsule sphere(double r) { return {Vec3::Zero(), Vec3::Zero(), r}; }
Capsule along_z(double z0, double z1, double r) { return {Vec3(0, 0, z0), Vec3(0, 0, z1), r}; }

}  // namespace

JointConfig::JointConfig(std::initializer_list<double> values) {
    if (values.size() != kJointCount) {
        throw Error(ErrorCode::InvalidArgument, "joint config needs exactly 7 values");
    }
    int i = 0;
    for (double v : values) angles[i++] = v;
}

std::string to_string(ToolKind kind) { return kind == ToolKind::Straight ? "straight" : "curved"; }

ToolKind tool_kind_from_string(const std::string& s) {
    if (s == "straight") return ToolKind::Straight;
    if (s == "curved") return ToolKind::Curved;
    throw Error(ErrorCode::ConfigError, "unknown tool kind '" + s + "'");
}

ToolTransform ToolTransform::straight(double length_mm) {
    return {ToolKind::Straight, length_mm, RigidPose::translation_only(Vec3(0, 0, length_mm))};
}

ToolTransform ToolTransform::curved(double length_mm) {
    // 90 degree bend about the flange y axis: the cylinder axis ends up along flange +x.
    return {ToolKind::Curved, length_mm,
            compose(RigidPose::translation_only(Vec3(0, 0, length_mm)),
                    RigidPose::axis_angle(Vec3::UnitY(), 0.5 * kPi))};
}

std::string frame_name(BodyFrame frame) {
    for (const auto& [f, n] : kFrameNames) {
        if (f == frame) return n;
    }
    return "unknown";
}

BodyFrame frame_from_name(const std::string& name) {
    for (const auto& [f, n] : kFrameNames) {
        if (name == n) return f;
    }
    throw Error(ErrorCode::ConfigError, "unknown body frame '" + name + "'");
}

std::string to_string(ObstacleKind kind) {
    switch (kind) {
        case ObstacleKind::Table: return "table";
        case ObstacleKind::Detector: return "detector";
        case ObstacleKind::Hutch: return "hutch";
        case ObstacleKind::Beam: return "beam";
        case ObstacleKind::Other: return "other";
    }
    return "other";
}

ObstacleKind obstacle_kind_from_string(const std::string& s) {
    if (s == "table") return ObstacleKind::Table;
    if (s == "detector") return ObstacleKind::Detector;
    if (s == "hutch") return ObstacleKind::Hutch;
    if (s == "beam") return ObstacleKind::Beam;
    if (s == "other") return ObstacleKind::Other;
    throw Error(ErrorCode::ConfigError, "unknown obstacle kind '" + s + "'");
}

ArmModel ArmModel::reference(ToolKind tool) {
    ArmModel arm;
    const Vec3 z = Vec3::UnitZ();
    const Vec3 y = Vec3::UnitY();
    // Link table: vertical base joint, then alternating pitch / roll.
    //   joint  axis  offset from previous frame (mm)
    //   1      z     0
    //   2      y     230   (shoulder)
    //   3      z     0
    //   4      y     280   (elbow)
    //   5      z     0
    //   6      y     280   (wrist)
    //   7      z     0
    //   flange       65
    const std::array<double, kJointCount> offsets = {0, 230, 0, 280, 0, 280, 0};
    const std::array<Vec3, kJointCount> axes = {z, y, z, y, z, y, z};
    const std::array<JointLimit, kJointCount> limits = {{
        {-2.8973, 2.8973},
        {-1.7628, 1.7628},
        {-2.8973, 2.8973},
        {-3.0000, 0.1000},
        {-2.8973, 2.8973},
        {-2.2000, 2.2000},
        {-2.8973, 2.8973},
    }};
    for (int i = 0; i < kJointCount; ++i) {
        arm.joint_offsets[i] = RigidPose::translation_only(Vec3(0, 0, offsets[i]));
        arm.joint_axes[i] = axes[i];
        arm.joint_limits[i] = limits[i];
    }
    arm.flange_offset = RigidPose::translation_only(Vec3(0, 0, 65));
    arm.mount_pose = RigidPose::translation_only(Vec3(0, -250, -350));
    arm.holder_offset = RigidPose::translation_only(Vec3(0, 0, 59));
    arm.sample_offset = RigidPose::translation_only(Vec3(0, 0, 55));
    arm.bodies = {
        {"link1", BodyFrame::Link1, 1, {along_z(0, 230, 60)}},
        {"link2", BodyFrame::Link2, 2, {sphere(55)}},
        {"link3", BodyFrame::Link3, 3, {along_z(0, 280, 45)}},
        {"link4", BodyFrame::Link4, 4, {sphere(45)}},
        {"link5", BodyFrame::Link5, 5, {along_z(0, 190, 35)}},
        {"link6", BodyFrame::Link6, 6, {sphere(40)}},
        {"link7", BodyFrame::Link7, 7, {along_z(0, 65, 35)}},
        {"tool", BodyFrame::Flange, 8, {along_z(0, 70, 20)}},
        {"holder", BodyFrame::Tool, 9, {along_z(30, 88, 30)}},
    };
    arm.set_tool(tool == ToolKind::Straight ? ToolTransform::straight() : ToolTransform::curved());
    return arm;
}

void ArmModel::set_tool(const ToolTransform& t) {
    tool = t;
    for (auto& body : bodies) {
        if (body.name == "tool" && body.frame == BodyFrame::Flange && body.capsules.size() == 1) {
            body.capsules[0].b = Vec3(0, 0, t.length_mm);
        }
    }
}

void ArmModel::validate() const {
    for (int i = 0; i < kJointCount; ++i) {
        if (!(joint_limits[i].min < joint_limits[i].max)) {
            throw Error(ErrorCode::ConfigError, "joint " + std::to_string(i + 1) + " has min >= max");
        }
        if (std::abs(joint_axes[i].norm() - 1.0) > 1e-9) {
            throw Error(ErrorCode::ConfigError, "joint axes must be unit vectors");
        }
    }
    if (inflation_mm < 0.0) {
        throw Error(ErrorCode::ConfigError, "inflation must be non-negative");
    }
    double chain = flange_offset.translation().norm();
    for (const auto& o : joint_offsets) chain += o.translation().norm();
    if (chain > kArmReachMm + 1e-9) {
        throw Error(ErrorCode::ConfigError, "link chain exceeds the 855 mm reach");
    }
}

bool ArmModel::within_limits(const JointConfig& q, double tol) const {
    for (int i = 0; i < kJointCount; ++i) {
        if (!(q[i] >= joint_limits[i].min - tol && q[i] <= joint_limits[i].max + tol)) return false;
    }
    return true;
}

JointConfig ArmModel::clamp(const JointConfig& q) const {
    JointConfig out = q;
    for (int i = 0; i < kJointCount; ++i) {
        out[i] = std::clamp(q[i], joint_limits[i].min, joint_limits[i].max);
    }
    return out;
}

double ArmModel::max_reach() const {
    double chain = flange_offset.translation().norm() + tool.offset.translation().norm();
    for (const auto& o : joint_offsets) chain += o.translation().norm();
    return chain;
}

RigidPose ArmModel::tool_target_for_sample(const RigidPose& sample_pose) const {
    return compose(holder_for_sample(sample_pose), holder_offset.inverse());
}

RigidPose ArmModel::holder_for_sample(const RigidPose& sample_pose) const {
    return compose(sample_pose, sample_offset.inverse());
}

const RigidPose& FkResult::frame(BodyFrame f) const {
    switch (f) {
        case BodyFrame::Flange: return flange;
        case BodyFrame::Tool: return end_effector;
        case BodyFrame::Holder: return holder;
        default: return link_poses[static_cast<std::size_t>(f)];
    }
}

FkResult forward_kinematics_unchecked(const ArmModel& arm, const JointConfig& q) {
    FkResult r;
    RigidPose current = arm.mount_pose;
    r.link_poses[0] = current;
    for (int i = 0; i < kJointCount; ++i) {
        current = compose(current, arm.joint_offsets[i]);
        current = compose(current, RigidPose::axis_angle(arm.joint_axes[i], q[i]));
        r.link_poses[i + 1] = current;
    }
    r.flange = compose(current, arm.flange_offset);
    r.end_effector = compose(r.flange, arm.tool.offset);
    r.holder = compose(r.end_effector, arm.holder_offset);
    r.sample = compose(r.holder, arm.sample_offset);
    return r;
}

FkResult forward_kinematics(const ArmModel& arm, const JointConfig& q) {
    if (!arm.within_limits(q)) {
        throw Error(ErrorCode::LimitViolation, "joint configuration outside limits");
    }
    return forward_kinematics_unchecked(arm, q);
}

RigidPose reference_home_pose(ToolKind tool) {
    // mount * Tz(230 + 280 + 280 + 65) * tool offset; every joint at zero.
    const RigidPose flange = RigidPose::translation_only(Vec3(0, -250, -350 + 855));
    return compose(flange, tool == ToolKind::Straight ? ToolTransform::straight().offset
                                                      : ToolTransform::curved().offset);
}

namespace {

using Matrix6x7 = Eigen::Matrix<double, 6, kJointCount>;
using Vector6 = Eigen::Matrix<double, 6, 1>;

struct PoseError {
    Vec3 position;
    Vec3 rotation;
};

PoseError pose_error(const RigidPose& target, const RigidPose& current) {
    return {target.translation() - current.translation(),
            rotation_vector(target.rotation() * current.rotation().conjugate())};
}

Matrix6x7 tool_jacobian(const ArmModel& arm, const FkResult& fk) {
    Matrix6x7 j;
    const Vec3 p = fk.end_effector.translation();
    for (int i = 0; i < kJointCount; ++i) {
        const RigidPose& frame = fk.link_poses[i + 1];
        const Vec3 axis = frame.rotate(arm.joint_axes[i]);
        const Vec3 origin = frame.translation();
        j.block<3, 1>(0, i) = axis.cross(p - origin);
        j.block<3, 1>(3, i) = axis;
    }
    return j;
}

}  // namespace

std::optional<IkResult> solve_ik_single(const ArmModel& arm, const RigidPose& target,
                                        const JointConfig& seed, const IkOptions& options) {
    JointConfig q = arm.clamp(seed);
    const double w = options.rotation_weight_mm;
    for (int it = 0; it <= options.max_iterations; ++it) {
        const FkResult fk = forward_kinematics_unchecked(arm, q);
        const PoseError e = pose_error(target, fk.end_effector);
        const double pos_err = e.position.norm();
        const double rot_err = e.rotation.norm();
        if (pos_err < options.position_tolerance_mm && rot_err < options.rotation_tolerance_rad) {
            return IkResult{q, it, pos_err, rot_err};
        }
        if (it == options.max_iterations) break;

        Matrix6x7 j = tool_jacobian(arm, fk);
        j.bottomRows<3>() *= w;
        Vector6 err;
        err << e.position, w * e.rotation;
        const Eigen::Matrix<double, 6, 6> jjt =
            j * j.transpose() + options.damping * options.damping * Eigen::Matrix<double, 6, 6>::Identity();
        JointVector dq = j.transpose() * jjt.ldlt().solve(err);
        const double largest = dq.cwiseAbs().maxCoeff();
        if (!std::isfinite(largest)) break;
        if (largest > options.max_step_rad) dq *= options.max_step_rad / largest;
        q = arm.clamp(JointConfig(q.angles + dq));
    }
    return std::nullopt;
}

JointConfig random_config(const ArmModel& arm, std::mt19937_64& rng) {
    JointConfig q;
    for (int i = 0; i < kJointCount; ++i) {
        std::uniform_real_distribution<double> dist(arm.joint_limits[i].min, arm.joint_limits[i].max);
        q[i] = dist(rng);
    }
    return q;
}

IkResult solve_ik(const ArmModel& arm, const RigidPose& target, const JointConfig& seed,
                  std::mt19937_64& rng, const IkOptions& options) {
    if (!arm.within_limits(seed)) {
        throw Error(ErrorCode::LimitViolation, "IK seed outside joint limits");
    }
    if ((target.translation() - arm.mount_pose.translation()).norm() > arm.max_reach()) {
        throw Error(ErrorCode::Unreachable, "target beyond the reach sphere");
    }
    JointConfig start = seed;
    for (int attempt = 0; attempt < std::max(1, options.restarts); ++attempt) {
        if (auto r = solve_ik_single(arm, target, start, options)) {
            return *r;
        }
        start = random_config(arm, rng);
    }
    throw Error(ErrorCode::NoSolution, "damped least squares did not converge");
}

// ---------------------------------------------------------------------------
// distances

double segment_segment_distance(const Vec3& p0, const Vec3& p1, const Vec3& q0, const Vec3& q1) {
    // Closest points between two segments (Ericson, Real-Time Collision Detection 5.1.9).
    const Vec3 d1 = p1 - p0;
    const Vec3 d2 = q1 - q0;
    const Vec3 r = p0 - q0;
    const double a = d1.squaredNorm();
    const double e = d2.squaredNorm();
    const double f = d2.dot(r);
    constexpr double eps = 1e-18;
    double s = 0.0;
    double t = 0.0;
    if (a <= eps && e <= eps) {
        return r.norm();
    }
    if (a <= eps) {
        t = std::clamp(f / e, 0.0, 1.0);
    } else {
        const double c = d1.dot(r);
        if (e <= eps) {
            s = std::clamp(-c / a, 0.0, 1.0);
        } else {
            const double b = d1.dot(d2);
            const double denom = a * e - b * b;
            s = denom > eps * a * e ? std::clamp((b * f - c * e) / denom, 0.0, 1.0) : 0.0;
            t = (b * s + f) / e;
            if (t < 0.0) {
                t = 0.0;
                s = std::clamp(-c / a, 0.0, 1.0);
            } else if (t > 1.0) {
                t = 1.0;
                s = std::clamp((b - c) / a, 0.0, 1.0);
            }
        }
    }
    return ((p0 + d1 * s) - (q0 + d2 * t)).norm();
}

double point_box_signed_distance(const Vec3& p, const Box& box) {
    const Vec3 center = 0.5 * (box.min + box.max);
    const Vec3 half = 0.5 * (box.max - box.min);
    const Vec3 q = (p - center).cwiseAbs() - half;
    const double outside = q.cwiseMax(0.0).norm();
    const double inside = std::min(q.maxCoeff(), 0.0);
    return outside + inside;
}

double segment_box_signed_distance(const Vec3& p0, const Vec3& p1, const Box& box) {
    // The signed distance to a convex set is convex along a line, so a golden
    // section search over the segment parameter finds the global minimum.
    auto f = [&](double t) { return point_box_signed_distance(p0 + t * (p1 - p0), box); };
    const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
    double lo = 0.0;
    double hi = 1.0;
    double x1 = hi - invphi * (hi - lo);
    double x2 = lo + invphi * (hi - lo);
    double f1 = f(x1);
    double f2 = f(x2);
    for (int it = 0; it < 80 && hi - lo > 1e-14; ++it) {
        if (f1 <= f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - invphi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + invphi * (hi - lo);
            f2 = f(x2);
        }
    }
    return std::min({f(0.0), f(1.0), f1, f2, f(0.5 * (lo + hi))});
}

double capsule_capsule_distance(const Capsule& a, const Capsule& b) {
    return segment_segment_distance(a.a, a.b, b.a, b.b) - a.radius - b.radius;
}

double capsule_box_distance(const Capsule& c, const Box& box) {
    return segment_box_signed_distance(c.a, c.b, box) - c.radius;
}

bool bodies_checked_for_self_collision(const LinkBody& a, const LinkBody& b) {
    return std::abs(a.rank - b.rank) > 2;
}

namespace {

struct WorldBody {
    const LinkBody* body;
    std::vector<Capsule> capsules;
    Vec3 center;
    double bound;  // bounding-sphere radius around center
};

std::vector<WorldBody> posed_bodies(const ArmModel& arm, const FkResult& fk) {
    std::vector<WorldBody> out;
    out.reserve(arm.bodies.size());
    for (const auto& body : arm.bodies) {
        const RigidPose& frame = fk.frame(body.frame);
        WorldBody wb{&body, {}, Vec3::Zero(), 0.0};
        Vec3 lo = Vec3::Constant(1e300);
        Vec3 hi = Vec3::Constant(-1e300);
        for (const auto& c : body.capsules) {
            Capsule w{frame.apply(c.a), frame.apply(c.b), c.radius};
            lo = lo.cwiseMin(w.a).cwiseMin(w.b);
            hi = hi.cwiseMax(w.a).cwiseMax(w.b);
            wb.capsules.push_back(w);
        }
        if (!wb.capsules.empty()) {
            wb.center = 0.5 * (lo + hi);
            double bound = 0.0;
            for (const auto& c : wb.capsules) {
                bound = std::max({bound, (c.a - wb.center).norm() + c.radius, (c.b - wb.center).norm() + c.radius});
            }
            wb.bound = bound;
        }
        out.push_back(std::move(wb));
    }
    return out;
}

double capsule_obstacle_distance(const Capsule& c, const Obstacle& o) {
    if (const auto* box = std::get_if<Box>(&o.shape)) {
        return capsule_box_distance(c, *box);
    }
    return capsule_capsule_distance(c, std::get<Capsule>(o.shape));
}

double obstacle_lower_bound(const WorldBody& wb, const Obstacle& o) {
    if (const auto* box = std::get_if<Box>(&o.shape)) {
        return point_box_signed_distance(wb.center, *box) - wb.bound;
    }
    const auto& c = std::get<Capsule>(o.shape);
    return segment_segment_distance(wb.center, wb.center, c.a, c.b) - c.radius - wb.bound;
}

bool allowed(const AllowanceSet& allowances, const std::string& body, const std::string& other) {
    return allowances.count({body, other}) > 0 || allowances.count({other, body}) > 0;
}

}  // namespace

std::string to_string(const ConfigStatus& s) {
    switch (s.kind) {
        case ConfigStatusKind::Valid: return "Valid";
        case ConfigStatusKind::SelfCollision: return "SelfCollision(" + s.first + "," + s.second + ")";
        case ConfigStatusKind::EnvCollision: return "EnvCollision(" + s.first + "," + s.second + ")";
        case ConfigStatusKind::LimitViolation: return "LimitViolation";
    }
    return "?";
}

ConfigStatus check_config(const ArmModel& arm, const JointConfig& q, const std::vector<Obstacle>& obstacles,
                          const AllowanceSet& allowances, double inflation_mm) {
    if (!arm.within_limits(q)) {
        return {ConfigStatusKind::LimitViolation, {}, {}};
    }
    const double inflate = inflation_mm < 0.0 ? arm.inflation_mm : inflation_mm;
    const FkResult fk = forward_kinematics_unchecked(arm, q);
    const auto bodies = posed_bodies(arm, fk);

    for (const auto& wb : bodies) {
        for (const auto& o : obstacles) {
            if (allowed(allowances, wb.body->name, o.id)) continue;
            if (obstacle_lower_bound(wb, o) >= inflate) continue;
            for (const auto& c : wb.capsules) {
                if (capsule_obstacle_distance(c, o) < inflate) {
                    return {ConfigStatusKind::EnvCollision, wb.body->name, o.id};
                }
            }
        }
    }
    for (std::size_t i = 0; i < bodies.size(); ++i) {
        for (std::size_t j = i + 1; j < bodies.size(); ++j) {
            const auto& a = bodies[i];
            const auto& b = bodies[j];
            if (!bodies_checked_for_self_collision(*a.body, *b.body)) continue;
            if (allowed(allowances, a.body->name, b.body->name)) continue;
            if ((a.center - b.center).norm() - a.bound - b.bound >= 2.0 * inflate) continue;
            for (const auto& ca : a.capsules) {
                for (const auto& cb : b.capsules) {
                    if (capsule_capsule_distance(ca, cb) < 2.0 * inflate) {
                        return {ConfigStatusKind::SelfCollision, a.body->name, b.body->name};
                    }
                }
            }
        }
    }
    return {};
}

double min_clearance(const ArmModel& arm, const JointConfig& q, const std::vector<Obstacle>& obstacles,
                     const AllowanceSet& allowances) {
    const FkResult fk = forward_kinematics_unchecked(arm, q);
    const auto bodies = posed_bodies(arm, fk);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& wb : bodies) {
        for (const auto& o : obstacles) {
            if (allowed(allowances, wb.body->name, o.id)) continue;
            if (obstacle_lower_bound(wb, o) >= best) continue;
            for (const auto& c : wb.capsules) best = std::min(best, capsule_obstacle_distance(c, o));
        }
    }
    for (std::size_t i = 0; i < bodies.size(); ++i) {
        for (std::size_t j = i + 1; j < bodies.size(); ++j) {
            const auto& a = bodies[i];
            const auto& b = bodies[j];
            if (!bodies_checked_for_self_collision(*a.body, *b.body)) continue;
            if (allowed(allowances, a.body->name, b.body->name)) continue;
            if ((a.center - b.center).norm() - a.bound - b.bound >= best) continue;
            for (const auto& ca : a.capsules) {
                for (const auto& cb : b.capsules) best = std::min(best, capsule_capsule_distance(ca, cb));
            }
        }
    }
    return best;
}

}  // namespace robct
