#include "robct/planner.hpp"

#include "robct/error.hpp"
#include "robct/healpix.hpp"
#include "robct/parallel.hpp"
#include "robct/serialize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <queue>
#include <sstream>

namespace robct {

namespace {

constexpr int kFormatVersion = 1;

double joint_distance(const JointConfig& a, const JointConfig& b) { return (a.angles - b.angles).norm(); }

// Interior points only; callers have checked both endpoints.
bool segment_interior_valid(const ArmModel& arm, const Environment& env, const JointConfig& a, const JointConfig& b,
                            double step_rad) {
    const int n = interpolation_steps(a, b, step_rad);
    for (int s = 1; s < n; ++s) {
        const double t = static_cast<double>(s) / n;
        JointConfig q(a.angles + t * (b.angles - a.angles));
        if (!check_config(arm, q, env.obstacles, env.allowances).valid()) return false;
    }
    return true;
}

// k nearest among `pool` for every query; ties broken by index. `skip`
// rejects pool entries (the query itself is always skipped).
std::vector<std::vector<int>> k_nearest(const std::vector<JointConfig>& queries, int query_offset,
                                        const std::vector<JointConfig>& pool, int k,
                                        const std::function<bool(int query, int candidate)>& skip = {}) {
    std::vector<std::vector<int>> out(queries.size());
    parallel_for(queries.size(), [&](std::size_t qi) {
        const int self = query_offset + static_cast<int>(qi);
        std::vector<std::pair<double, int>> d;
        d.reserve(pool.size());
        for (std::size_t j = 0; j < pool.size(); ++j) {
            if (static_cast<int>(j) == self || (skip && skip(self, static_cast<int>(j)))) continue;
            d.emplace_back((pool[j].angles - queries[qi].angles).squaredNorm(), static_cast<int>(j));
        }
        const auto kk = std::min<std::size_t>(static_cast<std::size_t>(std::max(k, 0)), d.size());
        std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(kk), d.end());
        out[qi].reserve(kk);
        for (std::size_t m = 0; m < kk; ++m) out[qi].push_back(d[m].second);
    });
    return out;
}

std::vector<std::pair<int, int>> unique_edges(const std::vector<std::vector<int>>& nn, int query_offset) {
    std::vector<std::pair<int, int>> edges;
    for (std::size_t i = 0; i < nn.size(); ++i) {
        const int a = query_offset + static_cast<int>(i);
        for (int b : nn[i]) edges.emplace_back(std::min(a, b), std::max(a, b));
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    return edges;
}

struct Graph {
    std::vector<std::vector<std::pair<int, double>>> adj;

    explicit Graph(std::size_t n) : adj(n) {}

    void add(int a, int b, double w) {
        adj[static_cast<std::size_t>(a)].emplace_back(b, w);
        adj[static_cast<std::size_t>(b)].emplace_back(a, w);
    }

    // Dijkstra from `start`; stops once a node with stop[node] set is settled
    // and returns it (or -1). parent receives the shortest-path tree.
    int shortest(int start, const std::vector<char>* stop, std::vector<int>& parent) const {
        const std::size_t n = adj.size();
        std::vector<double> dist(n, std::numeric_limits<double>::infinity());
        parent.assign(n, -1);
        using Item = std::pair<double, int>;
        std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
        dist[static_cast<std::size_t>(start)] = 0.0;
        pq.emplace(0.0, start);
        while (!pq.empty()) {
            auto [d, u] = pq.top();
            pq.pop();
            if (d > dist[static_cast<std::size_t>(u)]) continue;
            if (stop && (*stop)[static_cast<std::size_t>(u)]) return u;
            for (auto [v, w] : adj[static_cast<std::size_t>(u)]) {
                const double nd = d + w;
                if (nd < dist[static_cast<std::size_t>(v)]) {
                    dist[static_cast<std::size_t>(v)] = nd;
                    parent[static_cast<std::size_t>(v)] = u;
                    pq.emplace(nd, v);
                }
            }
        }
        return -1;
    }
};

std::vector<int> trace(const std::vector<int>& parent, int start, int goal) {
    std::vector<int> nodes;
    for (int v = goal; v != start; v = parent[static_cast<std::size_t>(v)]) {
        if (v < 0) throw Error(ErrorCode::Unreachable, "broken shortest-path tree");
        nodes.push_back(v);
    }
    std::reverse(nodes.begin(), nodes.end());
    return nodes;
}

nlohmann::json spec_json(const TrajectorySpec& spec) {
    return {{"kind", spec.kind == TrajectoryKind::Circular ? "circular" : "spherical"}, {"count", spec.count}};
}

TrajectorySpec spec_from_json(const nlohmann::json& j) {
    return parse_trajectory_spec(j.at("kind").get<std::string>() + ":" + std::to_string(j.at("count").get<int>()));
}

nlohmann::json path_json(const std::vector<JointConfig>& path) {
    auto j = nlohmann::json::array();
    for (const auto& q : path) j.push_back(joints_json(q));
    return j;
}

std::vector<JointConfig> path_from_json(const nlohmann::json& j) {
    std::vector<JointConfig> out;
    for (const auto& q : j) out.push_back(joints_from_json(q));
    return out;
}

nlohmann::json shape_json(const std::variant<Box, Capsule>& shape) {
    if (const auto* b = std::get_if<Box>(&shape)) {
        return {{"type", "box"}, {"min", vec_json(b->min)}, {"max", vec_json(b->max)}};
    }
    const auto& c = std::get<Capsule>(shape);
    return {{"type", "capsule"}, {"a", vec_json(c.a)}, {"b", vec_json(c.b)}, {"radius", c.radius}};
}

std::string wrap_content(const nlohmann::json& content, const char* kind) {
    nlohmann::json file;
    file["format"] = kind;
    file["format_version"] = kFormatVersion;
    file["content"] = content;
    file["content_digest"] = to_hex(sha256(content.dump()));
    return file.dump(1) + "\n";
}

}  // namespace

TrajectorySpec parse_trajectory_spec(const std::string& text) {
    const auto colon = text.find(':');
    if (colon == std::string::npos) {
        throw Error(ErrorCode::ConfigError, "trajectory must look like circular:N or spherical:NSIDE, got '" + text + "'");
    }
    const std::string kind = text.substr(0, colon);
    int count = 0;
    try {
        std::size_t used = 0;
        count = std::stoi(text.substr(colon + 1), &used);
        if (used != text.size() - colon - 1) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
        throw Error(ErrorCode::ConfigError, "invalid trajectory count in '" + text + "'");
    }
    if (count < 1) throw Error(ErrorCode::ConfigError, "trajectory count must be >= 1");
    if (kind == "circular") return TrajectorySpec::circular(count);
    if (kind == "spherical") return TrajectorySpec::spherical(count);
    throw Error(ErrorCode::ConfigError, "unknown trajectory kind '" + kind + "'");
}

std::string to_string(const TrajectorySpec& spec) {
    return (spec.kind == TrajectoryKind::Circular ? "circular:" : "spherical:") + std::to_string(spec.count);
}

std::string to_string(WaypointStatus s) {
    switch (s) {
        case WaypointStatus::Pending: return "pending";
        case WaypointStatus::Planned: return "planned";
        case WaypointStatus::Unreachable: return "unreachable";
        case WaypointStatus::Executed: return "executed";
        case WaypointStatus::ReflexSkipped: return "reflex-skipped";
    }
    return "pending";
}

WaypointStatus waypoint_status_from_string(const std::string& s) {
    for (auto st : {WaypointStatus::Pending, WaypointStatus::Planned, WaypointStatus::Unreachable,
                    WaypointStatus::Executed, WaypointStatus::ReflexSkipped}) {
        if (to_string(st) == s) return st;
    }
    throw Error(ErrorCode::CorruptFile, "unknown way-point status '" + s + "'");
}

double Waypoint::lon() const { return std::atan2(view_direction.y(), view_direction.x()); }
double Waypoint::lat() const { return std::asin(std::clamp(view_direction.z(), -1.0, 1.0)); }

RigidPose spherical_rotation(const Vec3& direction) {
    const RigidPose z_to_beam = RigidPose::axis_angle(Vec3::UnitY(), 0.5 * std::numbers::pi);
    return compose(z_to_beam, rotation_for_direction(direction).inverse());
}

std::vector<Waypoint> make_waypoints(const TrajectorySpec& spec, const WorldConfig& world) {
    std::vector<Waypoint> out;
    const Vec3 beam = world.beam_direction();
    auto push = [&](std::int64_t grid_index, const RigidPose& pose) {
        Waypoint w;
        w.index = static_cast<int>(out.size());
        w.grid_index = grid_index;
        w.sample_pose = pose;
        w.view_direction = pose.inverse().rotate(beam);
        out.push_back(std::move(w));
    };
    if (spec.kind == TrajectoryKind::Circular) {
        if (spec.count < 1) throw Error(ErrorCode::InvalidArgument, "circular trajectory needs n >= 1");
        out.reserve(static_cast<std::size_t>(spec.count));
        for (int k = 0; k < spec.count; ++k) {
            const double angle = 2.0 * std::numbers::pi * k / spec.count;
            push(k, k == 0 ? RigidPose::identity() : RigidPose::axis_angle(Vec3::UnitZ(), angle));
        }
        return out;
    }
    const auto points = sample_sphere(spec.count);
    out.reserve(points.size());
    std::size_t begin = 0;
    while (begin < points.size()) {
        std::size_t end = begin;
        while (end < points.size() && points[end].ring == points[begin].ring) ++end;
        const bool reverse = points[begin].ring % 2 == 0;
        for (std::size_t m = 0; m < end - begin; ++m) {
            const auto& p = points[reverse ? end - 1 - m : begin + m];
            push(p.index, spherical_rotation(p.direction));
        }
        begin = end;
    }
    return out;
}

int interpolation_steps(const JointConfig& a, const JointConfig& b, double step_rad) {
    if (!(step_rad > 0.0)) throw Error(ErrorCode::InvalidArgument, "interpolation step must be positive");
    const double largest = (b.angles - a.angles).cwiseAbs().maxCoeff();
    return std::max(1, static_cast<int>(std::ceil(largest / step_rad - 1e-12)));
}

bool segment_valid(const ArmModel& arm, const Environment& env, const JointConfig& a, const JointConfig& b,
                   double step_rad) {
    if (!check_config(arm, a, env.obstacles, env.allowances).valid()) return false;
    if (!check_config(arm, b, env.obstacles, env.allowances).valid()) return false;
    return segment_interior_valid(arm, env, a, b, step_rad);
}

std::vector<JointConfig> Roadmap::nodes() const {
    std::vector<JointConfig> out;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (valid[i]) out.push_back(samples[i]);
    }
    return out;
}

Roadmap build_roadmap(const ArmModel& arm, const Environment& env, const JointConfig& homing,
                      const RoadmapParams& params) {
    if (params.samples < 0 || params.k_nearest < 1) {
        throw Error(ErrorCode::InvalidArgument, "roadmap needs samples >= 0 and k >= 1");
    }
    Roadmap rm;
    rm.params = params;
    rm.homing = homing;
    std::mt19937_64 rng(params.seed);
    rm.samples.reserve(static_cast<std::size_t>(params.samples) + 1);
    rm.samples.push_back(homing);
    for (int i = 0; i < params.samples; ++i) rm.samples.push_back(random_config(arm, rng));

    std::vector<char> valid(rm.samples.size(), 0);
    parallel_for(rm.samples.size(), [&](std::size_t i) {
        valid[i] = check_config(arm, rm.samples[i], env.obstacles, env.allowances).valid() ? 1 : 0;
    });
    rm.valid.assign(valid.begin(), valid.end());

    const auto candidates = unique_edges(k_nearest(rm.samples, 0, rm.samples, params.k_nearest), 0);
    std::vector<char> ok(candidates.size(), 0);
    parallel_for(candidates.size(), [&](std::size_t e) {
        const auto [a, b] = candidates[e];
        if (!valid[static_cast<std::size_t>(a)] || !valid[static_cast<std::size_t>(b)]) return;
        ok[e] = segment_interior_valid(arm, env, rm.samples[static_cast<std::size_t>(a)],
                                       rm.samples[static_cast<std::size_t>(b)], params.step_rad);
    });
    for (std::size_t e = 0; e < candidates.size(); ++e) {
        if (ok[e]) rm.edges.push_back(candidates[e]);
    }
    return rm;
}

std::size_t Trajectory::planned_count() const {
    return static_cast<std::size_t>(std::count_if(waypoints.begin(), waypoints.end(), [](const Waypoint& w) {
        return w.status == WaypointStatus::Planned;
    }));
}

std::vector<int> plan_chain(int n, const std::function<bool(int, int)>& connect) {
    std::vector<int> kept;
    int last = -1;
    for (int i = 0; i < n; ++i) {
        if (connect(last, i)) {
            kept.push_back(i);
            last = i;
        }
    }
    return kept;
}

std::vector<std::vector<JointConfig>> goal_candidates(const ArmModel& arm, const std::vector<Waypoint>& waypoints,
                                                      const JointConfig& homing, const RoadmapParams& params,
                                                      const IkOptions& ik) {
    const std::size_t n = waypoints.size();
    std::vector<RigidPose> targets(n);
    for (std::size_t i = 0; i < n; ++i) targets[i] = arm.tool_target_for_sample(waypoints[i].sample_pose);
    auto add = [](std::vector<JointConfig>& list, const JointConfig& q) {
        const bool duplicate = std::any_of(list.begin(), list.end(), [&](const JointConfig& p) {
            return (p.angles - q.angles).cwiseAbs().maxCoeff() < 1e-3;
        });
        if (!duplicate) list.push_back(q);
    };

    std::vector<std::vector<JointConfig>> first(n);
    parallel_for(n, [&](std::size_t i) {
        std::seed_seq seq{static_cast<std::uint32_t>(params.seed), static_cast<std::uint32_t>(params.seed >> 32),
                          static_cast<std::uint32_t>(i), 0x51edu};
        std::mt19937_64 rng(seq);
        for (int s = 0; s < params.ik_seeds; ++s) {
            const JointConfig seed = s == 0 ? arm.clamp(homing) : random_config(arm, rng);
            if (auto r = solve_ik_single(arm, targets[i], seed, ik)) add(first[i], r->q);
        }
    });

    // Continuation: neighbouring way-points are close in pose, so their
    // solutions seed solution families the random seeds missed.
    std::vector<std::vector<JointConfig>> out = first;
    parallel_for(n, [&](std::size_t i) {
        for (std::size_t j : {i - 1, i + 1}) {
            if (j >= n) continue;  // wraps for i == 0
            for (const auto& seed : first[j]) {
                if (auto r = solve_ik_single(arm, targets[i], seed, ik)) add(out[i], r->q);
            }
        }
    });
    return out;
}

Trajectory plan_trajectory(const ArmModel& arm, const Environment& env, const std::vector<Waypoint>& waypoints,
                           const Roadmap& roadmap, const TrajectorySpec& spec, const PlanOptions& options) {
    const auto& rp = roadmap.params;
    const auto cands = goal_candidates(arm, waypoints, roadmap.homing, rp, options.ik);

    // Node layout: roadmap samples first (0 is homing), then goal candidates.
    std::vector<JointConfig> nodes = roadmap.samples;
    std::vector<int> owner(nodes.size(), -1);
    const int first_goal = static_cast<int>(nodes.size());
    for (std::size_t w = 0; w < cands.size(); ++w) {
        for (const auto& q : cands[w]) {
            nodes.push_back(q);
            owner.push_back(static_cast<int>(w));
        }
    }
    const std::vector<JointConfig> goals(nodes.begin() + first_goal, nodes.end());

    std::vector<char> valid(nodes.size(), 0);
    for (std::size_t i = 0; i < roadmap.samples.size(); ++i) valid[i] = roadmap.valid[i] ? 1 : 0;
    parallel_for(goals.size(), [&](std::size_t g) {
        valid[static_cast<std::size_t>(first_goal) + g] =
            check_config(arm, goals[g], env.obstacles, env.allowances).valid() ? 1 : 0;
    });

    // Each goal links to its nearest roadmap samples and to the nearest goals of
    // other way-points; sibling goals would otherwise crowd the neighbour list.
    auto goal_nn = k_nearest(goals, first_goal, nodes, rp.k_nearest, [&](int, int j) { return j >= first_goal; });
    const auto sibling_nn = k_nearest(goals, first_goal, nodes, rp.k_nearest, [&](int q, int j) {
        return j < first_goal || owner[static_cast<std::size_t>(j)] == owner[static_cast<std::size_t>(q)];
    });
    for (std::size_t g = 0; g < goals.size(); ++g) {
        goal_nn[g].insert(goal_nn[g].end(), sibling_nn[g].begin(), sibling_nn[g].end());
    }
    const auto goal_edges = unique_edges(goal_nn, first_goal);
    std::vector<char> ok(goal_edges.size(), 0);
    parallel_for(goal_edges.size(), [&](std::size_t e) {
        const auto [a, b] = goal_edges[e];
        if (!valid[static_cast<std::size_t>(a)] || !valid[static_cast<std::size_t>(b)]) return;
        ok[e] = segment_interior_valid(arm, env, nodes[static_cast<std::size_t>(a)], nodes[static_cast<std::size_t>(b)],
                                       rp.step_rad);
    });

    Graph graph(nodes.size());
    for (auto [a, b] : roadmap.edges) {
        graph.add(a, b, joint_distance(nodes[static_cast<std::size_t>(a)], nodes[static_cast<std::size_t>(b)]));
    }
    for (std::size_t e = 0; e < goal_edges.size(); ++e) {
        if (!ok[e]) continue;
        const auto [a, b] = goal_edges[e];
        graph.add(a, b, joint_distance(nodes[static_cast<std::size_t>(a)], nodes[static_cast<std::size_t>(b)]));
    }

    std::vector<int> home_parent;
    graph.shortest(0, nullptr, home_parent);
    std::vector<char> reachable(waypoints.size(), 0);
    if (valid[0]) {
        for (std::size_t v = static_cast<std::size_t>(first_goal); v < nodes.size(); ++v) {
            if (valid[v] && home_parent[v] >= 0) reachable[static_cast<std::size_t>(owner[v])] = 1;
        }
    }

    // Every kept way-point sits in the homing component, so a path to the next
    // one exists exactly when that one has a candidate there.
    const auto visit = plan_chain(static_cast<int>(waypoints.size()), [&](int, int to) {
        return reachable[static_cast<std::size_t>(to)] && !options.forced_unreachable.count(to);
    });

    Trajectory t;
    t.spec = spec;
    t.homing_config = roadmap.homing;
    t.waypoints = waypoints;
    for (auto& w : t.waypoints) {
        w.status = WaypointStatus::Unreachable;
        w.config.reset();
        w.path.clear();
        w.home_path.clear();
    }
    int current = 0;
    std::vector<int> parent;
    for (int wi : visit) {
        std::vector<char> stop(nodes.size(), 0);
        for (std::size_t v = static_cast<std::size_t>(first_goal); v < nodes.size(); ++v) {
            if (owner[v] == wi && valid[v]) stop[v] = 1;
        }
        const int goal = graph.shortest(current, &stop, parent);
        if (goal < 0) throw Error(ErrorCode::Unreachable, "goal left the homing component");
        auto& w = t.waypoints[static_cast<std::size_t>(wi)];
        w.status = WaypointStatus::Planned;
        w.config = nodes[static_cast<std::size_t>(goal)];
        for (int v : trace(parent, current, goal)) w.path.push_back(nodes[static_cast<std::size_t>(v)]);
        for (int v : trace(home_parent, 0, goal)) w.home_path.push_back(nodes[static_cast<std::size_t>(v)]);
        current = goal;
    }
    if (visit.empty()) throw Error(ErrorCode::EmptyPlan, "no way-point is reachable");

    t.params = plan_params_json(arm, options, roadmap.homing);
    t.environment_id = environment_id(env);
    t.trajectory_id = trajectory_id(spec, t.params, t.environment_id);
    return t;
}

nlohmann::json environment_json(const Environment& env) {
    nlohmann::json j;
    auto obstacles = nlohmann::json::array();
    for (const auto& o : env.obstacles) {
        obstacles.push_back({{"id", o.id}, {"kind", to_string(o.kind)}, {"shape", shape_json(o.shape)}});
    }
    auto allowances = nlohmann::json::array();
    for (const auto& [body, obstacle] : env.allowances) allowances.push_back({body, obstacle});
    j["obstacles"] = obstacles;
    j["allowances"] = allowances;
    return j;
}

nlohmann::json arm_json(const ArmModel& arm) {
    nlohmann::json j;
    auto joints = nlohmann::json::array();
    for (int i = 0; i < kJointCount; ++i) {
        joints.push_back({{"offset", pose_json(arm.joint_offsets[static_cast<std::size_t>(i)])},
                          {"axis", vec_json(arm.joint_axes[static_cast<std::size_t>(i)])},
                          {"min", arm.joint_limits[static_cast<std::size_t>(i)].min},
                          {"max", arm.joint_limits[static_cast<std::size_t>(i)].max}});
    }
    auto bodies = nlohmann::json::array();
    for (const auto& b : arm.bodies) {
        auto caps = nlohmann::json::array();
        for (const auto& c : b.capsules) caps.push_back(shape_json(c));
        bodies.push_back({{"name", b.name}, {"frame", frame_name(b.frame)}, {"rank", b.rank}, {"capsules", caps}});
    }
    j["joints"] = joints;
    j["bodies"] = bodies;
    j["flange"] = pose_json(arm.flange_offset);
    j["mount"] = pose_json(arm.mount_pose);
    j["tool"] = {{"kind", to_string(arm.tool.kind)}, {"length", arm.tool.length_mm}, {"offset", pose_json(arm.tool.offset)}};
    j["holder_offset"] = pose_json(arm.holder_offset);
    j["sample_offset"] = pose_json(arm.sample_offset);
    j["inflation"] = arm.inflation_mm;
    return j;
}

namespace {

template <class F>
auto config_field(const std::string& what, F&& f) {
    try {
        return f();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ConfigError, what + ": " + e.what());
    } catch (const Error& e) {
        throw Error(ErrorCode::ConfigError, what + ": " + e.what());
    }
}

std::variant<Box, Capsule> shape_from_json(const nlohmann::json& j) {
    const std::string type = j.at("type").get<std::string>();
    if (type == "box") return Box{vec_from_json(j.at("min")), vec_from_json(j.at("max"))};
    if (type == "capsule") {
        return Capsule{vec_from_json(j.at("a")), vec_from_json(j.at("b")), j.at("radius").get<double>()};
    }
    throw Error(ErrorCode::ConfigError, "unknown shape type '" + type + "'");
}

}  // namespace

Environment environment_from_json(const nlohmann::json& j) {
    return config_field("environment", [&] {
        Environment env;
        for (const auto& o : j.at("obstacles")) {
            Obstacle ob{o.at("id").get<std::string>(), obstacle_kind_from_string(o.at("kind").get<std::string>()),
                        shape_from_json(o.at("shape"))};
            if (const auto* b = std::get_if<Box>(&ob.shape); b && !(b->min.array() <= b->max.array()).all()) {
                throw Error(ErrorCode::ConfigError, "box " + ob.id + " has min > max");
            }
            env.obstacles.push_back(std::move(ob));
        }
        if (j.contains("allowances")) {
            for (const auto& a : j.at("allowances")) {
                if (!a.is_array() || a.size() != 2) throw Error(ErrorCode::ConfigError, "allowance must be [body, obstacle]");
                env.allowances.insert({a[0].get<std::string>(), a[1].get<std::string>()});
            }
        }
        return env;
    });
}

ArmModel arm_from_json(const nlohmann::json& j) {
    return config_field("arm", [&] {
        ArmModel arm;
        const auto& joints = j.at("joints");
        if (!joints.is_array() || joints.size() != kJointCount) {
            throw Error(ErrorCode::ConfigError, "arm needs exactly 7 joints");
        }
        for (std::size_t i = 0; i < kJointCount; ++i) {
            const auto& jj = joints[i];
            arm.joint_offsets[i] = pose_from_json(jj.at("offset"));
            arm.joint_axes[i] = vec_from_json(jj.at("axis"));
            arm.joint_limits[i] = {jj.at("min").get<double>(), jj.at("max").get<double>()};
        }
        for (const auto& b : j.at("bodies")) {
            LinkBody body{b.at("name").get<std::string>(), frame_from_name(b.at("frame").get<std::string>()),
                          b.at("rank").get<int>(), {}};
            for (const auto& c : b.at("capsules")) {
                const auto shape = shape_from_json(c);
                if (!std::holds_alternative<Capsule>(shape)) throw Error(ErrorCode::ConfigError, "bodies hold capsules only");
                body.capsules.push_back(std::get<Capsule>(shape));
            }
            arm.bodies.push_back(std::move(body));
        }
        arm.flange_offset = pose_from_json(j.at("flange"));
        arm.mount_pose = pose_from_json(j.at("mount"));
        const auto& tool = j.at("tool");
        const ToolKind kind = tool_kind_from_string(tool.at("kind").get<std::string>());
        const double length = tool.at("length").get<double>();
        arm.tool = kind == ToolKind::Straight ? ToolTransform::straight(length) : ToolTransform::curved(length);
        if (tool.contains("offset")) arm.tool.offset = pose_from_json(tool.at("offset"));
        arm.holder_offset = pose_from_json(j.at("holder_offset"));
        arm.sample_offset = pose_from_json(j.at("sample_offset"));
        if (j.contains("inflation")) arm.inflation_mm = j.at("inflation").get<double>();
        arm.validate();
        return arm;
    });
}

Digest environment_id(const Environment& env) { return canonical_digest(environment_json(env)); }

Digest trajectory_id(const TrajectorySpec& spec, const nlohmann::json& params, const Digest& env_id) {
    return canonical_digest({{"trajectory", spec_json(spec)}, {"params", params}, {"environment_id", to_hex(env_id)}});
}

nlohmann::json plan_params_json(const ArmModel& arm, const PlanOptions& options, const JointConfig& homing) {
    const auto& r = options.roadmap;
    const auto& ik = options.ik;
    return {{"arm", arm_json(arm)},
            {"homing", joints_json(homing)},
            {"roadmap",
             {{"samples", r.samples}, {"k", r.k_nearest}, {"step", r.step_rad}, {"ik_seeds", r.ik_seeds},
              {"seed", r.seed}}},
            {"ik",
             {{"damping", ik.damping}, {"iterations", ik.max_iterations}, {"position_tol", ik.position_tolerance_mm},
              {"rotation_tol", ik.rotation_tolerance_rad}, {"rotation_weight", ik.rotation_weight_mm},
              {"max_step", ik.max_step_rad}}},
            {"forced_unreachable", options.forced_unreachable}};
}

nlohmann::json trajectory_to_json(const Trajectory& t) {
    nlohmann::json j;
    j["trajectory"] = spec_json(t.spec);
    j["params"] = t.params;
    j["trajectory_id"] = to_hex(t.trajectory_id);
    j["environment_id"] = to_hex(t.environment_id);
    j["homing"] = joints_json(t.homing_config);
    auto ws = nlohmann::json::array();
    for (const auto& w : t.waypoints) {
        nlohmann::json wj{{"index", w.index},
                          {"grid_index", w.grid_index},
                          {"pose", pose_json(w.sample_pose)},
                          {"view", vec_json(w.view_direction)},
                          {"status", to_string(w.status)}};
        if (w.config) {
            wj["config"] = joints_json(*w.config);
            wj["path"] = path_json(w.path);
            wj["home_path"] = path_json(w.home_path);
        }
        ws.push_back(std::move(wj));
    }
    j["waypoints"] = std::move(ws);
    return j;
}

Trajectory trajectory_from_json(const nlohmann::json& j) {
    try {
        Trajectory t;
        t.spec = spec_from_json(j.at("trajectory"));
        t.params = j.at("params");
        t.trajectory_id = digest_from_hex(j.at("trajectory_id").get<std::string>());
        t.environment_id = digest_from_hex(j.at("environment_id").get<std::string>());
        t.homing_config = joints_from_json(j.at("homing"));
        for (const auto& wj : j.at("waypoints")) {
            Waypoint w;
            w.index = wj.at("index").get<int>();
            w.grid_index = wj.at("grid_index").get<std::int64_t>();
            w.sample_pose = pose_from_json(wj.at("pose"));
            w.view_direction = vec_from_json(wj.at("view"));
            w.status = waypoint_status_from_string(wj.at("status").get<std::string>());
            if (wj.contains("config")) {
                w.config = joints_from_json(wj.at("config"));
                w.path = path_from_json(wj.at("path"));
                w.home_path = path_from_json(wj.at("home_path"));
            }
            t.waypoints.push_back(std::move(w));
        }
        return t;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::CorruptFile, std::string("malformed trajectory: ") + e.what());
    } catch (const Error& e) {
        throw Error(ErrorCode::CorruptFile, std::string("malformed trajectory: ") + e.what());
    }
}

std::filesystem::path cache_path(const std::filesystem::path& dir, const Digest& id) {
    return dir / (to_hex(id) + ".traj");
}

std::filesystem::path cache_store(const Trajectory& t, const std::filesystem::path& dir) {
    const auto path = cache_path(dir, t.trajectory_id);
    write_text_file(path, wrap_content(trajectory_to_json(t), "robct-trajectory"));
    return path;
}

std::optional<Trajectory> cache_load(const TrajectorySpec& spec, const nlohmann::json& params, const Environment& env,
                                     const std::filesystem::path& dir) {
    const Digest env_id = environment_id(env);
    const Digest traj_id = trajectory_id(spec, params, env_id);
    const auto path = cache_path(dir, traj_id);
    if (!std::filesystem::exists(path)) return std::nullopt;

    const auto file = parse_json(read_text_file(path), ErrorCode::CorruptFile);
    if (!file.is_object() || !file.contains("content") || !file.contains("content_digest") ||
        file.value("format_version", 0) != kFormatVersion) {
        throw Error(ErrorCode::CorruptFile, path.string() + " is not a trajectory file");
    }
    const auto& content = file["content"];
    if (!file["content_digest"].is_string() || to_hex(sha256(content.dump())) != file["content_digest"].get<std::string>()) {
        throw Error(ErrorCode::CorruptFile, path.string() + " failed its content digest");
    }
    Trajectory t = trajectory_from_json(content);
    if (t.environment_id != env_id) {
        throw Error(ErrorCode::DigestMismatch, "cached trajectory was planned for a different environment");
    }
    if (t.trajectory_id != traj_id || trajectory_id(t.spec, t.params, t.environment_id) != traj_id) {
        throw Error(ErrorCode::DigestMismatch, "cached trajectory does not match the requested parameters");
    }
    return t;
}

std::size_t ExecutionLog::executed_count() const {
    return static_cast<std::size_t>(std::count(outcome.begin(), outcome.end(), WaypointStatus::Executed));
}

ExecutionLog execute(const Trajectory& t, const ArmModel& arm, const Environment& env, const ReflexParams& reflex,
                     std::uint64_t seed) {
    if (environment_id(env) != t.environment_id) {
        throw Error(ErrorCode::DigestMismatch, "trajectory was planned for a different environment");
    }
    if (trajectory_id(t.spec, t.params, t.environment_id) != t.trajectory_id) {
        throw Error(ErrorCode::DigestMismatch, "trajectory id does not match its parameters");
    }
    const JointConfig& homing = t.homing_config;
    if (!check_config(arm, homing, env.obstacles, env.allowances).valid()) {
        throw Error(ErrorCode::HomingUnreachable, "homing configuration collides");
    }

    ExecutionLog log;
    log.trajectory_id = t.trajectory_id;
    log.outcome.reserve(t.waypoints.size());
    for (const auto& w : t.waypoints) log.outcome.push_back(w.status);
    log.image_usable.assign(t.waypoints.size(), false);

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    JointConfig current = homing;
    int previous = -1;  // last executed way-point, -1 while at homing

    auto recover = [&](const std::vector<JointConfig>& walked) {
        // Retrace the interrupted segment, then the previous way-point's homing path.
        std::vector<JointConfig> route(walked.rbegin(), walked.rend());
        if (previous >= 0) {
            const auto& hp = t.waypoints[static_cast<std::size_t>(previous)].home_path;
            for (auto it = hp.rbegin(); it != hp.rend(); ++it) {
                if (it != hp.rbegin()) route.push_back(*it);
            }
            route.push_back(homing);
        }
        for (std::size_t i = 1; i < route.size(); ++i) {
            if (!segment_valid(arm, env, route[i - 1], route[i], reflex.step_rad)) {
                throw Error(ErrorCode::HomingUnreachable, "recovery transit to homing collides");
            }
        }
        current = homing;
        previous = -1;
    };

    for (const auto& w : t.waypoints) {
        if (w.status != WaypointStatus::Planned || !w.config) continue;
        const auto& path = previous < 0 ? w.home_path : w.path;
        std::vector<JointConfig> walked{current};
        bool triggered = false;
        double trigger_clearance = 0.0;
        JointConfig from = current;
        for (const auto& to : path) {
            const int n = interpolation_steps(from, to, reflex.step_rad);
            for (int s = 1; s <= n && !triggered; ++s) {
                JointConfig q(from.angles + (static_cast<double>(s) / n) * (to.angles - from.angles));
                JointConfig noisy = q;
                for (int k = 0; k < kJointCount; ++k) noisy[k] += reflex.sigma_rad * noise(rng);
                const double c = min_clearance(arm, noisy, env.obstacles, env.allowances);
                if (c < reflex.threshold_mm) {
                    triggered = true;
                    trigger_clearance = c;
                } else if (s == n) {
                    walked.push_back(to);
                }
            }
            if (triggered) break;
            from = to;
        }
        const auto wi = static_cast<std::size_t>(w.index);
        if (triggered) {
            log.outcome[wi] = WaypointStatus::ReflexSkipped;
            log.reflexes.push_back({w.index, trigger_clearance});
            log.recoveries.push_back(w.index);
            recover(walked);
        } else {
            log.outcome[wi] = WaypointStatus::Executed;
            log.image_usable[wi] = true;
            current = *w.config;
            previous = w.index;
        }
    }
    return log;
}

nlohmann::json execution_log_to_json(const ExecutionLog& log) {
    auto outcome = nlohmann::json::array();
    for (std::size_t i = 0; i < log.outcome.size(); ++i) {
        outcome.push_back({{"status", to_string(log.outcome[i])}, {"image_usable", static_cast<bool>(log.image_usable[i])}});
    }
    auto reflexes = nlohmann::json::array();
    for (const auto& r : log.reflexes) reflexes.push_back({{"waypoint", r.waypoint}, {"clearance_mm", r.clearance_mm}});
    return {{"trajectory_id", to_hex(log.trajectory_id)},
            {"outcome", outcome},
            {"reflexes", reflexes},
            {"recoveries", log.recoveries}};
}

ExecutionLog execution_log_from_json(const nlohmann::json& j) {
    try {
        ExecutionLog log;
        log.trajectory_id = digest_from_hex(j.at("trajectory_id").get<std::string>());
        for (const auto& o : j.at("outcome")) {
            log.outcome.push_back(waypoint_status_from_string(o.at("status").get<std::string>()));
            log.image_usable.push_back(o.at("image_usable").get<bool>());
        }
        for (const auto& r : j.at("reflexes")) {
            log.reflexes.push_back({r.at("waypoint").get<int>(), r.at("clearance_mm").get<double>()});
        }
        log.recoveries = j.at("recoveries").get<std::vector<int>>();
        return log;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::CorruptFile, std::string("malformed execution log: ") + e.what());
    }
}

double Ratio::percent() const {
    return denominator > 0 ? 100.0 * static_cast<double>(numerator) / static_cast<double>(denominator) : 0.0;
}

std::string Ratio::str() const {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%lld / %lld (%.1f %%)", static_cast<long long>(numerator),
                  static_cast<long long>(denominator), percent());
    return buf;
}

ReachabilityReport reachability_report(const Trajectory& t, const ExecutionLog* log) {
    ReachabilityReport r;
    const auto planned = static_cast<std::int64_t>(t.planned_count());
    r.planned = {planned, static_cast<std::int64_t>(t.waypoints.size())};
    r.executed = {log ? static_cast<std::int64_t>(log->executed_count()) : 0, planned};
    r.calibrated = {0, r.executed.numerator};
    for (const auto& w : t.waypoints) {
        WaypointStatus s = w.status;
        if (log && static_cast<std::size_t>(w.index) < log->outcome.size()) s = log->outcome[static_cast<std::size_t>(w.index)];
        r.map.push_back({w.index, w.lon(), w.lat(), s});
    }
    return r;
}

std::string map_csv(const std::vector<MapEntry>& map) {
    std::string out = "waypoint,lon_deg,lat_deg,status\n";
    char buf[128];
    for (const auto& m : map) {
        std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,", m.waypoint, m.lon * 180.0 / std::numbers::pi,
                      m.lat * 180.0 / std::numbers::pi);
        out += buf;
        out += to_string(m.status);
        out += '\n';
    }
    return out;
}

std::vector<MapEntry> parse_map_csv(const std::string& text) {
    std::vector<MapEntry> out;
    std::istringstream in(text);
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (header) {
            header = false;
            if (line.rfind("waypoint,", 0) == 0) continue;
        }
        std::istringstream ls(line);
        std::string f[4];
        for (auto& s : f) {
            if (!std::getline(ls, s, ',')) throw Error(ErrorCode::CorruptFile, "map row needs 4 fields: " + line);
        }
        try {
            out.push_back({std::stoi(f[0]), std::stod(f[1]) * std::numbers::pi / 180.0,
                           std::stod(f[2]) * std::numbers::pi / 180.0, waypoint_status_from_string(f[3])});
        } catch (const std::invalid_argument&) {
            throw Error(ErrorCode::CorruptFile, "bad map row: " + line);
        } catch (const std::out_of_range&) {
            throw Error(ErrorCode::CorruptFile, "bad map row: " + line);
        }
    }
    return out;
}

}  // namespace robct
