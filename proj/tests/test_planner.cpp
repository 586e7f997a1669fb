#include "robct/error.hpp"
#include "robct/healpix.hpp"
#include "robct/planner.hpp"
#include "robct/serialize.hpp"
#include "robct/world.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

using namespace robct;
namespace fs = std::filesystem;

namespace {

constexpr double pi = std::numbers::pi;

struct Setup {
    ArmModel arm;
    Environment env;
    Roadmap roadmap;
    PlanOptions options;
};

Setup make_setup(ToolKind tool, EnvironmentPreset preset, int samples = 2000) {
    Setup s{ArmModel::reference(tool), default_environment(WorldConfig{}, preset), {}, {}};
    s.options.tool = tool;
    s.options.roadmap.samples = samples;
    s.options.roadmap.seed = 7;
    s.roadmap = build_roadmap(s.arm, s.env, default_homing_config(), s.options.roadmap);
    return s;
}

Trajectory plan(const Setup& s, const TrajectorySpec& spec) {
    return plan_trajectory(s.arm, s.env, make_waypoints(spec), s.roadmap, spec, s.options);
}

fs::path scratch_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("robct_test_planner_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("way-point counts and spacing") {
    const auto c900 = make_waypoints(TrajectorySpec::circular(900));
    REQUIRE(c900.size() == 900);
    for (std::size_t k = 1; k < c900.size(); ++k) {
        CHECK(std::abs(c900[k].sample_pose.rotation_distance(c900[k - 1].sample_pose) - 0.4 * pi / 180.0) < 1e-12);
        CHECK(c900[k].index == static_cast<int>(k));
    }
    const auto one = make_waypoints(TrajectorySpec::circular(1));
    REQUIRE(one.size() == 1);
    CHECK(one[0].sample_pose.rotation_distance(RigidPose::identity()) == 0.0);
    CHECK(one[0].sample_pose.translation().norm() == 0.0);

    CHECK(make_waypoints(TrajectorySpec::spherical(10)).size() == 1200);
    CHECK_THROWS_AS(make_waypoints(TrajectorySpec::circular(0)), Error);
    CHECK_THROWS_AS(make_waypoints(TrajectorySpec::spherical(0)), Error);
}

TEST_CASE("spherical way-points view along their pixel and snake through the rings") {
    const int n_side = 4;
    const auto ws = make_waypoints(TrajectorySpec::spherical(n_side));
    std::vector<int> seen(static_cast<std::size_t>(npix(n_side)), 0);
    for (const auto& w : ws) {
        const SpherePoint p = pixel_center(n_side, w.grid_index);
        CHECK((w.view_direction - p.direction).norm() < 1e-12);
        CHECK(w.sample_pose.translation().norm() == 0.0);
        ++seen[static_cast<std::size_t>(w.grid_index)];
    }
    CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
    // Inside a ring the pixel index moves by one, in alternating directions.
    int ring_order = 0;
    for (std::size_t k = 1; k < ws.size(); ++k) {
        const int r0 = pixel_center(n_side, ws[k - 1].grid_index).ring;
        const int r1 = pixel_center(n_side, ws[k].grid_index).ring;
        if (r0 != r1) continue;
        const auto step = ws[k].grid_index - ws[k - 1].grid_index;
        CHECK(std::abs(step) == 1);
        CHECK(step == (r0 % 2 == 0 ? -1 : 1));
        ring_order += 1;
    }
    CHECK(ring_order == static_cast<int>(ws.size()) - ring_count(n_side));
}

TEST_CASE("trajectory specs parse") {
    CHECK(to_string(parse_trajectory_spec("circular:900")) == "circular:900");
    CHECK(parse_trajectory_spec("spherical:10").kind == TrajectoryKind::Spherical);
    for (const char* bad : {"circular", "helix:3", "spherical:x", "circular:-1", "spherical:0"}) {
        CHECK_THROWS_AS(parse_trajectory_spec(bad), Error);
    }
}

TEST_CASE("skip rule keeps exactly the unmasked way-points") {
    std::mt19937_64 rng(21);
    std::bernoulli_distribution fail(0.3);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<bool> mask(50);
        for (auto&& m : mask) m = fail(rng);
        std::vector<int> from_seen;
        const auto kept = plan_chain(50, [&](int from, int to) {
            from_seen.push_back(from);
            return !mask[static_cast<std::size_t>(to)];
        });
        std::vector<int> expected;
        for (int i = 0; i < 50; ++i) {
            if (!mask[static_cast<std::size_t>(i)]) expected.push_back(i);
        }
        CHECK(kept == expected);
        // Every attempt starts from the last kept index.
        int last = -1;
        for (int i = 0; i < 50; ++i) {
            CHECK(from_seen[static_cast<std::size_t>(i)] == last);
            if (!mask[static_cast<std::size_t>(i)]) last = i;
        }
    }
}

TEST_CASE("planned way-points are valid, reach their pose and connect") {
    const Setup s = make_setup(ToolKind::Straight, EnvironmentPreset::TableOnlyNoBeam);
    const auto spec = TrajectorySpec::circular(24);
    const Trajectory t = plan(s, spec);
    REQUIRE(t.waypoints.size() == 24);
    CHECK(t.planned_count() == 24);
    const IkOptions ik;
    std::optional<JointConfig> previous;
    for (std::size_t k = 0; k < t.waypoints.size(); ++k) {
        const auto& w = t.waypoints[k];
        CHECK(w.index == static_cast<int>(k));
        REQUIRE(w.status == WaypointStatus::Planned);
        REQUIRE(w.config);
        CHECK(check_config(s.arm, *w.config, s.env.obstacles, s.env.allowances).valid());
        // IK tolerances hold at the tool frame; the sample sits further out.
        const RigidPose got = forward_kinematics(s.arm, *w.config).end_effector;
        const RigidPose want = s.arm.tool_target_for_sample(w.sample_pose);
        CHECK(got.translation_distance(want) < ik.position_tolerance_mm);
        CHECK(got.rotation_distance(want) < ik.rotation_tolerance_rad);
        REQUIRE(!w.path.empty());
        CHECK(w.path.back() == *w.config);
        JointConfig from = previous ? *previous : t.homing_config;
        for (const auto& q : w.path) {
            CHECK(segment_valid(s.arm, s.env, from, q, s.options.roadmap.step_rad));
            from = q;
        }
        JointConfig home = t.homing_config;
        for (const auto& q : w.home_path) {
            CHECK(segment_valid(s.arm, s.env, home, q, s.options.roadmap.step_rad));
            home = q;
        }
        CHECK(home == *w.config);
        previous = w.config;
    }

    SUBCASE("a failing way-point is skipped and the chain continues from its predecessor") {
        Setup forced = s;
        forced.options.forced_unreachable = {5};
        const Trajectory f = plan(forced, spec);
        CHECK(f.waypoints[5].status == WaypointStatus::Unreachable);
        CHECK_FALSE(f.waypoints[5].config);
        CHECK(f.planned_count() == 23);
        JointConfig from = *f.waypoints[4].config;
        for (const auto& q : f.waypoints[6].path) {
            CHECK(segment_valid(s.arm, s.env, from, q, s.options.roadmap.step_rad));
            from = q;
        }
        CHECK(from == *f.waypoints[6].config);
        CHECK(f.trajectory_id != t.trajectory_id);
    }
}

TEST_CASE("roadmap invariants") {
    const Setup s = make_setup(ToolKind::Curved, EnvironmentPreset::Full, 400);
    REQUIRE(s.roadmap.samples.size() == 401);
    CHECK(s.roadmap.samples[0] == default_homing_config());
    for (std::size_t i = 0; i < s.roadmap.samples.size(); ++i) {
        CHECK(static_cast<bool>(s.roadmap.valid[i]) ==
              check_config(s.arm, s.roadmap.samples[i], s.env.obstacles, s.env.allowances).valid());
    }
    for (auto [a, b] : s.roadmap.edges) {
        CHECK(a < b);
        CHECK(segment_valid(s.arm, s.env, s.roadmap.samples[static_cast<std::size_t>(a)],
                            s.roadmap.samples[static_cast<std::size_t>(b)], 0.02));
    }
    CHECK(interpolation_steps(JointConfig{}, JointConfig{0.1, 0, 0, -0.05, 0, 0, 0}, 0.02) == 5);
}

TEST_CASE("nothing reachable is EmptyPlan") {
    Setup s{ArmModel::reference(), {}, {}, {}};
    s.env.obstacles.push_back({"wall", ObstacleKind::Other, Box{Vec3(-3000, -3000, -3000), Vec3(3000, 3000, 3000)}});
    s.options.roadmap.samples = 50;
    s.roadmap = build_roadmap(s.arm, s.env, default_homing_config(), s.options.roadmap);
    try {
        plan(s, TrajectorySpec::circular(4));
        FAIL("expected EmptyPlan");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::EmptyPlan);
    }
}

TEST_CASE("removing obstacles never loses way-points; the curved tool reaches more") {
    std::size_t previous = 0;
    for (EnvironmentPreset p : {EnvironmentPreset::Full, EnvironmentPreset::TableOnly, EnvironmentPreset::TableOnlyNoBeam}) {
        const Trajectory t = plan(make_setup(ToolKind::Curved, p, 1000), TrajectorySpec::spherical(2));
        CHECK(t.planned_count() >= previous);
        previous = t.planned_count();
    }
    const auto spec = TrajectorySpec::spherical(4);
    const auto straight = plan(make_setup(ToolKind::Straight, EnvironmentPreset::Full), spec).planned_count();
    const auto curved = plan(make_setup(ToolKind::Curved, EnvironmentPreset::Full), spec).planned_count();
    CHECK(curved > straight);
    CHECK(straight > 192 / 2);
    CHECK(curved < 192);
}

TEST_CASE("environment and trajectory ids") {
    const WorldConfig world;
    const Environment a = default_environment(world);
    CHECK(environment_id(a) == environment_id(default_environment(world)));
    Environment moved = a;
    std::get<Box>(moved.obstacles[0].shape).min.x() += 1.0;
    std::get<Box>(moved.obstacles[0].shape).max.x() += 1.0;
    CHECK(environment_id(moved) != environment_id(a));
    Environment allowed = a;
    allowed.allowances.insert({"tool", "beam"});
    CHECK(environment_id(allowed) != environment_id(a));

    const auto spec = TrajectorySpec::spherical(4);
    const auto params = plan_params_json(ArmModel::reference(), PlanOptions{}, default_homing_config());
    CHECK(trajectory_id(spec, params, environment_id(a)) == trajectory_id(spec, params, environment_id(a)));
    CHECK(trajectory_id(spec, params, environment_id(a)) != trajectory_id(spec, params, environment_id(moved)));
    CHECK(trajectory_id(spec, params, environment_id(a)) !=
          trajectory_id(TrajectorySpec::spherical(5), params, environment_id(a)));
}

TEST_CASE("trajectory cache") {
    const Setup s = make_setup(ToolKind::Straight, EnvironmentPreset::TableOnly, 300);
    const auto spec = TrajectorySpec::circular(8);
    const Trajectory t = plan(s, spec);
    const fs::path dir = scratch_dir("cache");
    const fs::path file = cache_store(t, dir);
    CHECK(file == cache_path(dir, t.trajectory_id));
    CHECK(file.filename().string() == to_hex(t.trajectory_id) + ".traj");

    const auto loaded = cache_load(spec, t.params, s.env, dir);
    REQUIRE(loaded);
    CHECK(trajectory_to_json(*loaded).dump() == trajectory_to_json(t).dump());
    // Storing the loaded copy reproduces the file byte for byte.
    const std::string original = read_text_file(file);
    cache_store(*loaded, dir);
    CHECK(read_text_file(file) == original);

    Environment changed = s.env;
    std::get<Box>(changed.obstacles[0].shape).max.z() += 1.0;
    CHECK_FALSE(cache_load(spec, t.params, changed, dir));
    CHECK_FALSE(cache_load(TrajectorySpec::circular(9), t.params, s.env, dir));

    std::mt19937_64 rng(3);
    std::uniform_int_distribution<std::size_t> pos(0, original.size() - 1);
    for (int trial = 0; trial < 60; ++trial) {
        std::string bad = original;
        bad[pos(rng)] ^= 0x01;
        write_text_file(file, bad);
        try {
            cache_load(spec, t.params, s.env, dir);
            FAIL("tampered file loaded");
        } catch (const Error& e) {
            CHECK((e.code() == ErrorCode::CorruptFile || e.code() == ErrorCode::DigestMismatch));
        }
    }
    fs::remove_all(dir);
}

TEST_CASE("execution") {
    const Setup s = make_setup(ToolKind::Straight, EnvironmentPreset::Full, 600);
    const Trajectory t = plan(s, TrajectorySpec::circular(16));
    REQUIRE(t.planned_count() > 0);

    SUBCASE("no noise and a zero threshold execute every planned way-point") {
        const ExecutionLog log = execute(t, s.arm, s.env, {0.0, 0.0, 0.02}, 1);
        CHECK(log.executed_count() == t.planned_count());
        CHECK(log.reflexes.empty());
        for (std::size_t k = 0; k < t.waypoints.size(); ++k) {
            CHECK(log.image_usable[k] == (t.waypoints[k].status == WaypointStatus::Planned));
        }
    }
    SUBCASE("equal seeds give equal logs") {
        const ReflexParams r{0.01, 40.0, 0.02};
        const auto a = execution_log_to_json(execute(t, s.arm, s.env, r, 99)).dump();
        const auto b = execution_log_to_json(execute(t, s.arm, s.env, r, 99)).dump();
        CHECK(a == b);
    }
    SUBCASE("reflex-skipped images are never usable") {
        const ExecutionLog log = execute(t, s.arm, s.env, {0.0, 1e6, 0.02}, 5);
        CHECK(log.executed_count() == 0);
        CHECK(log.reflexes.size() == t.planned_count());
        for (std::size_t k = 0; k < t.waypoints.size(); ++k) {
            CHECK_FALSE(log.image_usable[k]);
            if (t.waypoints[k].status == WaypointStatus::Planned) CHECK(log.outcome[k] == WaypointStatus::ReflexSkipped);
        }
        const ExecutionLog back = execution_log_from_json(execution_log_to_json(log));
        CHECK(execution_log_to_json(back) == execution_log_to_json(log));
    }
    SUBCASE("a changed environment blocks execution") {
        try {
            execute(t, s.arm, s.env.without(ObstacleKind::Hutch), {}, 1);
            FAIL("expected DigestMismatch");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::DigestMismatch);
        }
    }
}

TEST_CASE("reachability report rows and map") {
    CHECK(Ratio{900, 900}.str() == "900 / 900 (100.0 %)");
    CHECK(Ratio{909, 1200}.str() == "909 / 1200 (75.8 %)");
    CHECK(Ratio{0, 0}.str() == "0 / 0 (0.0 %)");

    const Setup s = make_setup(ToolKind::Straight, EnvironmentPreset::Full, 600);
    const Trajectory t = plan(s, TrajectorySpec::spherical(2));
    const ReachabilityReport plain = reachability_report(t);
    CHECK(plain.planned.numerator == static_cast<std::int64_t>(t.planned_count()));
    CHECK(plain.planned.denominator == 48);
    CHECK(plain.map.size() == 48);

    const ExecutionLog none = execute(t, s.arm, s.env, {0.0, 1e6, 0.02}, 5);
    const ReachabilityReport r = reachability_report(t, &none);
    CHECK(r.executed.numerator == 0);
    CHECK(r.executed.denominator == plain.planned.numerator);
    CHECK(r.map.size() == 48);
    for (const auto& m : r.map) {
        const auto& w = t.waypoints[static_cast<std::size_t>(m.waypoint)];
        CHECK(m.lon == doctest::Approx(w.lon()));
        CHECK(m.lat == doctest::Approx(w.lat()));
        CHECK(m.status == (w.status == WaypointStatus::Planned ? WaypointStatus::ReflexSkipped : w.status));
    }
    const auto back = parse_map_csv(map_csv(r.map));
    REQUIRE(back.size() == r.map.size());
    CHECK(map_csv(back) == map_csv(r.map));
    CHECK_THROWS_AS(parse_map_csv("waypoint,lon,lat,status\n1,2,3,flying\n"), Error);
}
