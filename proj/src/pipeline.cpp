#include "robct/pipeline.hpp"

#include "robct/detector_sim.hpp"
#include "robct/error.hpp"
#include "robct/parallel.hpp"
#include "robct/serialize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <sstream>

namespace robct {

namespace {

using nlohmann::json;

constexpr std::uint64_t kStageExecute = 1;
constexpr std::uint64_t kStageHelix = 2;
constexpr std::uint64_t kStageMeasure = 3;

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

void write_json(const fs::path& path, const json& j) { write_text_file(path, j.dump(1) + "\n"); }

json read_json(const fs::path& path) { return parse_json(read_text_file(path), ErrorCode::CorruptFile); }

Trajectory load_trajectory(const ExperimentConfig& c, const fs::path& dir) {
    Trajectory t = trajectory_from_json(read_json(dir / run_files::trajectory));
    const ArmModel arm = experiment_arm(c);
    const Environment env = experiment_environment(c);
    const Digest expected = trajectory_id(c.trajectory, plan_params_json(arm, experiment_plan_options(c), t.homing_config),
                                          environment_id(env));
    if (t.trajectory_id != expected) {
        throw Error(ErrorCode::DigestMismatch, "trajectory in " + dir.string() + " was planned with a different configuration");
    }
    return t;
}

ExecutionLog load_execution(const Trajectory& t, const fs::path& dir) {
    ExecutionLog log = execution_log_from_json(read_json(dir / run_files::execution));
    if (log.trajectory_id != t.trajectory_id) {
        throw Error(ErrorCode::DigestMismatch, "execution log belongs to a different trajectory");
    }
    if (log.outcome.size() != t.waypoints.size() || log.image_usable.size() != t.waypoints.size()) {
        throw Error(ErrorCode::CorruptFile, "execution log does not cover the trajectory");
    }
    return log;
}

DetectorImage stack_image(const ProjectionStack& s, std::size_t view) {
    DetectorImage img;
    img.width = s.width;
    img.height = s.height;
    img.pitch_mm = s.pitch_u;
    const float* src = s.data.data() + view * s.pixels_per_view();
    img.values.assign(src, src + s.pixels_per_view());
    return img;
}

const char* slice_name(SliceAxis a) {
    switch (a) {
        case SliceAxis::Z: return "yx";
        case SliceAxis::X: return "yz";
        case SliceAxis::Y: return "zx";
    }
    return "";
}

}  // namespace

std::uint64_t stage_seed(std::uint64_t seed, std::uint64_t stage, std::uint64_t index) {
    // splitmix64 over the combined words.
    auto mix = [](std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    return mix(mix(mix(seed) ^ stage) ^ index);
}

ArmModel experiment_arm(const ExperimentConfig& c) {
    if (!c.arm) return ArmModel::reference(c.tool);
    ArmModel arm = *c.arm;
    if (arm.tool.kind != c.tool) {
        arm.set_tool(c.tool == ToolKind::Straight ? ToolTransform::straight(arm.tool.length_mm)
                                                  : ToolTransform::curved(arm.tool.length_mm));
    }
    return arm;
}

Environment experiment_environment(const ExperimentConfig& c) {
    return c.custom_environment ? *c.custom_environment : default_environment(c.world, c.environment);
}

PlanOptions experiment_plan_options(const ExperimentConfig& c) {
    PlanOptions o;
    o.tool = c.tool;
    o.roadmap = c.roadmap;
    o.roadmap.seed = c.require_seed();
    return o;
}

PlanOutcome run_plan(const ExperimentConfig& c, const fs::path& dir) {
    c.validate();
    const ArmModel arm = experiment_arm(c);
    const Environment env = experiment_environment(c);
    const PlanOptions options = experiment_plan_options(c);
    const JointConfig homing = default_homing_config();
    const json params = plan_params_json(arm, options, homing);

    PlanOutcome out;
    if (auto cached = cache_load(c.trajectory, params, env, dir / run_files::cache_dir)) {
        out.trajectory = std::move(*cached);
        out.from_cache = true;
    } else {
        const auto waypoints = make_waypoints(c.trajectory, c.world);
        const Roadmap roadmap = build_roadmap(arm, env, homing, options.roadmap);
        out.trajectory = plan_trajectory(arm, env, waypoints, roadmap, c.trajectory, options);
        cache_store(out.trajectory, dir / run_files::cache_dir);
    }
    save_config(dir / run_files::config, c);
    write_json(dir / run_files::trajectory, trajectory_to_json(out.trajectory));
    out.planned = reachability_report(out.trajectory).planned;
    return out;
}

ExecuteOutcome run_execute(const ExperimentConfig& c, const fs::path& dir) {
    c.validate();
    const Trajectory t = load_trajectory(c, dir);
    ReflexParams reflex = c.reflex;
    if (!c.reflexes) reflex.threshold_mm = -std::numeric_limits<double>::infinity();
    ExecuteOutcome out;
    out.log = execute(t, experiment_arm(c), experiment_environment(c), reflex, stage_seed(c.require_seed(), kStageExecute));
    out.reflexes = out.log.reflexes.size();
    const ReachabilityReport r = reachability_report(t, &out.log);
    out.executed = r.executed;
    write_json(dir / run_files::execution, execution_log_to_json(out.log));
    write_text_file(dir / run_files::map, map_csv(r.map));
    return out;
}

MeasureOutcome run_measure(const ExperimentConfig& c, const fs::path& dir) {
    c.validate();
    const Trajectory t = load_trajectory(c, dir);
    const ExecutionLog log = load_execution(t, dir);
    const ArmModel arm = experiment_arm(c);
    const std::uint64_t seed = c.require_seed();

    std::mt19937_64 helix_rng(stage_seed(seed, kStageHelix));
    const HelixModel as_built = HelixModel::make().jittered(c.measurement.helix_jitter_mm, helix_rng);
    const Phantom phantom = default_phantom(c.phantom_mu);
    const ProjectionGeometry calib_g = c.world.calibration_geometry();
    const ProjectionGeometry imaging_g = c.world.imaging_geometry();
    const ObservationNoise noise{c.measurement.sigma_px, c.measurement.false_circles, c.measurement.false_min_distance_px};

    std::vector<int> views;
    for (std::size_t i = 0; i < t.waypoints.size(); ++i) {
        if (log.outcome[i] == WaypointStatus::Executed && log.image_usable[i]) views.push_back(static_cast<int>(i));
    }
    if (views.empty()) throw Error(ErrorCode::EmptyPlan, "no executed way-point produced a usable image");

    struct ViewData {
        RigidPose actual;
        std::vector<CircleObservation> circles;
        DetectorImage image;
    };
    std::vector<ViewData> data(views.size());
    parallel_for(views.size(), [&](std::size_t k) {
        const int i = views[k];
        const RigidPose& commanded = t.waypoints[static_cast<std::size_t>(i)].sample_pose;
        std::mt19937_64 rng(stage_seed(seed, kStageMeasure, static_cast<std::uint64_t>(i)));
        auto& d = data[k];
        d.actual = place_sample(commanded, c.world.repeatability_mm, c.world.rotation_sigma_deg, rng);
        d.circles = observe_fiducials(calib_g, arm.holder_for_sample(d.actual), as_built, noise, rng);
        d.image = project_phantom(phantom, imaging_g, d.actual);
    });

    ProjectionStack stack;
    stack.width = imaging_g.width;
    stack.height = imaging_g.height;
    stack.pitch_u = imaging_g.pitch_u;
    stack.pitch_v = imaging_g.pitch_v;
    std::vector<ViewObservation> observations;
    json guesses = json::array(), truth = json::array();
    for (std::size_t k = 0; k < views.size(); ++k) {
        const int i = views[k];
        const RigidPose& commanded = t.waypoints[static_cast<std::size_t>(i)].sample_pose;
        stack.add_view(i, imaging_g.in_frame(commanded), data[k].image);
        for (const auto& circle : data[k].circles) observations.push_back({i, circle});
        guesses.push_back({{"view", i}, {"holder", pose_json(arm.holder_for_sample(commanded))}});
        truth.push_back({{"view", i}, {"sample", pose_json(data[k].actual)}});
    }
    write_stack(dir / run_files::stack, stack);
    write_text_file(dir / run_files::observations, observations_csv(observations));
    write_json(dir / run_files::guesses, guesses);
    write_json(dir / run_files::truth, truth);
    return {views.size(), observations.size()};
}

CalibrateOutcome run_calibrate(const ExperimentConfig& c, const fs::path& dir) {
    c.validate();
    const ArmModel arm = experiment_arm(c);
    const ProjectionStack stack = read_stack(dir / run_files::stack);
    const auto observations = parse_observations_csv(read_text_file(dir / run_files::observations));
    const json guesses = read_json(dir / run_files::guesses);
    if (!guesses.is_array() || guesses.size() != stack.view_count()) {
        throw Error(ErrorCode::CorruptFile, "guesses do not match the projection stack");
    }

    std::map<int, std::size_t> slot;
    std::vector<CalibrationView> views;
    for (std::size_t k = 0; k < stack.view_count(); ++k) {
        const auto& g = guesses[k];
        if (g.at("view").get<int>() != stack.view_ids[k]) throw Error(ErrorCode::CorruptFile, "guess order differs from the stack");
        slot[stack.view_ids[k]] = k;
        views.push_back({stack.view_ids[k], c.world.calibration_geometry(), {}, pose_from_json(g.at("holder"))});
    }
    for (const auto& o : observations) {
        const auto it = slot.find(o.view);
        if (it == slot.end()) throw Error(ErrorCode::CorruptFile, "observation for unknown view " + std::to_string(o.view));
        views[it->second].observed.push_back(o.circle);
    }

    CalibrateOutcome out;
    out.stack = calibrate_stack(views, HelixModel::make(), c.calibration);
    out.calibrated = out.stack.table;

    const ProjectionGeometry imaging_g = c.world.imaging_geometry();
    ProjectionStack calibrated;
    calibrated.width = stack.width;
    calibrated.height = stack.height;
    calibrated.pitch_u = stack.pitch_u;
    calibrated.pitch_v = stack.pitch_v;
    json refined = json::array();
    for (const auto& v : out.stack.views) {
        if (!v.success) continue;
        const RigidPose sample = compose(v.result->refined_pose, arm.sample_offset);
        const std::size_t k = slot.at(v.view);
        calibrated.add_view(v.view, imaging_g.in_frame(sample), stack_image(stack, k));
        refined.push_back({{"view", v.view}, {"holder", pose_json(v.result->refined_pose)}, {"sample", pose_json(sample)}});
    }
    write_text_file(dir / run_files::calibration, calibration_report_csv(out.stack));
    write_json(dir / run_files::refined, refined);
    write_stack(dir / run_files::calibrated_stack, calibrated);
    return out;
}

std::vector<ProfileGradient> read_gradients(const fs::path& path) {
    std::istringstream in(read_text_file(path));
    std::string line;
    std::vector<ProfileGradient> out;
    std::getline(in, line);
    if (line.rfind("profile,", 0) != 0) throw Error(ErrorCode::CorruptFile, path.string() + " is not a gradient report");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto a = line.find(',');
        const auto b = line.find(',', a + 1);
        if (a == std::string::npos || b == std::string::npos) throw Error(ErrorCode::CorruptFile, "bad gradient row: " + line);
        try {
            out.push_back({line.substr(0, a), std::stod(line.substr(b + 1))});
        } catch (const std::exception&) {
            throw Error(ErrorCode::CorruptFile, "bad gradient row: " + line);
        }
    }
    return out;
}

ReconstructOutcome run_reconstruct(const ExperimentConfig& c, const fs::path& dir, const std::optional<fs::path>& compare_dir) {
    c.validate();
    ReconstructOutcome out;
    out.calibrated = fs::exists(dir / run_files::calibrated_stack);
    const ProjectionStack stack = read_stack(dir / (out.calibrated ? run_files::calibrated_stack : run_files::stack));
    const ReconStack rs = ReconStack::from_projection_stack(stack);
    out.views = rs.geometries.size();
    const Volume grid = Volume::centered(c.volume_n, c.volume_spacing_mm);

    std::optional<ReconBreakdown> breakdown;
    try {
        out.result = reconstruct_cg(rs, grid, c.solver);
    } catch (const ReconBreakdown& e) {
        breakdown = e;
        out.result = e.partial();
    }
    const Volume& vol = out.result.volume;
    write_volume(dir / run_files::volume, vol);
    for (SliceAxis a : {SliceAxis::Z, SliceAxis::X, SliceAxis::Y}) {
        write_text_file(dir / (std::string("slice_") + slice_name(a) + ".pgm"), slice_pgm(vol, a, vol.n / 2));
    }

    std::string cost = "iteration,cost\n";
    for (std::size_t k = 0; k < out.result.cost_history.size(); ++k) {
        cost += std::to_string(k + 1) + "," + num(out.result.cost_history[k]) + "\n";
    }
    write_text_file(dir / run_files::cost, cost);

    const auto lines = default_profile_lines(vol.n, vol.spacing);
    std::vector<LineProfile> profiles;
    std::string grad = "profile,step_mm,gradient_magnitude\n";
    for (const auto& l : lines) {
        profiles.push_back(line_profile(vol, l.axis, l.index, l.p0, l.p1, l.samples));
        const double g = gradient_magnitude(profiles.back().values, profiles.back().step_mm);
        out.gradients.push_back({l.name, g});
        grad += l.name + "," + num(profiles.back().step_mm) + "," + num(g) + "\n";
    }
    std::string prof = "sample";
    for (const auto& l : lines) prof += "," + l.name;
    prof += "\n";
    for (std::size_t s = 0; s < profiles.front().values.size(); ++s) {
        prof += std::to_string(s);
        for (const auto& p : profiles) prof += "," + (s < p.values.size() ? num(p.values[s]) : std::string());
        prof += "\n";
    }
    write_text_file(dir / run_files::profiles, prof);
    write_text_file(dir / run_files::gradients, grad);

    if (compare_dir) {
        const auto other = read_gradients(*compare_dir / run_files::gradients);
        std::string cmp = "profile,this,other,ratio\n";
        for (const auto& g : out.gradients) {
            const auto it = std::find_if(other.begin(), other.end(), [&](const auto& o) { return o.name == g.name; });
            if (it == other.end()) throw Error(ErrorCode::CorruptFile, "profile " + g.name + " missing from the other run");
            const double ratio = it->gradient > 0.0 ? g.gradient / it->gradient : std::numeric_limits<double>::infinity();
            out.ratios.emplace_back(g.name, ratio);
            cmp += g.name + "," + num(g.gradient) + "," + num(it->gradient) + "," + num(ratio) + "\n";
        }
        write_text_file(dir / run_files::comparison, cmp);
    }
    if (breakdown) throw *breakdown;
    return out;
}

std::string reachmap_pgm(const std::vector<MapEntry>& map, int height) {
    if (height < 2) throw Error(ErrorCode::InvalidArgument, "map height must be >= 2");
    const int width = 2 * height;
    std::vector<Vec3> dirs;
    dirs.reserve(map.size());
    for (const auto& m : map) dirs.emplace_back(std::cos(m.lat) * std::cos(m.lon), std::cos(m.lat) * std::sin(m.lon), std::sin(m.lat));
    // A pixel shows its nearest way-point when that is within about one cell
    // of an equal-area grid with as many points.
    const double cutoff = map.empty() ? 0.0 : std::sqrt(4.0 * std::numbers::pi / static_cast<double>(map.size()));
    const double cos_cutoff = std::cos(cutoff);
    const double sqrt2 = std::numbers::sqrt2;
    std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
    const std::size_t head = out.size();
    out.resize(head + static_cast<std::size_t>(width) * height, static_cast<char>(kEmptyGray));
    parallel_for(static_cast<std::size_t>(height), [&](std::size_t row) {
        const double y = sqrt2 - (static_cast<double>(row) + 0.5) / height * 2.0 * sqrt2;
        for (int col = 0; col < width; ++col) {
            const double x = (col + 0.5) / width * 4.0 * sqrt2 - 2.0 * sqrt2;
            const auto ll = inverse_mollweide(x, y);
            if (!ll) continue;
            const Vec3 d(std::cos(ll->lat) * std::cos(ll->lon), std::cos(ll->lat) * std::sin(ll->lon), std::sin(ll->lat));
            double best = -2.0;
            std::size_t best_k = 0;
            for (std::size_t k = 0; k < dirs.size(); ++k) {
                const double cd = dirs[k].dot(d);
                if (cd > best) {
                    best = cd;
                    best_k = k;
                }
            }
            if (dirs.empty() || best < cos_cutoff) continue;
            unsigned char v = kEmptyGray;
            switch (map[best_k].status) {
                case WaypointStatus::Planned:
                case WaypointStatus::Executed: v = kReachedGray; break;
                case WaypointStatus::ReflexSkipped: v = kReflexGray; break;
                default: break;
            }
            out[head + row * static_cast<std::size_t>(width) + static_cast<std::size_t>(col)] = static_cast<char>(v);
        }
    });
    return out;
}

std::string run_report(const fs::path& dir) {
    if (!fs::exists(dir / run_files::trajectory)) throw Error(ErrorCode::IoError, "no trajectory in " + dir.string());
    const Trajectory t = trajectory_from_json(read_json(dir / run_files::trajectory));
    std::string out = "trajectory " + to_string(t.spec) + "\n";
    std::optional<ExecutionLog> log;
    if (fs::exists(dir / run_files::execution)) log = load_execution(t, dir);
    const ReachabilityReport r = reachability_report(t, log ? &*log : nullptr);
    out += "(a) planned / potential:   " + r.planned.str() + "\n";
    if (log) {
        out += "(b) executed / planned:    " + r.executed.str() + "\n";
        out += "    collision reflexes:    " + std::to_string(log->reflexes.size()) + "\n";
    }
    if (fs::exists(dir / run_files::calibration)) {
        std::istringstream in(read_text_file(dir / run_files::calibration));
        std::string line;
        std::getline(in, line);
        Ratio cal;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            ++cal.denominator;
            if (line.back() == '1') ++cal.numerator;
        }
        out += "(c) calibrated / executed: " + cal.str() + "\n";
    }
    if (fs::exists(dir / run_files::gradients)) {
        for (const auto& g : read_gradients(dir / run_files::gradients)) {
            out += "gradient " + g.name + ": " + num(g.gradient) + "\n";
        }
    }
    write_text_file(dir / run_files::report, out);
    return out;
}

}  // namespace robct
