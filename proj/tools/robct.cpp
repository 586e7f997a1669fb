// Command line driver for the plan -> execute -> measure -> calibrate ->
// reconstruct pipeline. Stages communicate through a run directory.

#include "robct/error.hpp"
#include "robct/parallel.hpp"
#include "robct/pipeline.hpp"
#include "robct/serialize.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

namespace {

using namespace robct;

constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;
constexpr int kExitDigest = 4;

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    int threads = 0;
    std::optional<double> lambda;
    std::optional<int> iterations;
    std::optional<double> threshold_px;
    std::string tool;
    std::string trajectory;
    std::string compare;
    std::string map;
    int map_height = 256;
};

ExperimentConfig resolve_config(const Options& o) {
    ExperimentConfig c;
    const fs::path saved = fs::path(o.out) / run_files::config;
    if (!o.config.empty()) {
        c = load_config(o.config);
    } else if (!o.out.empty() && fs::exists(saved)) {
        c = load_config(saved);
    }
    if (o.seed) c.seed = *o.seed;
    if (!o.tool.empty()) {
        try {
            c.tool = tool_kind_from_string(o.tool);
        } catch (const Error& e) {
            throw Error(ErrorCode::ConfigError, e.what());
        }
    }
    if (!o.trajectory.empty()) {
        try {
            c.trajectory = parse_trajectory_spec(o.trajectory);
        } catch (const Error& e) {
            throw Error(ErrorCode::ConfigError, e.what());
        }
    }
    if (o.lambda) c.solver.lambda = *o.lambda;
    if (o.iterations) c.solver.iterations = *o.iterations;
    if (o.threshold_px) c.calibration.threshold_px = *o.threshold_px;
    c.validate();
    return c;
}

int run_stage(const std::string& stage, const Options& o) {
    if (o.threads < 0) throw Error(ErrorCode::ConfigError, "--threads must be >= 0");
    set_thread_count(o.threads);
    const fs::path dir = o.out;

    if (stage == "reachmap") {
        const fs::path map = o.map.empty() ? dir / run_files::map : fs::path(o.map);
        const fs::path target = o.out.empty() ? fs::path(run_files::reachmap) : dir / run_files::reachmap;
        write_text_file(target, reachmap_pgm(parse_map_csv(read_text_file(map)), o.map_height));
        std::printf("wrote %s\n", target.string().c_str());
        return 0;
    }
    if (stage == "report") {
        std::fputs(run_report(dir).c_str(), stdout);
        return 0;
    }

    const ExperimentConfig c = resolve_config(o);
    if (stage == "plan") {
        const PlanOutcome r = run_plan(c, dir);
        if (r.from_cache) std::printf("loaded from cache\n");
        std::printf("trajectory %s, tool %s\n", to_string(c.trajectory).c_str(), to_string(c.tool).c_str());
        std::printf("trajectory id %s\n", to_hex(r.trajectory.trajectory_id).c_str());
        std::printf("(a) planned / potential: %s\n", r.planned.str().c_str());
    } else if (stage == "execute") {
        const ExecuteOutcome r = run_execute(c, dir);
        std::printf("(b) executed / planned: %s\n", r.executed.str().c_str());
        std::printf("collision reflexes: %zu\n", r.reflexes);
    } else if (stage == "measure") {
        const MeasureOutcome r = run_measure(c, dir);
        std::printf("measured %zu views, %zu circle observations\n", r.views, r.observations);
    } else if (stage == "calibrate") {
        const CalibrateOutcome r = run_calibrate(c, dir);
        std::printf("(c) calibrated / executed: %s\n", r.calibrated.str().c_str());
    } else if (stage == "reconstruct") {
        std::optional<fs::path> compare;
        if (!o.compare.empty()) compare = o.compare;
        const ReconstructOutcome r = run_reconstruct(c, dir, compare);
        std::printf("reconstructed %zu %s views, lambda %.6g, final cost %.6g\n", r.views,
                    r.calibrated ? "calibrated" : "nominal", r.result.lambda,
                    r.result.cost_history.empty() ? 0.0 : r.result.cost_history.back());
        for (const auto& g : r.gradients) std::printf("gradient %s: %.6g\n", g.name.c_str(), g.gradient);
        for (const auto& [name, ratio] : r.ratios) std::printf("ratio %s: %.4f\n", name.c_str(), ratio);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Robotic sample holder CT: planning, simulation, calibration and reconstruction"};
    app.require_subcommand(1);
    Options o;

    auto add_common = [&](CLI::App* sub, bool needs_out) {
        auto* out = sub->add_option("--out", o.out, "run directory");
        if (needs_out) out->required();
        sub->add_option("--threads", o.threads, "worker threads (0 = all cores)");
    };
    auto add_config = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "experiment config JSON");
        sub->add_option("--seed", o.seed, "experiment seed");
        sub->add_option("--tool", o.tool, "straight or curved");
        sub->add_option("--trajectory", o.trajectory, "circular:N or spherical:NSIDE");
    };

    std::string stage;
    for (const char* name : {"plan", "execute", "measure", "calibrate"}) {
        auto* sub = app.add_subcommand(name, std::string("run the ") + name + " stage");
        add_common(sub, true);
        add_config(sub);
        if (std::string(name) == "calibrate") sub->add_option("--threshold-px", o.threshold_px, "match distance in pixels");
        sub->callback([&stage, name] { stage = name; });
    }
    auto* recon = app.add_subcommand("reconstruct", "reconstruct the (calibrated) projection stack");
    add_common(recon, true);
    add_config(recon);
    recon->add_option("--lambda", o.lambda, "Tikhonov weight (default from the system diagonal)");
    recon->add_option("--iterations", o.iterations, "CG iterations");
    recon->add_option("--compare", o.compare, "other run directory for gradient ratios");
    recon->callback([&] { stage = "reconstruct"; });

    auto* reach = app.add_subcommand("reachmap", "render a map CSV as a Mollweide PGM");
    add_common(reach, false);
    reach->add_option("--map", o.map, "map CSV (default: <out>/map.csv)");
    reach->add_option("--height", o.map_height, "raster height in pixels");
    reach->callback([&] { stage = "reachmap"; });

    auto* report = app.add_subcommand("report", "print the table rows of a run");
    add_common(report, true);
    report->callback([&] { stage = "report"; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : kExitConfig;
    }

    try {
        return run_stage(stage, o);
    } catch (const Error& e) {
        std::cerr << "robct " << stage << ": " << e.what() << "\n";
        switch (e.code()) {
            case ErrorCode::ConfigError: return kExitConfig;
            case ErrorCode::DigestMismatch: return kExitDigest;
            default: return kExitStage;
        }
    } catch (const std::exception& e) {
        std::cerr << "robct " << stage << ": " << e.what() << "\n";
        return kExitStage;
    }
}
