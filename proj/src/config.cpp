#include "robct/config.hpp"

#include "robct/error.hpp"
#include "robct/serialize.hpp"

#include <set>

namespace robct {

namespace {

using nlohmann::json;

[[noreturn]] void config_error(const std::string& what) { throw Error(ErrorCode::ConfigError, what); }

// Reads the keys of one object, rejecting anything it does not know.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) config_error(path_ + " must be an object");
    }
    ~Section() = default;

    template <class T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key) || j_.at(key).is_null()) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception&) {
            config_error(path_ + "." + key + " has the wrong type");
        }
    }

    template <class F>
    void with(const char* key, F&& f) {
        seen_.insert(key);
        if (j_.contains(key) && !j_.at(key).is_null()) f(j_.at(key), path_ + "." + key);
    }

    bool has(const char* key) const { return j_.contains(key) && !j_.at(key).is_null(); }

    void finish() const {
        for (const auto& [k, v] : j_.items()) {
            if (!seen_.count(k)) config_error("unknown key " + path_ + "." + k);
        }
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

template <class F>
auto converted(const std::string& what, F&& f) {
    try {
        return f();
    } catch (const Error& e) {
        config_error(what + ": " + e.what());
    }
}

void detector_from(const json& j, const std::string& path, DetectorSampling& d) {
    Section s(j, path);
    s.get("width", d.width);
    s.get("height", d.height);
    s.get("pitch_mm", d.pitch_mm);
    s.finish();
}

json detector_to(const DetectorSampling& d) {
    return {{"width", d.width}, {"height", d.height}, {"pitch_mm", d.pitch_mm}};
}

}  // namespace

void ExperimentConfig::validate() const {
    require_seed();
    if (trajectory.count < 1) config_error("trajectory count must be >= 1");
    for (const auto* d : {&world.calibration_detector, &world.imaging_detector}) {
        if (d->width < 1 || d->height < 1 || !(d->pitch_mm > 0.0)) config_error("detector sampling must be positive");
    }
    if (!(world.source_to_iso_mm > 0.0) || !(world.iso_to_detector_mm > 0.0)) config_error("distances must be positive");
    if (world.repeatability_mm < 0.0 || world.rotation_sigma_deg < 0.0) config_error("placement noise must be >= 0");
    if (roadmap.samples < 1 || roadmap.k_nearest < 1 || !(roadmap.step_rad > 0.0) || roadmap.ik_seeds < 1) {
        config_error("roadmap parameters must be positive");
    }
    if (reflex.sigma_rad < 0.0 || !(reflex.step_rad > 0.0)) config_error("reflex parameters out of range");
    if (measurement.sigma_px < 0.0 || measurement.false_circles < 0 || measurement.false_min_distance_px < 0.0 ||
        measurement.helix_jitter_mm < 0.0) {
        config_error("measurement noise must be >= 0");
    }
    if (!(phantom_mu >= 0.0)) config_error("phantom mu must be >= 0");
    if (!(calibration.threshold_px > 0.0) || calibration.min_matches < 1 || calibration.max_iterations < 1) {
        config_error("calibration parameters must be positive");
    }
    if (volume_n < 2 || !(volume_spacing_mm > 0.0)) config_error("volume needs n >= 2 and positive spacing");
    if (solver.iterations < 1) config_error("iterations must be >= 1");
    if (solver.lambda && !(*solver.lambda >= 0.0)) config_error("lambda must be >= 0");
}

std::uint64_t ExperimentConfig::require_seed() const {
    if (!seed) config_error("a seed is required (config \"seed\" or --seed)");
    return *seed;
}

ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig c;
    Section top(j, "config");
    top.with("seed", [&](const json& v, const std::string& p) {
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
            config_error(p + " must be a non-negative integer");
        }
        c.seed = v.get<std::uint64_t>();
    });
    top.with("trajectory", [&](const json& v, const std::string& p) {
        if (!v.is_string()) config_error(p + " must be a string");
        c.trajectory = converted(p, [&] { return parse_trajectory_spec(v.get<std::string>()); });
    });
    top.with("tool", [&](const json& v, const std::string& p) {
        if (!v.is_string()) config_error(p + " must be a string");
        c.tool = converted(p, [&] { return tool_kind_from_string(v.get<std::string>()); });
    });
    top.with("environment", [&](const json& v, const std::string& p) {
        if (v.is_object()) {
            c.custom_environment = environment_from_json(v);
            return;
        }
        if (!v.is_string()) config_error(p + " must be a preset name or an obstacle list");
        c.environment = converted(p, [&] { return environment_preset_from_string(v.get<std::string>()); });
    });
    top.with("arm", [&](const json& v, const std::string& p) {
        if (!v.is_object()) config_error(p + " must be an object");
        c.arm = arm_from_json(v);
    });
    top.with("world", [&](const json& v, const std::string& p) {
        Section s(v, p);
        s.get("source_to_iso_mm", c.world.source_to_iso_mm);
        s.get("iso_to_detector_mm", c.world.iso_to_detector_mm);
        s.get("repeatability_mm", c.world.repeatability_mm);
        s.get("rotation_sigma_deg", c.world.rotation_sigma_deg);
        s.with("calibration_detector", [&](const json& d, const std::string& dp) { detector_from(d, dp, c.world.calibration_detector); });
        s.with("imaging_detector", [&](const json& d, const std::string& dp) { detector_from(d, dp, c.world.imaging_detector); });
        s.finish();
    });
    top.with("roadmap", [&](const json& v, const std::string& p) {
        Section s(v, p);
        s.get("samples", c.roadmap.samples);
        s.get("k_nearest", c.roadmap.k_nearest);
        s.get("step_rad", c.roadmap.step_rad);
        s.get("ik_seeds", c.roadmap.ik_seeds);
        s.finish();
    });
    top.with("reflex", [&](const json& v, const std::string& p) {
        Section s(v, p);
        s.get("enabled", c.reflexes);
        s.get("sigma_rad", c.reflex.sigma_rad);
        s.get("threshold_mm", c.reflex.threshold_mm);
        s.get("step_rad", c.reflex.step_rad);
        s.finish();
    });
    top.with("measurement", [&](const json& v, const std::string& p) {
        Section s(v, p);
        s.get("sigma_px", c.measurement.sigma_px);
        s.get("false_circles", c.measurement.false_circles);
        s.get("false_min_distance_px", c.measurement.false_min_distance_px);
        s.get("helix_jitter_mm", c.measurement.helix_jitter_mm);
        s.finish();
    });
    top.with("phantom", [&](const json& v, const std::string& p) {
        Section s(v, p);
        s.get("mu_brick", c.phantom_mu);
        s.finish();
    });
    top.with("calibration", [&](const json& v, const std::string& p) {
        Section s(v, p);
        s.get("threshold_px", c.calibration.threshold_px);
        s.get("min_matches", c.calibration.min_matches);
        s.get("reject_false_positives", c.calibration.reject_false_positives);
        s.get("max_iterations", c.calibration.max_iterations);
        s.get("max_rms_px", c.calibration.max_rms_px);
        s.finish();
    });
    top.with("reconstruction", [&](const json& v, const std::string& p) {
        Section s(v, p);
        s.get("n", c.volume_n);
        s.get("spacing_mm", c.volume_spacing_mm);
        s.get("iterations", c.solver.iterations);
        s.with("lambda", [&](const json& l, const std::string& lp) {
            if (!l.is_number()) config_error(lp + " must be a number or null");
            c.solver.lambda = l.get<double>();
        });
        s.finish();
    });
    top.finish();
    if (c.arm && !top.has("tool")) c.tool = c.arm->tool.kind;
    return c;
}

json config_to_json(const ExperimentConfig& c) {
    json j;
    j["seed"] = c.seed ? json(*c.seed) : json(nullptr);
    j["trajectory"] = to_string(c.trajectory);
    j["tool"] = to_string(c.tool);
    j["environment"] = c.custom_environment ? environment_json(*c.custom_environment) : json(to_string(c.environment));
    if (c.arm) j["arm"] = arm_json(*c.arm);
    j["world"] = {{"source_to_iso_mm", c.world.source_to_iso_mm},
                  {"iso_to_detector_mm", c.world.iso_to_detector_mm},
                  {"repeatability_mm", c.world.repeatability_mm},
                  {"rotation_sigma_deg", c.world.rotation_sigma_deg},
                  {"calibration_detector", detector_to(c.world.calibration_detector)},
                  {"imaging_detector", detector_to(c.world.imaging_detector)}};
    j["roadmap"] = {{"samples", c.roadmap.samples},
                    {"k_nearest", c.roadmap.k_nearest},
                    {"step_rad", c.roadmap.step_rad},
                    {"ik_seeds", c.roadmap.ik_seeds}};
    j["reflex"] = {{"enabled", c.reflexes},
                   {"sigma_rad", c.reflex.sigma_rad},
                   {"threshold_mm", c.reflex.threshold_mm},
                   {"step_rad", c.reflex.step_rad}};
    j["measurement"] = {{"sigma_px", c.measurement.sigma_px},
                        {"false_circles", c.measurement.false_circles},
                        {"false_min_distance_px", c.measurement.false_min_distance_px},
                        {"helix_jitter_mm", c.measurement.helix_jitter_mm}};
    j["phantom"] = {{"mu_brick", c.phantom_mu}};
    j["calibration"] = {{"threshold_px", c.calibration.threshold_px},
                        {"min_matches", c.calibration.min_matches},
                        {"reject_false_positives", c.calibration.reject_false_positives},
                        {"max_iterations", c.calibration.max_iterations},
                        {"max_rms_px", c.calibration.max_rms_px}};
    j["reconstruction"] = {{"n", c.volume_n},
                           {"spacing_mm", c.volume_spacing_mm},
                           {"iterations", c.solver.iterations},
                           {"lambda", c.solver.lambda ? json(*c.solver.lambda) : json(nullptr)}};
    return j;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_text_file(path);
    } catch (const Error& e) {
        config_error(std::string("cannot read config: ") + e.what());
    }
    return config_from_json(parse_json(text, ErrorCode::ConfigError));
}

void save_config(const std::filesystem::path& path, const ExperimentConfig& c) {
    write_text_file(path, config_to_json(c).dump(2) + "\n");
}

}  // namespace robct
