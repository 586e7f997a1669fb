#include "robct/serialize.hpp"

#include "robct/error.hpp"

#include <fstream>
#include <sstream>

namespace robct {

nlohmann::json vec_json(const Vec3& v) { return nlohmann::json::array({v.x(), v.y(), v.z()}); }

Vec3 vec_from_json(const nlohmann::json& j) {
    if (!j.is_array() || j.size() != 3) throw Error(ErrorCode::CorruptFile, "expected a 3-vector");
    return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

nlohmann::json pose_json(const RigidPose& p) {
    const Quat& q = p.rotation();
    return {{"q", {q.w(), q.x(), q.y(), q.z()}}, {"t", vec_json(p.translation())}};
}

RigidPose pose_from_json(const nlohmann::json& j) {
    const auto& q = j.at("q");
    if (!q.is_array() || q.size() != 4) throw Error(ErrorCode::CorruptFile, "expected a quaternion");
    return RigidPose::from_raw(Quat(q[0].get<double>(), q[1].get<double>(), q[2].get<double>(), q[3].get<double>()),
                               vec_from_json(j.at("t")));
}

nlohmann::json joints_json(const JointConfig& q) {
    auto j = nlohmann::json::array();
    for (int i = 0; i < kJointCount; ++i) j.push_back(q[i]);
    return j;
}

JointConfig joints_from_json(const nlohmann::json& j) {
    if (!j.is_array() || j.size() != kJointCount) throw Error(ErrorCode::CorruptFile, "expected 7 joint angles");
    JointConfig q;
    for (int i = 0; i < kJointCount; ++i) q[i] = j[i].get<double>();
    return q;
}

nlohmann::json geometry_json(const ProjectionGeometry& g) {
    return {{"source", vec_json(g.source)},     {"detector_origin", vec_json(g.detector_origin)},
            {"detector_u", vec_json(g.detector_u)}, {"detector_v", vec_json(g.detector_v)},
            {"pitch_u", g.pitch_u},             {"pitch_v", g.pitch_v},
            {"width", g.width},                 {"height", g.height}};
}

ProjectionGeometry geometry_from_json(const nlohmann::json& j) {
    ProjectionGeometry g;
    g.source = vec_from_json(j.at("source"));
    g.detector_origin = vec_from_json(j.at("detector_origin"));
    g.detector_u = vec_from_json(j.at("detector_u"));
    g.detector_v = vec_from_json(j.at("detector_v"));
    g.pitch_u = j.at("pitch_u").get<double>();
    g.pitch_v = j.at("pitch_v").get<double>();
    g.width = j.at("width").get<int>();
    g.height = j.at("height").get<int>();
    return g;
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
    }
    std::filesystem::rename(tmp, path);
}

nlohmann::json parse_json(const std::string& text, ErrorCode code) {
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw Error(code, std::string("invalid JSON: ") + e.what());
    }
}

}  // namespace robct
