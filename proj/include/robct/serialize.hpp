#pragma once

#include "robct/arm.hpp"
#include "robct/error.hpp"
#include "robct/geometry.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>

namespace robct {

nlohmann::json vec_json(const Vec3& v);
Vec3 vec_from_json(const nlohmann::json& j);

// {"q": [w, x, y, z], "t": [x, y, z]}
nlohmann::json pose_json(const RigidPose& p);
RigidPose pose_from_json(const nlohmann::json& j);

nlohmann::json joints_json(const JointConfig& q);
JointConfig joints_from_json(const nlohmann::json& j);

nlohmann::json geometry_json(const ProjectionGeometry& g);
ProjectionGeometry geometry_from_json(const nlohmann::json& j);

std::string read_text_file(const std::filesystem::path& path);
/// Writes through a temporary file and renames, creating parent directories.
void write_text_file(const std::filesystem::path& path, const std::string& text);

/// Parses JSON, mapping parse errors to `code`.
nlohmann::json parse_json(const std::string& text, ErrorCode code);

}  // namespace robct
