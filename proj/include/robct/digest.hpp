#pragma once

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace robct {

using Digest = std::array<std::uint8_t, 32>;

Digest sha256(std::string_view data);
std::string to_hex(const Digest& d);
Digest digest_from_hex(const std::string& hex);

/// Nine significant digits, shortest form, "-0" folded to "0".
std::string format_canonical_number(double v);

/// Compact JSON with sorted keys and every floating point value rounded to
/// nine significant digits. Independent of locale and platform.
std::string canonical_json(const nlohmann::json& j);

inline Digest canonical_digest(const nlohmann::json& j) { return sha256(canonical_json(j)); }

}  // namespace robct
