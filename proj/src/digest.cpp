#include "robct/digest.hpp"

#include "robct/error.hpp"

#include <openssl/sha.h>

#include <charconv>
#include <cmath>

namespace robct {

Digest sha256(std::string_view data) {
    Digest d{};
    SHA256(reinterpret_cast<const unsigned char*>(data.data()), data.size(), d.data());
    return d;
}

std::string to_hex(const Digest& d) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(64);
    for (auto b : d) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0xf]);
    }
    return out;
}

Digest digest_from_hex(const std::string& hex) {
    if (hex.size() != 64) throw Error(ErrorCode::CorruptFile, "digest must have 64 hex digits");
    Digest d{};
    for (std::size_t i = 0; i < 32; ++i) {
        unsigned value = 0;
        auto [ptr, ec] = std::from_chars(hex.data() + 2 * i, hex.data() + 2 * i + 2, value, 16);
        if (ec != std::errc{} || ptr != hex.data() + 2 * i + 2) {
            throw Error(ErrorCode::CorruptFile, "invalid hex digest");
        }
        d[i] = static_cast<std::uint8_t>(value);
    }
    return d;
}

std::string format_canonical_number(double v) {
    if (!std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "non-finite value in canonical serialization");
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 9);
    std::string s(buf, ptr);
    if (s == "-0") s = "0";
    return s;
}

namespace {

void write(const nlohmann::json& j, std::string& out) {
    using T = nlohmann::json::value_t;
    switch (j.type()) {
        case T::object: {
            // nlohmann::json objects are std::map backed, so iteration is key ordered.
            out.push_back('{');
            bool first = true;
            for (auto it = j.begin(); it != j.end(); ++it) {
                if (!first) out.push_back(',');
                first = false;
                out += nlohmann::json(it.key()).dump();
                out.push_back(':');
                write(it.value(), out);
            }
            out.push_back('}');
            break;
        }
        case T::array: {
            out.push_back('[');
            for (std::size_t i = 0; i < j.size(); ++i) {
                if (i) out.push_back(',');
                write(j[i], out);
            }
            out.push_back(']');
            break;
        }
        case T::number_float:
            out += format_canonical_number(j.get<double>());
            break;
        default:
            out += j.dump();
    }
}

}  // namespace

std::string canonical_json(const nlohmann::json& j) {
    std::string out;
    write(j, out);
    return out;
}

}  // namespace robct
