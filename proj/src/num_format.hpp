#pragma once

#include <charconv>
#include <string>

namespace evpinn::detail {

/// Shortest representation that round-trips the exact double.
inline std::string format_double(double v) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

}  // namespace evpinn::detail
