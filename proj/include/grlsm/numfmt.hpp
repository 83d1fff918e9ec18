#pragma once

#include <charconv>
#include <cstdint>
#include <string>

namespace grlsm {

// 17 significant digits: enough to round-trip any double exactly, and
// locale-independent. Used by every file format the project writes.
inline std::string fmt_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v,
                             std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

// Fixed one-decimal formatting for reported percentages.
inline std::string fmt_pct1(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v,
                             std::chars_format::fixed, 1);
    return std::string(buf, res.ptr);
}

} // namespace grlsm
