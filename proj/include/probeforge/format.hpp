#pragma once

#include <charconv>
#include <string>

namespace probeforge {

/// Shortest decimal text that parses back to exactly `v`.
inline std::string format_double(double v)
{
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return {buf, end};
}

} // namespace probeforge
