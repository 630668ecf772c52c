#pragma once

#include "errors.hpp"

#include <array>
#include <cstddef>
#include <string>
#include <string_view>

namespace probeforge {

enum class Framework { deontology, utilitarianism, virtue, justice, commonsense };

inline constexpr std::array<Framework, 5> kFrameworks = {
    Framework::deontology, Framework::utilitarianism, Framework::virtue, Framework::justice,
    Framework::commonsense};

[[nodiscard]] constexpr std::string_view to_string(Framework f) noexcept
{
    switch (f) {
    case Framework::deontology: return "deontology";
    case Framework::utilitarianism: return "utilitarianism";
    case Framework::virtue: return "virtue";
    case Framework::justice: return "justice";
    case Framework::commonsense: return "commonsense";
    }
    return "unknown";
}

[[nodiscard]] constexpr std::size_t index_of(Framework f) noexcept
{
    return static_cast<std::size_t>(f);
}

/// Accepts the canonical names plus "utilitarian".
[[nodiscard]] inline Framework parse_framework(std::string_view name)
{
    for (auto f : kFrameworks) {
        if (name == to_string(f)) return f;
    }
    if (name == "utilitarian") return Framework::utilitarianism;
    throw MalformedRecord("unknown framework '" + std::string(name) + "'");
}

enum class Split { train, test };

[[nodiscard]] constexpr std::string_view to_string(Split s) noexcept
{
    return s == Split::train ? "train" : "test";
}

[[nodiscard]] inline Split parse_split(std::string_view name)
{
    if (name == "train") return Split::train;
    if (name == "test") return Split::test;
    throw MalformedRecord("unknown split '" + std::string(name) + "'");
}

} // namespace probeforge
