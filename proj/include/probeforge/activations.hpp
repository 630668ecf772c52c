#pragma once

// ActivationSet and the ACTB container.
//
// Layout (all integers little-endian):
//   "ACTB" | u16 version = 1 | u32 header_len | header_len bytes of UTF-8 JSON
//   | n*d float32 row-major | n label bytes (0/1) | n x (u32 len | UTF-8 id)
//
// The JSON header carries {model_id, layer, n, d, framework, label_offset,
// ids_offset}; both offsets are byte offsets from the start of the matrix
// payload, so label_offset = 4*n*d and ids_offset = label_offset + n.

#include "errors.hpp"
#include "framework.hpp"

#include <nlohmann/json.hpp>

#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

namespace probeforge {

/// Non-owning row-major float matrix.
struct MatrixView {
    std::span<const float> data;
    std::size_t rows{0};
    std::size_t cols{0};

    [[nodiscard]] float operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
    [[nodiscard]] std::span<const float> row(std::size_t i) const
    {
        return data.subspan(i * cols, cols);
    }
};

struct ActivationSet {
    std::string model_id;
    int layer{0};
    Framework framework{Framework::commonsense};
    std::size_t n{0};
    std::size_t d{0};
    std::vector<float> matrix;          ///< n*d, row-major
    std::vector<std::uint8_t> labels;   ///< n
    std::vector<std::string> scenario_ids;

    [[nodiscard]] MatrixView view() const { return {matrix, n, d}; }
    [[nodiscard]] std::span<const std::uint8_t> label_span() const { return labels; }

    /// Throws IntegrityError on length mismatches, non-binary labels, or NaN/Inf.
    void validate() const
    {
        if (layer < 0) throw IntegrityError("negative layer index");
        if (matrix.size() != n * d) {
            throw IntegrityError("matrix has " + std::to_string(matrix.size()) +
                                 " entries, expected " + std::to_string(n * d));
        }
        if (labels.size() != n || scenario_ids.size() != n) {
            throw IntegrityError("labels/ids length does not match n=" + std::to_string(n));
        }
        for (auto l : labels) {
            if (l > 1) throw IntegrityError("non-binary label");
        }
        for (std::size_t k = 0; k < matrix.size(); ++k) {
            if (!std::isfinite(matrix[k])) {
                throw IntegrityError("non-finite activation at row " + std::to_string(k / d) +
                                     ", column " + std::to_string(k % d));
            }
        }
    }
};

/// Rows `idx` of `set`, in order (duplicates allowed, used for resampling).
inline ActivationSet select_rows(const ActivationSet& set, std::span<const std::size_t> idx)
{
    ActivationSet out;
    out.model_id = set.model_id;
    out.layer = set.layer;
    out.framework = set.framework;
    out.n = idx.size();
    out.d = set.d;
    out.matrix.reserve(idx.size() * set.d);
    for (auto i : idx) {
        auto r = set.view().row(i);
        out.matrix.insert(out.matrix.end(), r.begin(), r.end());
        out.labels.push_back(set.labels[i]);
        out.scenario_ids.push_back(set.scenario_ids[i]);
    }
    return out;
}

namespace detail {

inline constexpr char kActbMagic[4] = {'A', 'C', 'T', 'B'};
inline constexpr std::uint16_t kActbVersion = 1;

template <typename T>
void put_le(std::string& buf, T value)
{
    auto u = static_cast<std::make_unsigned_t<T>>(value);
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        buf.push_back(static_cast<char>((u >> (8 * i)) & 0xFFU));
    }
}

template <typename T>
T get_le(const std::string& buf, std::size_t pos)
{
    std::make_unsigned_t<T> u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        u |= static_cast<std::make_unsigned_t<T>>(static_cast<unsigned char>(buf[pos + i]))
             << (8 * i);
    }
    return static_cast<T>(u);
}

} // namespace detail

inline std::string encode_activation_set(const ActivationSet& set)
{
    set.validate();
    const std::uint64_t label_offset = 4ULL * set.n * set.d;
    const nlohmann::json header = {{"model_id", set.model_id},
                                   {"layer", set.layer},
                                   {"n", set.n},
                                   {"d", set.d},
                                   {"framework", to_string(set.framework)},
                                   {"label_offset", label_offset},
                                   {"ids_offset", label_offset + set.n}};
    const std::string header_text = header.dump();

    std::string buf;
    buf.reserve(10 + header_text.size() + label_offset + set.n * 17);
    buf.append(detail::kActbMagic, 4);
    detail::put_le<std::uint16_t>(buf, detail::kActbVersion);
    detail::put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(header_text.size()));
    buf += header_text;
    for (float v : set.matrix) detail::put_le<std::uint32_t>(buf, std::bit_cast<std::uint32_t>(v));
    for (auto l : set.labels) buf.push_back(static_cast<char>(l));
    for (const auto& id : set.scenario_ids) {
        detail::put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(id.size()));
        buf += id;
    }
    return buf;
}

inline ActivationSet decode_activation_set(const std::string& buf)
{
    auto need = [&](std::size_t pos, std::size_t len, const char* what) {
        if (pos + len > buf.size() || pos + len < pos) {
            throw FormatError(std::string("truncated ACTB file while reading ") + what);
        }
    };
    need(0, 10, "preamble");
    if (buf.compare(0, 4, detail::kActbMagic, 4) != 0) throw FormatError("bad ACTB magic");
    const auto version = detail::get_le<std::uint16_t>(buf, 4);
    if (version != detail::kActbVersion) {
        throw FormatError("unsupported ACTB version " + std::to_string(version));
    }
    const auto header_len = detail::get_le<std::uint32_t>(buf, 6);
    need(10, header_len, "header");

    ActivationSet set;
    std::uint64_t label_offset = 0;
    std::uint64_t ids_offset = 0;
    try {
        const auto header = nlohmann::json::parse(buf.substr(10, header_len));
        set.model_id = header.at("model_id").get<std::string>();
        set.layer = header.at("layer").get<int>();
        set.n = header.at("n").get<std::size_t>();
        set.d = header.at("d").get<std::size_t>();
        set.framework = parse_framework(header.at("framework").get<std::string>());
        label_offset = header.at("label_offset").get<std::uint64_t>();
        ids_offset = header.at("ids_offset").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad ACTB header: ") + e.what());
    } catch (const MalformedRecord& e) {
        throw FormatError(std::string("bad ACTB header: ") + e.what());
    }
    if (label_offset != 4ULL * set.n * set.d || ids_offset != label_offset + set.n) {
        throw IntegrityError("ACTB header offsets inconsistent with n and d");
    }

    const std::size_t payload = 10 + header_len;
    need(payload, ids_offset, "matrix and labels");
    set.matrix.resize(set.n * set.d);
    for (std::size_t k = 0; k < set.matrix.size(); ++k) {
        set.matrix[k] = std::bit_cast<float>(detail::get_le<std::uint32_t>(buf, payload + 4 * k));
    }
    set.labels.assign(buf.begin() + static_cast<std::ptrdiff_t>(payload + label_offset),
                      buf.begin() + static_cast<std::ptrdiff_t>(payload + ids_offset));
    std::size_t pos = payload + ids_offset;
    set.scenario_ids.reserve(set.n);
    for (std::size_t i = 0; i < set.n; ++i) {
        need(pos, 4, "id length");
        const auto len = detail::get_le<std::uint32_t>(buf, pos);
        pos += 4;
        need(pos, len, "id");
        set.scenario_ids.push_back(buf.substr(pos, len));
        pos += len;
    }
    if (pos != buf.size()) throw IntegrityError("trailing bytes after ACTB id table");
    set.validate();
    return set;
}

inline void write_activation_file(const ActivationSet& set, const std::string& path)
{
    const auto bytes = encode_activation_set(set);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("short write to " + path);
}

inline ActivationSet read_activation_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode_activation_set(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path + ": " + e.what());
    } catch (const IntegrityError& e) {
        throw IntegrityError(path + ": " + e.what());
    }
}

} // namespace probeforge
