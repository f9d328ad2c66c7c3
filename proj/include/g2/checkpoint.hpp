#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "g2/tape.hpp"

#include "json.hpp"

namespace g2 {

/// Parameter checkpoint: one file holding a length-prefixed JSON header
/// (parameter names, shapes, byte offsets into the payload) followed by the
/// raw little-endian 64-bit float payloads in header order.
///
/// Layout: 8-byte little-endian header length, UTF-8 JSON header, payload.

namespace detail {

static_assert(sizeof(double) == 8);

inline void write_le_u64(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t read_le_u64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

inline void write_le_doubles(std::ostream& out, const double* p, std::size_t n) {
    for (std::size_t k = 0; k < n; ++k) {
        std::uint64_t bits;
        std::memcpy(&bits, &p[k], 8);
        write_le_u64(out, bits);
    }
}

inline void read_le_doubles(std::istream& in, double* p, std::size_t n) {
    for (std::size_t k = 0; k < n; ++k) {
        const std::uint64_t bits = read_le_u64(in);
        std::memcpy(&p[k], &bits, 8);
    }
}

}  // namespace detail

inline void save_checkpoint(const std::vector<ad::Parameter*>& params,
                            const std::string& path) {
    nlohmann::json header = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const ad::Parameter* p : params) {
        header.push_back({{"name", p->name},
                          {"rows", p->value.rows()},
                          {"cols", p->value.cols()},
                          {"offset", offset}});
        offset += 8 * p->count();
    }
    const std::string hs = header.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    detail::write_le_u64(out, hs.size());
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const ad::Parameter* p : params)
        detail::write_le_doubles(out, p->value.data(), p->count());
}

/// Loads values into the given parameters, matched by name; shapes must
/// agree and every parameter must be present in the file.
inline void load_checkpoint(const std::vector<ad::Parameter*>& params,
                            const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    const std::uint64_t hlen = detail::read_le_u64(in);
    std::string hs(hlen, '\0');
    in.read(hs.data(), static_cast<std::streamsize>(hlen));
    const nlohmann::json header = nlohmann::json::parse(hs);
    const std::streamoff payload_start = in.tellg();
    for (ad::Parameter* p : params) {
        bool found = false;
        for (const auto& entry : header) {
            if (entry.at("name").get<std::string>() != p->name) continue;
            if (entry.at("rows").get<std::size_t>() != p->value.rows() ||
                entry.at("cols").get<std::size_t>() != p->value.cols())
                throw std::runtime_error("checkpoint shape mismatch for " + p->name);
            in.seekg(payload_start + static_cast<std::streamoff>(
                                         entry.at("offset").get<std::uint64_t>()));
            detail::read_le_doubles(in, p->value.data(), p->count());
            found = true;
            break;
        }
        if (!found) throw std::runtime_error("checkpoint missing parameter: " + p->name);
    }
}

}  // namespace g2
