#pragma once

// Named-tensor container, used for datasets and checkpoints alike.
// Layout (all little-endian):
//   magic "BCGN" | u32 version=1 | u32 entry count
//   per entry: u16 name length | name bytes | u8 dtype (0 = f32) | u8 rank
//              | rank * u32 dims | row-major f32 payload

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "bcgn/common.hpp"

namespace bcgn {

struct NamedTensor {
    std::string name;
    std::vector<uint32_t> dims;
    std::vector<float> data;

    int64_t numel() const {
        int64_t n = 1;
        for (uint32_t d : dims) n *= int64_t(d);
        return n;
    }
};

namespace detail {

inline void put_u16(std::string& out, uint16_t v) {
    out.push_back(char(v & 0xff));
    out.push_back(char((v >> 8) & 0xff));
}

inline void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::string& out, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

struct ByteReader {
    const std::string& buf;
    size_t pos = 0;

    [[noreturn]] void fail(const std::string& what) const {
        throw IoError("container: " + what + " at offset " + std::to_string(pos));
    }
    void need(size_t n) const {
        if (pos + n > buf.size()) fail("truncated file");
    }
    uint16_t u16() {
        need(2);
        uint16_t v = uint16_t(uint8_t(buf[pos])) | uint16_t(uint8_t(buf[pos + 1])) << 8;
        pos += 2;
        return v;
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= uint32_t(uint8_t(buf[pos + size_t(i)])) << (8 * i);
        pos += 4;
        return v;
    }
    uint8_t u8() {
        need(1);
        return uint8_t(buf[pos++]);
    }
    float f32() {
        uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
};

}  // namespace detail

inline constexpr uint32_t kContainerVersion = 1;

inline void write_container(const std::string& path, const std::vector<NamedTensor>& entries) {
    std::string out;
    out += "BCGN";
    detail::put_u32(out, kContainerVersion);
    detail::put_u32(out, uint32_t(entries.size()));
    for (const NamedTensor& e : entries) {
        if (e.name.size() > 0xffff) throw IoError("container: entry name too long");
        if (e.dims.size() > 0xff) throw IoError("container: rank too large");
        if (int64_t(e.data.size()) != e.numel())
            throw IoError("container: entry '" + e.name + "' data does not match dims");
        detail::put_u16(out, uint16_t(e.name.size()));
        out += e.name;
        out.push_back(char(0));  // dtype f32
        out.push_back(char(e.dims.size()));
        for (uint32_t d : e.dims) detail::put_u32(out, d);
        for (float v : e.data) detail::put_f32(out, v);
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("container: cannot open '" + path + "' for writing");
    f.write(out.data(), std::streamsize(out.size()));
    if (!f) throw IoError("container: write failed for '" + path + "'");
}

inline std::vector<NamedTensor> read_container(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("container: cannot open '" + path + "'");
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    detail::ByteReader r{buf};

    r.need(4);
    if (buf.compare(0, 4, "BCGN") != 0) r.fail("bad magic");
    r.pos = 4;
    const uint32_t version = r.u32();
    if (version != kContainerVersion)
        throw IoError("container: unsupported version " + std::to_string(version));
    const uint32_t count = r.u32();

    std::vector<NamedTensor> entries;
    entries.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        NamedTensor e;
        const uint16_t name_len = r.u16();
        r.need(name_len);
        e.name.assign(buf, r.pos, name_len);
        r.pos += name_len;
        const uint8_t dtype = r.u8();
        if (dtype != 0) r.fail("unsupported dtype " + std::to_string(int(dtype)));
        const uint8_t rank = r.u8();
        e.dims.resize(rank);
        int64_t numel = 1;
        for (uint8_t d = 0; d < rank; ++d) {
            e.dims[d] = r.u32();
            numel *= int64_t(e.dims[d]);
        }
        if (numel < 0 || numel > (int64_t(1) << 32)) r.fail("implausible entry size");
        r.need(size_t(numel) * 4);
        e.data.resize(size_t(numel));
        for (int64_t p = 0; p < numel; ++p) e.data[size_t(p)] = r.f32();
        entries.push_back(std::move(e));
    }
    return entries;
}

// u64 <-> exact f32 encoding (four 16-bit chunks), for RNG state entries.
inline std::vector<float> encode_u64(uint64_t v) {
    std::vector<float> out(4);
    for (int i = 0; i < 4; ++i) out[size_t(i)] = float((v >> (16 * i)) & 0xffff);
    return out;
}

inline uint64_t decode_u64(const std::vector<float>& chunks) {
    if (chunks.size() != 4) throw IoError("container: bad u64 encoding");
    uint64_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint64_t(uint32_t(chunks[size_t(i)])) << (16 * i);
    return v;
}

}  // namespace bcgn
