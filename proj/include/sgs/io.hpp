#pragma once

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "sgs/common.hpp"

namespace sgs {

// Little-endian binary stream helpers. All container formats in this
// project (SGSV/SGSL/SGSI/SGSC) are written through these, so the files
// are byte-identical across runs given identical content.

class BinaryWriter {
public:
    explicit BinaryWriter(const std::filesystem::path& path)
        : out_(path, std::ios::binary), path_(path.string()) {
        if (!out_) throw DataError("cannot open for writing: " + path_);
    }

    void magic(const char tag[4]) { out_.write(tag, 4); }
    void write_u8(u8 v) { raw(&v, 1); }
    void write_u16(u16 v) { raw_le(v); }
    void write_u32(u32 v) { raw_le(v); }
    void write_u64(u64 v) { raw_le(v); }
    void write_f32(float v) {
        u32 bits;
        std::memcpy(&bits, &v, 4);
        raw_le(bits);
    }
    void write_f64(double v) {
        u64 bits;
        std::memcpy(&bits, &v, 8);
        raw_le(bits);
    }
    void write_string(const std::string& s) {
        if (s.size() > 0xffff) throw DataError("string too long for container: " + path_);
        write_u16(static_cast<u16>(s.size()));
        out_.write(s.data(), static_cast<std::streamsize>(s.size()));
    }
    void write_f32_array(const float* data, size_t n) {
        for (size_t i = 0; i < n; ++i) write_f32(data[i]);
    }
    void write_f64_array(const double* data, size_t n) {
        for (size_t i = 0; i < n; ++i) write_f64(data[i]);
    }

    void close() {
        out_.close();
        if (!out_) throw DataError("write failed: " + path_);
    }

private:
    template <typename T>
    void raw_le(T v) {
        // Target platforms are little-endian; keep the byte order explicit anyway.
        u8 buf[sizeof(T)];
        for (size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<u8>(v >> (8 * i));
        raw(buf, sizeof(T));
    }
    void raw(const void* p, size_t n) {
        out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    }

    std::ofstream out_;
    std::string path_;
};

class BinaryReader {
public:
    explicit BinaryReader(const std::filesystem::path& path)
        : in_(path, std::ios::binary), path_(path.string()) {
        if (!in_) throw DataError("cannot open for reading: " + path_);
    }

    void expect_magic(const char tag[4]) {
        char buf[4];
        raw(buf, 4);
        if (std::memcmp(buf, tag, 4) != 0)
            throw DataError("bad magic in " + path_ + " (expected " + std::string(tag, 4) + ")");
    }
    u8 read_u8() {
        u8 v;
        raw(&v, 1);
        return v;
    }
    u16 read_u16() { return raw_le<u16>(); }
    u32 read_u32() { return raw_le<u32>(); }
    u64 read_u64() { return raw_le<u64>(); }
    float read_f32() {
        u32 bits = raw_le<u32>();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    double read_f64() {
        u64 bits = raw_le<u64>();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    std::string read_string() {
        u16 n = read_u16();
        std::string s(n, '\0');
        raw(s.data(), n);
        return s;
    }
    void read_f32_array(float* data, size_t n) {
        for (size_t i = 0; i < n; ++i) data[i] = read_f32();
    }
    void read_f64_array(double* data, size_t n) {
        for (size_t i = 0; i < n; ++i) data[i] = read_f64();
    }

private:
    template <typename T>
    T raw_le() {
        u8 buf[sizeof(T)];
        raw(buf, sizeof(T));
        T v = 0;
        for (size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(buf[i]) << (8 * i);
        return v;
    }
    void raw(void* p, size_t n) {
        in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (!in_) throw DataError("truncated file: " + path_);
    }

    std::ifstream in_;
    std::string path_;
};

inline u64 fnv1a(const std::string& bytes) {
    u64 h = 0xcbf29ce484222325ULL;
    for (char c : bytes) {
        h ^= static_cast<u8>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace sgs
