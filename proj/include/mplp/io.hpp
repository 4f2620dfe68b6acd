#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "mplp/error.hpp"

namespace mplp {

/// Little-endian binary readers/writers for the persisted artifacts
/// (retrieval index, representation cache, checkpoints). Each file starts
/// with an 8-byte magic and a u32 version.

inline void write_u32(std::ostream& out, uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline void write_u64(std::ostream& out, uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline void write_f64(std::ostream& out, double v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline void write_string(std::ostream& out, const std::string& s) {
    write_u64(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}
inline void write_f64_vec(std::ostream& out, const std::vector<double>& v) {
    write_u64(out, v.size());
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
}

inline uint32_t read_u32(std::istream& in) {
    uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw ParseError("binary read failed (u32)");
    return v;
}
inline uint64_t read_u64(std::istream& in) {
    uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw ParseError("binary read failed (u64)");
    return v;
}
inline double read_f64(std::istream& in) {
    double v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw ParseError("binary read failed (f64)");
    return v;
}
inline std::string read_string(std::istream& in) {
    uint64_t n = read_u64(in);
    std::string s(n, '\0');
    in.read(s.data(), static_cast<std::streamsize>(n));
    if (!in) throw ParseError("binary read failed (string)");
    return s;
}
inline std::vector<double> read_f64_vec(std::istream& in) {
    uint64_t n = read_u64(in);
    std::vector<double> v(n);
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw ParseError("binary read failed (f64 vector)");
    return v;
}

inline void write_magic(std::ostream& out, const char magic[8], uint32_t version) {
    out.write(magic, 8);
    write_u32(out, version);
}
inline void check_magic(std::istream& in, const char magic[8], uint32_t expected_version,
                        const std::string& what) {
    char buf[8];
    in.read(buf, 8);
    if (!in || std::string(buf, 8) != std::string(magic, 8))
        throw ParseError(what + ": bad magic header");
    uint32_t version = read_u32(in);
    if (version != expected_version)
        throw ParseError(what + ": unsupported version " + std::to_string(version));
}

inline std::ofstream open_binary_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write file: " + path);
    return out;
}
inline std::ifstream open_binary_in(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open file: " + path);
    return in;
}

}  // namespace mplp
