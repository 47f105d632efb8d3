#pragma once

// Byte-order-explicit serialization helpers. All on-disk numbers are
// little-endian regardless of host; floats are stored as their IEEE-754 bit
// patterns. Writers stage into a buffer so a file is a single stream write,
// and atomic_save publishes via temp-file + rename so readers never observe
// a half-written file.

#include <cstdint>
#include <cstring>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace arflow::io {

class Writer {
public:
    void u32(uint32_t v) {
        for (int i = 0; i < 4; ++i)
            buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
    }
    void u64(uint64_t v) {
        for (int i = 0; i < 8; ++i)
            buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
    }
    void f32(float v) {
        uint32_t bits;
        std::memcpy(&bits, &v, 4);
        u32(bits);
    }
    void f64(double v) {
        uint64_t bits;
        std::memcpy(&bits, &v, 8);
        u64(bits);
    }
    void bytes(const void* p, size_t n) {
        const auto* c = static_cast<const unsigned char*>(p);
        buf_.insert(buf_.end(), c, c + n);
    }
    void str(const std::string& s) { bytes(s.data(), s.size()); }
    void f32_array(const float* p, size_t n) {
        for (size_t i = 0; i < n; ++i) f32(p[i]);
    }
    void f64_array(const double* p, size_t n) {
        for (size_t i = 0; i < n; ++i) f64(p[i]);
    }

    const std::vector<unsigned char>& buffer() const { return buf_; }

private:
    std::vector<unsigned char> buf_;
};

class Reader {
public:
    Reader(const unsigned char* data, size_t size) : p_(data), n_(size) {}

    bool exhausted() const { return off_ == n_; }
    size_t remaining() const { return n_ - off_; }

    uint32_t u32();
    uint64_t u64();
    float f32();
    double f64();
    void bytes(void* out, size_t n);
    std::string str(size_t n);
    void f32_array(float* out, size_t n);
    void f64_array(double* out, size_t n);

private:
    void need(size_t n) const;

    const unsigned char* p_;
    size_t n_;
    size_t off_ = 0;
};

// Reads a whole file; missing/unreadable file -> io error.
std::vector<unsigned char> slurp(const std::string& path);

// Writes buf to path via a temp file in the same directory plus rename.
void atomic_save(const std::string& path, const std::vector<unsigned char>& buf);

} // namespace arflow::io
