#include "arflow/io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "arflow/error.hpp"

namespace arflow::io {

void Reader::need(size_t n) const {
    ARF_CHECK(off_ + n <= n_, ErrorKind::format,
              "truncated input: wanted " << n << " bytes at offset " << off_
                                         << " of " << n_);
}

uint32_t Reader::u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
        v |= static_cast<uint32_t>(p_[off_ + static_cast<size_t>(i)])
             << (8 * i);
    off_ += 4;
    return v;
}

uint64_t Reader::u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
        v |= static_cast<uint64_t>(p_[off_ + static_cast<size_t>(i)])
             << (8 * i);
    off_ += 8;
    return v;
}

float Reader::f32() {
    const uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

void Reader::bytes(void* out, size_t n) {
    need(n);
    std::memcpy(out, p_ + off_, n);
    off_ += n;
}

std::string Reader::str(size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(p_ + off_), n);
    off_ += n;
    return s;
}

double Reader::f64() {
    const uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

void Reader::f32_array(float* out, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = f32();
}

void Reader::f64_array(double* out, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = f64();
}

std::vector<unsigned char> slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    ARF_CHECK(in.good(), ErrorKind::io, "cannot open " << path);
    std::vector<unsigned char> buf(
        (std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    ARF_CHECK(!in.bad(), ErrorKind::io, "read failed for " << path);
    return buf;
}

void atomic_save(const std::string& path,
                 const std::vector<unsigned char>& buf) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        ARF_CHECK(out.good(), ErrorKind::io, "cannot create " << tmp);
        out.write(reinterpret_cast<const char*>(buf.data()),
                  static_cast<std::streamsize>(buf.size()));
        out.flush();
        ARF_CHECK(out.good(), ErrorKind::io, "write failed for " << tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    ARF_CHECK(!ec, ErrorKind::io,
              "rename " << tmp << " -> " << path << ": " << ec.message());
}

} // namespace arflow::io
