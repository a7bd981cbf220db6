#pragma once
// Small binary and CSV serialization helpers.
//
// Binary layout is little-endian; this library targets little-endian hosts
// and refuses to compile elsewhere rather than silently byte-swapping.

#include <wf/errors.hpp>

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

namespace wf {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian; big-endian hosts unsupported");

class BinWriter {
public:
    explicit BinWriter(std::ostream& out) : out_(out) {}

    void u32(std::uint32_t v) { raw(&v, sizeof v); }
    void u64(std::uint64_t v) { raw(&v, sizeof v); }
    void f64(double v) { raw(&v, sizeof v); }

    void str(const std::string& s) {
        u64(s.size());
        raw(s.data(), s.size());
    }

    void vec(const std::vector<double>& v) {
        u64(v.size());
        raw(v.data(), v.size() * sizeof(double));
    }

    void raw(const void* p, std::size_t n) {
        out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
        if (!out_) throw IoError("write failed while serializing");
    }

private:
    std::ostream& out_;
};

class BinReader {
public:
    explicit BinReader(std::istream& in) : in_(in) {}

    std::uint32_t u32() {
        std::uint32_t v;
        raw(&v, sizeof v);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v;
        raw(&v, sizeof v);
        return v;
    }
    double f64() {
        double v;
        raw(&v, sizeof v);
        return v;
    }

    std::string str() {
        const std::uint64_t n = u64();
        if (n > (1ULL << 32)) throw IoError("corrupt checkpoint: string too long");
        std::string s(n, '\0');
        raw(s.data(), n);
        return s;
    }

    std::vector<double> vec() {
        const std::uint64_t n = u64();
        if (n > (1ULL << 33)) throw IoError("corrupt checkpoint: array too long");
        std::vector<double> v(n);
        raw(v.data(), n * sizeof(double));
        return v;
    }

    void raw(void* p, std::size_t n) {
        in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n)
            throw IoError("unexpected end of file while deserializing");
    }

private:
    std::istream& in_;
};

// Stable shortest-ish decimal rendering for CSV output.  Deterministic for
// identical inputs, which is all reproducibility requires.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

}  // namespace wf
