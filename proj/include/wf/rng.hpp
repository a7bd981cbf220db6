#pragma once
// Deterministic random number generation.
//
// Everything stochastic in this library draws from wf::Rng so that a run is
// a pure function of its seeds.  std::* distributions are deliberately not
// used: their output is implementation-defined, and we promise byte-identical
// results for identical seeds on any conforming platform.
//
// Independent components derive their own streams with derive_stream(seed,
// tag): traces, dropout layers, shufflers etc. never share a stream, so the
// order in which components consume randomness cannot perturb one another.

#include <array>
#include <cmath>
#include <cstdint>
#include <string_view>

namespace wf {

// SplitMix64: used to expand a seed into xoshiro state and to hash tags.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// xoshiro256** — small, fast, and easy to serialize (4 words of state).
class Rng {
public:
    Rng() : Rng(0x853c49e6748fea9bULL) {}

    explicit Rng(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& word : state_) word = splitmix64(sm);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform double in [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [0, bound) (Lemire's method with rejection).
    std::uint64_t uniform_int(std::uint64_t bound) {
        if (bound == 0) return 0;
        std::uint64_t x = next_u64();
        __uint128_t m = static_cast<__uint128_t>(x) * bound;
        auto lo = static_cast<std::uint64_t>(m);
        if (lo < bound) {
            const std::uint64_t threshold = (0 - bound) % bound;
            while (lo < threshold) {
                x = next_u64();
                m = static_cast<__uint128_t>(x) * bound;
                lo = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    // Standard normal via Box–Muller (no cached spare: stream state stays
    // trivially serializable).
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();  // log(0) guard
        const double u2 = uniform();
        constexpr double two_pi = 6.283185307179586476925286766559;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    std::array<std::uint64_t, 4> state() const { return state_; }
    void set_state(const std::array<std::uint64_t, 4>& s) { state_ = s; }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }
    std::array<std::uint64_t, 4> state_{};
};

// FNV-1a over the tag, mixed with the root seed.  Stable across platforms.
inline std::uint64_t hash_tag(std::uint64_t seed, std::string_view tag) {
    std::uint64_t h = 0xcbf29ce484222325ULL ^ seed;
    for (const char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    // Finalize so that similar tags give unrelated streams.
    std::uint64_t sm = h;
    return splitmix64(sm);
}

inline Rng derive_stream(std::uint64_t seed, std::string_view tag) {
    return Rng(hash_tag(seed, tag));
}

inline Rng derive_stream(std::uint64_t seed, std::string_view tag, std::uint64_t index) {
    std::uint64_t sm = hash_tag(seed, tag) ^ (0x9e3779b97f4a7c15ULL * (index + 1));
    return Rng(splitmix64(sm));
}

}  // namespace wf
