#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace searth {

// Counter-based generator: every value is a pure function of
// (seed, stream name, extra indices, draw counter). Streams never share
// state, so draw order across streams cannot change results and resuming
// a run at iteration i replays the exact randomness of iteration i.

namespace detail {

constexpr uint64_t mix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

constexpr uint64_t fnv1a(std::string_view s) {
    uint64_t h = 0xCBF29CE484222325ull;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ull;
    }
    return h;
}

}  // namespace detail

class RngStream {
public:
    explicit RngStream(uint64_t key) : key_(key) {}

    uint64_t next_u64() { return detail::mix64(key_ ^ detail::mix64(++counter_)); }

    // [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // (0, 1]
    double uniform_open() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

    double normal() {
        const double u1 = uniform_open();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    // Uniform integer in [0, n)
    uint64_t below(uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

    uint64_t counter() const { return counter_; }

private:
    uint64_t key_;
    uint64_t counter_ = 0;
};

class Rng {
public:
    explicit Rng(uint64_t seed) : seed_(seed) {}

    uint64_t seed() const { return seed_; }

    RngStream stream(std::string_view name) const {
        return RngStream(detail::mix64(seed_ ^ detail::fnv1a(name)));
    }

    RngStream stream(std::string_view name, uint64_t a) const {
        return RngStream(detail::mix64(detail::mix64(seed_ ^ detail::fnv1a(name)) + detail::mix64(a)));
    }

    RngStream stream(std::string_view name, uint64_t a, uint64_t b) const {
        uint64_t k = detail::mix64(seed_ ^ detail::fnv1a(name));
        k = detail::mix64(k + detail::mix64(a));
        return RngStream(detail::mix64(k + detail::mix64(b)));
    }

private:
    uint64_t seed_;
};

}  // namespace searth
