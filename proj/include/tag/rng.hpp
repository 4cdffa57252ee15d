#pragma once

#include <cmath>
#include <cstdint>

#include "tag/vec.hpp"

namespace tag {

namespace detail {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

// Finalizer from splitmix64.
inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace detail

// Counter-based generator. Output i of stream s under seed q is a pure
// function of (q, s, i), so parallel workers can draw from disjoint streams
// and results do not depend on scheduling or worker count.
class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t stream)
        : key_(detail::mix64(detail::mix64(seed + detail::kGolden) ^
                             (stream * detail::kGolden + 0x6A09E667F3BCC909ULL))),
          counter_(0),
          have_cached_(false),
          cached_(0.0) {}

    std::uint64_t next_u64() {
        std::uint64_t v = detail::mix64(key_ + counter_ * detail::kGolden);
        ++counter_;
        return v;
    }

    // Uniform on [0, 1), 53-bit resolution.
    double uniform() { return (next_u64() >> 11) * 0x1.0p-53; }

    // Standard normal via the polar-free Box-Muller transform. Hand rolled
    // so that streams are identical across platforms and library versions.
    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        // u1 in (0, 1] keeps the log finite.
        double u1 = ((next_u64() >> 11) + 1) * 0x1.0p-53;
        double u2 = (next_u64() >> 11) * 0x1.0p-53;
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        have_cached_ = true;
        return r * std::cos(a);
    }

    Vec normal_vec(std::size_t d) {
        Vec v(d);
        for (std::size_t i = 0; i < d; ++i) v[i] = normal();
        return v;
    }

private:
    std::uint64_t key_;
    std::uint64_t counter_;
    bool have_cached_;
    double cached_;
};

}  // namespace tag
