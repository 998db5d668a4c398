#pragma once
// Deterministic random number generation.
//
// Every stochastic step in the toolkit draws from these generators so that a
// single top-level seed reproduces an entire experiment bit for bit on any
// platform. SplitMix64 follows Vigna's reference (used for seeding and seed
// fan-out); Xoshiro256** follows the Blackman/Vigna reference (used for
// streams: shuffles, dataset synthesis, parameter init). Semantics are pinned
// by test vectors in the unit suite.

#include <cstdint>
#include <string_view>
#include <vector>

namespace casc::rng {

struct SplitMix64 {
    std::uint64_t state;

    explicit SplitMix64(std::uint64_t seed) : state(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }
};

inline std::uint64_t rotl64(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

class Xoshiro256StarStar {
public:
    explicit Xoshiro256StarStar(std::uint64_t seed) {
        SplitMix64 sm(seed);
        for (auto& w : s_) w = sm.next();
    }

    std::uint64_t next() {
        const std::uint64_t result = rotl64(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl64(s_[3], 45);
        return result;
    }

    // Uniform double in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [0, bound) via rejection sampling.
    std::uint64_t next_below(std::uint64_t bound) {
        const std::uint64_t threshold = (0 - bound) % bound;
        for (;;) {
            const std::uint64_t r = next();
            if (r >= threshold) return r % bound;
        }
    }

    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) { // inclusive range
        return lo + static_cast<std::int64_t>(next_below(static_cast<std::uint64_t>(hi - lo + 1)));
    }

    // Set the raw state; used only by the test vectors.
    void set_state(std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t d) {
        s_[0] = a; s_[1] = b; s_[2] = c; s_[3] = d;
    }

private:
    std::uint64_t s_[4];
};

// Fisher-Yates shuffle, high index down, driven by next_below.
template <typename T>
void shuffle(std::vector<T>& items, Xoshiro256StarStar& gen) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(gen.next_below(i));
        std::swap(items[i - 1], items[j]);
    }
}

inline std::uint64_t fnv1a64(std::string_view text) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

// Named sub-seed derivation: one top-level seed fans out into independent
// per-domain streams ("dataset", "split", "shuffle", "init", "noise", ...).
inline std::uint64_t derive_seed(std::uint64_t top_seed, std::string_view domain) {
    SplitMix64 sm(top_seed ^ fnv1a64(domain));
    return sm.next();
}

inline std::uint64_t derive_seed(std::uint64_t top_seed, std::string_view domain,
                                 std::uint64_t index) {
    SplitMix64 sm(derive_seed(top_seed, domain) ^ (0x9E3779B97F4A7C15ULL * (index + 1)));
    return sm.next();
}

} // namespace casc::rng
