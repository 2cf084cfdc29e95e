#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "gather/core.hpp"

namespace gather {

// Seeded stream used by every randomized builder.
//
// The raw engine is std::mt19937_64, whose output sequence is fixed by the
// standard. The derived draws below avoid <random> distributions (their
// algorithms are implementation-defined) so that families built from the same
// seed are identical on every conforming toolchain.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    // Uniform integer in [0, bound), by rejection.
    std::uint64_t below(std::uint64_t bound) {
        if (bound <= 1)
            return 0;
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                    std::numeric_limits<std::uint64_t>::max() % bound;
        std::uint64_t x;
        do {
            x = next();
        } while (x >= limit);
        return x % bound;
    }

    // True with probability 1/denominator (denominator >= 1).
    bool one_in(std::uint64_t denominator) {
        if (denominator <= 1)
            return true;
        return next() < std::numeric_limits<std::uint64_t>::max() / denominator;
    }

    // Uniform k-subset of [0, n), sorted (Floyd's algorithm).
    std::vector<Label> subset(std::size_t n, std::size_t k) {
        std::vector<Label> out;
        out.reserve(k);
        for (std::size_t j = n - k; j < n; ++j) {
            auto t = static_cast<Label>(below(j + 1));
            if (std::find(out.begin(), out.end(), t) == out.end())
                out.push_back(t);
            else
                out.push_back(static_cast<Label>(j));
        }
        std::sort(out.begin(), out.end());
        return out;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i)
            std::swap(v[i - 1], v[below(i)]);
    }

private:
    std::mt19937_64 engine_;
};

// Mixes a base seed with a stream tag and parameters (splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag, std::uint64_t a = 0,
                                 std::uint64_t b = 0) {
    auto mix = [](std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    std::uint64_t h = mix(seed);
    for (char c : tag)
        h = mix(h ^ static_cast<unsigned char>(c));
    h = mix(h ^ a);
    h = mix(h ^ b);
    return h;
}

}  // namespace gather
