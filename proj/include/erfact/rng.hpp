// Deterministic RNG: the standard-specified mt19937_64 stream with
// hand-rolled uniform/normal transforms, so identical seeds reproduce
// identical draws (std::*_distribution would be implementation-defined).
#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace erfact::detail {

class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    double uniform() {  // [0, 1)
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal() {  // Box-Muller, one spare cached
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }
    std::uint64_t next_u64() { return eng_(); }
    // bounded draw without modulo bias worth worrying about at these sizes
    std::size_t index(std::size_t n) {
        return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
    }

private:
    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// splitmix-style mix for deriving per-epoch shuffle seeds
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace erfact::detail
