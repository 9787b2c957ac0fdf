#ifndef SEGCERT_RNG_HPP
#define SEGCERT_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

namespace segcert {

// mt19937_64 with hand-rolled distributions. std::uniform_real_distribution
// and friends are not bit-stable across standard libraries; these are, so
// seeded tests freeze the same values everywhere.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    // Uniform in [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller; second value cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    // Uniform integer in [0, n); n > 0. Modulo bias is irrelevant here
    // (n is tiny against 2^64) and the result is platform-stable.
    std::uint64_t uniform_int(std::uint64_t n) { return gen_() % n; }

    std::uint64_t raw() { return gen_(); }

private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace segcert

#endif
