#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>

namespace qpae {

// xorshift64* seeded through splitmix64 so that small or zero seeds still
// produce a well-mixed state. Deterministic across platforms.
class Rng {
public:
    explicit Rng(std::uint64_t seed) noexcept {
        std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        state_ = z ^ (z >> 31);
        if (state_ == 0) state_ = 0x2545F4914F6CDD1DULL;
    }

    std::uint64_t next() noexcept {
        state_ ^= state_ >> 12;
        state_ ^= state_ << 25;
        state_ ^= state_ >> 27;
        return state_ * 0x2545F4914F6CDD1DULL;
    }

    /// Uniform in [0, 1) with 53 bits of resolution.
    double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be nonzero.
    std::uint64_t below(std::uint64_t n) noexcept {
        // Lemire's multiply-shift; the tiny bias is irrelevant at our sizes.
        return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next()) * n) >> 64);
    }

    /// Standard normal via Box-Muller; the second variate is cached.
    double normal() noexcept {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double t = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(t);
        has_spare_ = true;
        return r * std::cos(t);
    }

    double normal(double mean, double sigma) noexcept { return mean + sigma * normal(); }

    template <class T>
    void shuffle(std::span<T> items) noexcept {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::uint64_t state_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace qpae
