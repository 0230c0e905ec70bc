#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

namespace clusterrank {

/// SplitMix64: tiny 64-bit generator with full-period state walk.
/// Used both as the working generator and to derive independent
/// sub-stream seeds, so results never depend on draw interleaving.
class SplitMix64 {
public:
    using result_type = std::uint64_t;

    explicit SplitMix64(std::uint64_t seed = 0) : state_(seed) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return ~result_type{0}; }

    result_type operator()() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t state_;
};

namespace detail {
inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}
}  // namespace detail

/// Deterministic sub-seed: hash(seed, parts...). Each tagged stream is
/// independent of every other, so parallel consumers can draw freely.
template <class... Parts>
std::uint64_t derive_seed(std::uint64_t seed, Parts... parts) {
    std::uint64_t h = detail::mix64(seed ^ 0x2545f4914f6cdd1dull);
    ((h = detail::mix64(h ^ (static_cast<std::uint64_t>(parts) + 0x9e3779b97f4a7c15ull))), ...);
    return h;
}

/// Seeded random stream with the handful of draw kinds this project needs.
/// Normal draws use Box-Muller with a one-value cache; all algorithms are
/// spelled out here so streams are reproducible across platforms.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed) : gen_(seed) {}

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, bound) by rejection (unbiased).
    std::uint64_t uniform_below(std::uint64_t bound) {
        if (bound == 0) throw std::invalid_argument("uniform_below: bound must be positive");
        const std::uint64_t limit = SplitMix64::max() - SplitMix64::max() % bound;
        std::uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return x % bound;
    }

    /// Standard normal draw.
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * std::numbers::pi * u2;
        cached_ = r * std::sin(a);
        has_cached_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    /// Poisson draw by Knuth's product method; fine for the rates used here.
    int poisson(double rate) {
        if (!(rate > 0.0)) throw std::invalid_argument("poisson: rate must be positive");
        const double threshold = std::exp(-rate);
        int k = 0;
        double p = 1.0;
        do {
            ++k;
            p *= uniform();
        } while (p > threshold);
        return k - 1;
    }

    /// Poisson conditioned on [lo, hi] by resampling.
    int truncated_poisson(double rate, int lo, int hi) {
        if (lo > hi) throw std::invalid_argument("truncated_poisson: empty range");
        int k;
        do {
            k = poisson(rate);
        } while (k < lo || k > hi);
        return k;
    }

    /// In-place Fisher-Yates shuffle.
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(uniform_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    /// k distinct indices from [0, n), in draw order (partial Fisher-Yates).
    std::vector<std::uint32_t> sample_indices(std::uint32_t n, std::uint32_t k) {
        if (k > n) throw std::invalid_argument("sample_indices: k exceeds n");
        std::vector<std::uint32_t> pool(n);
        for (std::uint32_t i = 0; i < n; ++i) pool[i] = i;
        for (std::uint32_t i = 0; i < k; ++i) {
            const std::uint32_t j = i + static_cast<std::uint32_t>(uniform_below(n - i));
            std::swap(pool[i], pool[j]);
        }
        pool.resize(k);
        return pool;
    }

private:
    SplitMix64 gen_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

}  // namespace clusterrank
