#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

namespace firepost {

/// Seedable 64-bit splitmix generator. Implemented here rather than taken
/// from <random> so that every seeded artifact (corpora, model weights,
/// shuffles) is bit-identical across platforms and standard libraries.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    /// Derive an independent stream, e.g. per scene index.
    static Rng derive(std::uint64_t seed, std::uint64_t index) {
        Rng mixer(seed);
        mixer.state_ ^= (index + 1) * 0x9E3779B97F4A7C15ULL;
        mixer.next_u64();
        return mixer;
    }

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0,1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n = 0 returns 0.
    std::uint64_t uniform_index(std::uint64_t n) {
        if (n == 0) return 0;
        // Rejection sampling to avoid modulo bias.
        const std::uint64_t limit = n * (UINT64_MAX / n);
        std::uint64_t v;
        do {
            v = next_u64();
        } while (v >= limit);
        return v % n;
    }

    int uniform_int(int lo, int hi) {  // inclusive range
        return lo + static_cast<int>(uniform_index(static_cast<std::uint64_t>(hi - lo + 1)));
    }

    bool bernoulli(double p) { return uniform() < p; }

    /// Box-Muller; consumes two uniforms per call, no state carried over.
    double normal(double mean = 0.0, double stddev = 1.0) {
        double u1 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * r * std::cos(6.283185307179586477 * u2);
    }

    /// Knuth's product method; fine for the small rates used here.
    int poisson(double rate) {
        if (rate <= 0.0) return 0;
        const double limit = std::exp(-rate);
        int k = 0;
        double p = 1.0;
        do {
            ++k;
            p *= uniform();
        } while (p > limit);
        return k - 1;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(uniform_index(i));
            std::swap(v[i - 1], v[j]);
        }
    }

  private:
    std::uint64_t state_;
};

}  // namespace firepost
