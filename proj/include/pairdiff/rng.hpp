#pragma once

#include <cstdint>
#include <random>

namespace pairdiff {

// Seeded random source. Every operation that draws randomness takes one of
// these explicitly; two Rng instances with the same seed replay the same
// sequence, which is what the determinism contracts lean on.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : engine_(seed) {}

    double normal() { return normal_(engine_); }
    double uniform() { return uniform_(engine_); }

    // Uniform integer in [lo, hi] inclusive.
    int64_t uniform_int(int64_t lo, int64_t hi) {
        std::uniform_int_distribution<int64_t> d(lo, hi);
        return d(engine_);
    }

    double uniform_in(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    bool bernoulli(double p) { return uniform() < p; }

    // Derive an independent stream (for parallel workers / per-arm seeds).
    Rng fork() { return Rng(engine_()); }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace pairdiff
