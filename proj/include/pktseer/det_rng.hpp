#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "pktseer/common.hpp"

namespace pktseer {

// Deterministic RNG wrapper. The mt19937_64 engine output is fixed by the
// standard; every distribution here is hand-rolled on top of raw engine
// words so results are identical across standard libraries and platforms.
class DetRng {
public:
    explicit DetRng(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    // uniform in [0, bound) without modulo bias
    uint64_t uniform_u64(uint64_t bound) {
        if (bound == 0) throw UsageError("uniform_u64: bound must be positive");
        uint64_t threshold = (0 - bound) % bound;  // 2^64 mod bound
        for (;;) {
            uint64_t x = engine_();
            if (x >= threshold) return x % bound;
        }
    }

    size_t index(size_t n) { return static_cast<size_t>(uniform_u64(n)); }

    // uniform in [0,1) with 53 random bits
    double uniform_real() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    bool bernoulli(double p) { return uniform_real() < p; }

    double normal(double mu, double sigma) {
        if (has_spare_) {
            has_spare_ = false;
            return mu + spare_ * sigma;
        }
        double u = 1.0 - uniform_real();
        double v = uniform_real();
        double r = std::sqrt(-2.0 * std::log(u));
        double theta = 6.283185307179586 * v;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return mu + r * std::cos(theta) * sigma;
    }

    // Knuth's product method; fine for the small means used here.
    uint64_t poisson(double lambda) {
        double limit = std::exp(-lambda);
        uint64_t k = 0;
        double p = 1.0;
        do {
            ++k;
            p *= uniform_real();
        } while (p > limit);
        return k - 1;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace pktseer
