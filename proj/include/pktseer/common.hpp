#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace pktseer {

// Error taxonomy mirrored by the CLI exit codes: usage/config -> 2,
// bad input data -> 3, training divergence -> 4.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TrainingDivergence : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// splitmix64 step, used to derive independent stream seeds from one seed.
inline uint64_t mix_seed(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline uint64_t mix_seed(uint64_t a, uint64_t b) { return mix_seed(mix_seed(a) ^ b); }
inline uint64_t mix_seed(uint64_t a, uint64_t b, uint64_t c) {
    return mix_seed(mix_seed(a, b) ^ c);
}

}  // namespace pktseer
