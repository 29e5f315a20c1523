#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace uvd {

// I/O failures (missing files, short reads, bad magic). CLI exit code 4.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Config parse/validation failures, config-hash mismatches. CLI exit code 3.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failures (non-finite loss, eigensolver breakdown). CLI exit code 5.
struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Deterministic RNG. normal() uses Box-Muller without caching so the
// number of underlying draws per call is fixed (2 per normal).
class Rng {
  public:
    explicit Rng(uint64_t seed) : seed_(seed), eng_(seed) {}

    uint64_t next_u64() { return eng_(); }

    // [0, 1)
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double normal() {
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    // inclusive bounds, unbiased via rejection
    int64_t uniform_int(int64_t lo, int64_t hi) {
        if (lo > hi) throw std::invalid_argument("uniform_int: lo > hi");
        uint64_t span = uint64_t(hi - lo) + 1;
        if (span == 0) return int64_t(next_u64());  // full 64-bit range
        uint64_t limit = UINT64_MAX - UINT64_MAX % span;
        uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return lo + int64_t(x % span);
    }

    // independent stream derived from this rng's seed
    Rng fork(uint64_t stream) const { return Rng(splitmix64(seed_ ^ splitmix64(stream + 1))); }

    uint64_t seed() const { return seed_; }

  private:
    uint64_t seed_;
    std::mt19937_64 eng_;
};

}  // namespace uvd
