#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace fairkd {

// Portable seeded stream. The standard distributions are implementation
// defined, so uniform/normal/integer draws are derived here directly from
// the raw mt19937_64 output to keep runs bit-identical across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform on [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer on [0, bound). bound must be > 0.
    std::uint64_t below(std::uint64_t bound);

    // Standard normal via Box-Muller; caches the second variate.
    double normal();

    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::mt19937_64 engine_;
    double cached_normal_ = 0.0;
    bool has_cached_ = false;
};

std::uint64_t splitmix64(std::uint64_t x);

// Derives an independent seed for a named sub-stream of a root seed.
std::uint64_t derive_seed(std::uint64_t root, std::string_view label);

}  // namespace fairkd
