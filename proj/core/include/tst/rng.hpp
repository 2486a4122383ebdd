#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace tst {

// Seeded mt19937_64 with hand-written distributions; the draw sequence is portable.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }

    std::uint64_t next_u64() { return engine_(); }

    // [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller; consumes two uniforms per call.
    double normal(double mean = 0.0, double stddev = 1.0);

    // Unbiased integer in [0, n).
    std::uint64_t below(std::uint64_t n);

    // Fisher-Yates.
    template <class T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

}  // namespace tst
