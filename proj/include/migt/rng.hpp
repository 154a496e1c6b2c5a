#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace migt {

/// SplitMix64 finalizer; derives independent stream seeds from (seed, tag).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag);

/// Seeded random stream with platform-stable conversions.
///
/// std::mt19937_64 output is fixed by the standard but the std distributions
/// are not, so uniform/normal are computed here from raw 64-bit draws.
class Rng {
   public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }
    /// Uniform in [0, 1).
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Standard normal via Box-Muller.
    double normal();
    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);

    template <typename T>
    void shuffle(std::vector<T>& values) {
        for (std::size_t i = values.size(); i > 1; --i) {
            auto j = static_cast<std::size_t>(below(i));
            std::swap(values[i - 1], values[j]);
        }
    }

   private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace migt
