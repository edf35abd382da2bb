#pragma once

#include <cstdint>
#include <limits>
#include <random>

namespace hypo {

namespace detail {
inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

inline constexpr std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}
}  // namespace detail

/// @brief Counter-based 64-bit generator keyed by (seed, stream_id).
///
/// Output i is a keyed hash of the counter i, so streams are independent of each other
/// and of the order in which they are consumed. Satisfies UniformRandomBitGenerator.
class SeededRng {
public:
    using result_type = std::uint64_t;

    SeededRng(std::uint64_t seed = 0, std::uint64_t stream_id = 0)
        : seed_(seed),
          stream_(stream_id),
          key0_(detail::mix64(seed ^ detail::mix64(stream_id + detail::kGolden))),
          key1_(detail::mix64(key0_ ^ 0xD1B54A32D192ED03ULL)) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() {
        const std::uint64_t x = detail::mix64(counter_++ * detail::kGolden + key0_);
        return detail::mix64(x ^ key1_);
    }

    /// Uniform double in the open interval (0, 1).
    double uniform() { return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53; }

    /// Standard normal variate.
    double normal() { return normal_(*this); }

    /// Independent generator for a child stream.
    SeededRng split(std::uint64_t child) const {
        return SeededRng(seed_, detail::mix64(stream_ * detail::kGolden + child + 1));
    }

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream_id() const noexcept { return stream_; }
    std::uint64_t counter() const noexcept { return counter_; }

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t key0_;
    std::uint64_t key1_;
    std::uint64_t counter_ = 0;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace hypo
