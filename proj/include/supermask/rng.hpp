#pragma once

#include <cstdint>
#include <initializer_list>
#include <optional>

namespace supermask {

/// Stream tags used to derive independent generators from one run seed.
enum class StreamTag : std::uint64_t {
    weights = 1,
    scores = 2,
    data_order = 3,
    rerandomize = 4,
    synthetic = 5,
    probe = 6,
};

/// SplitMix64 generator with Box-Muller normals.
///
/// Only integer arithmetic feeds the state, so a given seed yields the same
/// raw sequence everywhere. Normals come in Box-Muller pairs; the second
/// value of each pair is cached and returned by the next `normal()` call.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed = 0) noexcept : state_(seed) {}

    /// Stream for (seed, tag, indices...), e.g. derive(weight_seed, weights, {layer}).
    static RngStream derive(std::uint64_t seed, StreamTag tag,
                            std::initializer_list<std::uint64_t> indices = {}) noexcept;

    std::uint64_t next_u64() noexcept;

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() noexcept;

    /// Uniform integer in [0, bound). bound must be > 0.
    std::uint64_t below(std::uint64_t bound) noexcept;

    /// Standard normal N(0, 1).
    double normal() noexcept;

    std::uint64_t state() const noexcept { return state_; }

private:
    std::uint64_t state_;
    std::optional<double> spare_normal_;
};

/// SplitMix64 finalizer; also used to hash seeds together.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

} // namespace supermask
