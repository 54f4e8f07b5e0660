#pragma once

#include "supermask/rng.hpp"
#include "supermask/tensor.hpp"

#include <cstdint>
#include <string>
#include <string_view>

namespace supermask {

enum class InitKind : std::uint8_t {
    kaiming_normal = 0,
    signed_constant = 1,
    kaiming_uniform = 2,
};

std::string_view to_string(InitKind kind);
InitKind parse_init_kind(std::string_view name);

/// Weight distribution for one layer. The ReLU gain sqrt(2) is fixed.
///
/// With `scale_fan`, the effective fan-in is fan_in * (1 - prune_rate),
/// compensating for the fraction of inputs the mask removes.
struct InitScheme {
    InitKind kind = InitKind::kaiming_normal;
    bool scale_fan = false;
    double prune_rate = 0.0;

    friend bool operator==(const InitScheme&, const InitScheme&) = default;
};

/// Standard deviation sqrt(2 / fan_eff) for the scheme. Throws on fan_in <= 0
/// or scale_fan with prune rate 1.
double init_std(const InitScheme& scheme, std::int64_t fan_in);

/// Draws single elements from a scheme; shared by the tensor initializers and
/// by rerandomization so both sample identically.
class InitSampler {
public:
    InitSampler(const InitScheme& scheme, std::int64_t fan_in);
    float draw(RngStream& rng) const;
    double stddev() const noexcept { return std_; }

private:
    InitKind kind_;
    double std_;
    double bound_;
};

/// N(0, sigma^2), sigma = sqrt(2 / fan_eff).
Tensor kaiming_normal(const Shape& shape, std::int64_t fan_in, const InitScheme& scheme, RngStream& rng);

/// sign(N(0, sigma^2)) * sigma: every magnitude equals sigma.
Tensor signed_constant(const Shape& shape, std::int64_t fan_in, const InitScheme& scheme,
                       RngStream& rng);

/// U[-b, b], b = sqrt(6 / fan_in). Used for scores.
Tensor kaiming_uniform_scores(const Shape& shape, std::int64_t fan_in, RngStream& rng);

/// Dispatches on scheme.kind.
Tensor init_tensor(const Shape& shape, std::int64_t fan_in, const InitScheme& scheme, RngStream& rng);

} // namespace supermask
