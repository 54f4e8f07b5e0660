#include "supermask/init.hpp"

#include "supermask/error.hpp"

#include <cmath>

namespace supermask {

std::string_view to_string(InitKind kind) {
    switch (kind) {
    case InitKind::kaiming_normal: return "kaiming_normal";
    case InitKind::signed_constant: return "signed_constant";
    case InitKind::kaiming_uniform: return "kaiming_uniform";
    }
    return "unknown";
}

InitKind parse_init_kind(std::string_view name) {
    if (name == "kaiming_normal") return InitKind::kaiming_normal;
    if (name == "signed_constant") return InitKind::signed_constant;
    if (name == "kaiming_uniform") return InitKind::kaiming_uniform;
    throw InvalidArgument("unknown init kind '" + std::string(name) + "'");
}

double init_std(const InitScheme& scheme, std::int64_t fan_in) {
    if (fan_in <= 0) throw InvalidArgument("fan_in must be positive, got " + std::to_string(fan_in));
    if (!(scheme.prune_rate >= 0.0 && scheme.prune_rate <= 1.0)) {
        throw InvalidArgument("init prune rate must lie in [0, 1]");
    }
    double fan = static_cast<double>(fan_in);
    if (scheme.scale_fan) {
        if (scheme.prune_rate >= 1.0) throw InvalidArgument("scale_fan is undefined at prune rate 1");
        fan *= 1.0 - scheme.prune_rate;
    }
    return std::sqrt(2.0 / fan);
}

InitSampler::InitSampler(const InitScheme& scheme, std::int64_t fan_in)
    : kind_(scheme.kind), std_(init_std(scheme, fan_in)), bound_(std::sqrt(3.0) * std_) {}

float InitSampler::draw(RngStream& rng) const {
    switch (kind_) {
    case InitKind::kaiming_normal:
        return static_cast<float>(std_ * rng.normal());
    case InitKind::signed_constant:
        return static_cast<float>(rng.normal() < 0.0 ? -std_ : std_);
    case InitKind::kaiming_uniform:
        return static_cast<float>((2.0 * rng.uniform() - 1.0) * bound_);
    }
    return 0.0f;
}

namespace {

Tensor fill_from(const Shape& shape, const InitSampler& sampler, RngStream& rng) {
    Tensor out(shape);
    for (float& v : out.data()) v = sampler.draw(rng);
    return out;
}

} // namespace

Tensor kaiming_normal(const Shape& shape, std::int64_t fan_in, const InitScheme& scheme, RngStream& rng) {
    InitScheme s = scheme;
    s.kind = InitKind::kaiming_normal;
    return fill_from(shape, InitSampler(s, fan_in), rng);
}

Tensor signed_constant(const Shape& shape, std::int64_t fan_in, const InitScheme& scheme,
                       RngStream& rng) {
    InitScheme s = scheme;
    s.kind = InitKind::signed_constant;
    return fill_from(shape, InitSampler(s, fan_in), rng);
}

Tensor kaiming_uniform_scores(const Shape& shape, std::int64_t fan_in, RngStream& rng) {
    return fill_from(shape, InitSampler(InitScheme{InitKind::kaiming_uniform, false, 0.0}, fan_in), rng);
}

Tensor init_tensor(const Shape& shape, std::int64_t fan_in, const InitScheme& scheme, RngStream& rng) {
    return fill_from(shape, InitSampler(scheme, fan_in), rng);
}

} // namespace supermask
