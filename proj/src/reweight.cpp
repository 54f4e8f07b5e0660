#include "supermask/reweight.hpp"

#include "supermask/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace supermask {

std::string_view to_string(ReweightVariant v) {
    switch (v) {
    case ReweightVariant::none: return "none";
    case ReweightVariant::iterand: return "iterand";
    case ReweightVariant::iwr: return "iwr";
    case ReweightVariant::iwr_second_tier: return "iwr_second_tier";
    }
    return "unknown";
}

ReweightVariant parse_variant(std::string_view name) {
    if (name == "none") return ReweightVariant::none;
    if (name == "iterand") return ReweightVariant::iterand;
    if (name == "iwr") return ReweightVariant::iwr;
    if (name == "iwr_second_tier") return ReweightVariant::iwr_second_tier;
    throw InvalidArgument("unknown variant '" + std::string(name) + "'");
}

std::size_t edit_layer(const WeightEdit& edit) {
    return std::visit([](const auto& e) { return e.layer_index; }, edit);
}

bool edit_empty(const WeightEdit& edit) {
    if (const auto* r = std::get_if<RecyclePatch>(&edit)) return r->pairs.empty();
    return std::get<ResamplePatch>(edit).indices.empty();
}

void apply_edit(const WeightEdit& edit, Tensor& weights) {
    const std::size_t n = weights.size();
    auto check = [n](std::uint32_t i) {
        if (i >= n) throw FormatError("weight edit index " + std::to_string(i) + " out of range");
    };
    if (const auto* r = std::get_if<RecyclePatch>(&edit)) {
        for (const IndexPair& p : r->pairs) {
            check(p.dest);
            check(p.source);
            weights[p.dest] = weights[p.source];
        }
        return;
    }
    const auto& s = std::get<ResamplePatch>(edit);
    if (s.indices.size() != s.values.size()) throw FormatError("resample patch length mismatch");
    for (std::size_t i = 0; i < s.indices.size(); ++i) {
        check(s.indices[i]);
        weights[s.indices[i]] = s.values[i];
    }
}

std::size_t recycle_count(std::size_t layer_size, double rate) {
    if (!(rate >= 0.0 && rate <= 1.0)) throw InvalidArgument("recycle rate must lie in [0, 1]");
    return static_cast<std::size_t>(std::floor(rate * static_cast<double>(layer_size) + 1e-9));
}

std::vector<std::uint32_t> ascending_rank_prefix(std::span<const float> scores, std::size_t count) {
    const std::size_t j = scores.size();
    count = std::min(count, j);
    std::vector<std::uint32_t> order(j);
    std::iota(order.begin(), order.end(), 0u);
    auto lower = [&](std::uint32_t a, std::uint32_t b) {
        const float sa = std::fabs(scores[a]);
        const float sb = std::fabs(scores[b]);
        return sa < sb || (sa == sb && a > b);
    };
    const auto mid = order.begin() + static_cast<std::ptrdiff_t>(count);
    if (count < j) std::nth_element(order.begin(), mid, order.end(), lower);
    std::sort(order.begin(), mid, lower);
    order.resize(count);
    return order;
}

LowHigh select_low_high(std::span<const float> scores, double rate) {
    const std::size_t j = scores.size();
    const std::size_t k = recycle_count(j, rate);
    if (2 * k > j) {
        throw InvalidArgument("recycle count " + std::to_string(k) + " exceeds half of layer size " +
                              std::to_string(j));
    }
    LowHigh out;
    if (k == 0) return out;
    out.low = ascending_rank_prefix(scores, k);
    // The top k in descending order is the ascending prefix of the reversed ranking.
    std::vector<std::uint32_t> order(j);
    std::iota(order.begin(), order.end(), 0u);
    auto higher = [&](std::uint32_t a, std::uint32_t b) {
        const float sa = std::fabs(scores[a]);
        const float sb = std::fabs(scores[b]);
        return sa > sb || (sa == sb && a < b);
    };
    const auto mid = order.begin() + static_cast<std::ptrdiff_t>(k);
    if (k < j) std::nth_element(order.begin(), mid, order.end(), higher);
    std::sort(order.begin(), mid, higher);
    order.resize(k);
    out.high = std::move(order);
    return out;
}

namespace {

RecyclePatch apply_pairs(ScoredTensor& layer, const std::vector<std::uint32_t>& dests,
                         const std::vector<std::uint32_t>& sources) {
    RecyclePatch patch;
    patch.layer_index = layer.layer_index;
    patch.pairs.reserve(dests.size());
    for (std::size_t i = 0; i < dests.size(); ++i) patch.pairs.push_back({dests[i], sources[i]});
    apply_edit(patch, layer.weights);
    return patch;
}

} // namespace

RecyclePatch recycle_weights(ScoredTensor& layer, const RecycleSpec& spec) {
    if (spec.variant != ReweightVariant::iwr) throw InvalidArgument("recycle_weights requires variant iwr");
    LowHigh sel = select_low_high(layer.scores.data(), spec.rate);
    return apply_pairs(layer, sel.low, sel.high);
}

RecyclePatch recycle_second_tier(ScoredTensor& layer, const RecycleSpec& spec) {
    if (spec.variant != ReweightVariant::iwr_second_tier) {
        throw InvalidArgument("recycle_second_tier requires variant iwr_second_tier");
    }
    const std::size_t j = layer.scores.size();
    const std::size_t k = recycle_count(j, spec.rate);
    if (2 * k > j) {
        throw InvalidArgument("second-tier recycling needs 2k <= j (k=" + std::to_string(k) +
                              ", j=" + std::to_string(j) + ")");
    }
    if (k == 0) return RecyclePatch{layer.layer_index, {}};
    std::vector<std::uint32_t> ranked = ascending_rank_prefix(layer.scores.data(), 2 * k);
    std::vector<std::uint32_t> dests(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(k));
    std::vector<std::uint32_t> sources(ranked.begin() + static_cast<std::ptrdiff_t>(k), ranked.end());
    return apply_pairs(layer, dests, sources);
}

ResamplePatch rerandomize_pruned(ScoredTensor& layer, const Mask& mask, double rate,
                                 const InitScheme& scheme, RngStream& rng) {
    if (mask.size() != layer.weights.size()) throw ShapeError("rerandomize: mask does not match layer");
    if (!(rate >= 0.0 && rate <= 1.0)) throw InvalidArgument("rerandomization rate must lie in [0, 1]");
    std::vector<std::uint32_t> pruned;
    pruned.reserve(mask.size() - mask.kept());
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (!mask.test(i)) pruned.push_back(static_cast<std::uint32_t>(i));
    }
    if (pruned.empty()) throw InvalidArgument("rerandomize: layer has no pruned weights");

    const auto n = pruned.size();
    const auto m = std::min<std::size_t>(
        n, static_cast<std::size_t>(std::ceil(rate * static_cast<double>(n) - 1e-9)));
    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t pick = i + static_cast<std::size_t>(rng.below(n - i));
        std::swap(pruned[i], pruned[pick]);
    }
    pruned.resize(m);
    std::sort(pruned.begin(), pruned.end());

    const InitSampler sampler(scheme, layer.fan_in);
    ResamplePatch patch;
    patch.layer_index = layer.layer_index;
    patch.indices = std::move(pruned);
    patch.values.reserve(m);
    for (std::size_t i = 0; i < m; ++i) patch.values.push_back(sampler.draw(rng));
    apply_edit(patch, layer.weights);
    return patch;
}

bool should_trigger(int epoch, std::size_t batch, std::size_t batches_per_epoch, const RecycleSpec& spec) {
    if (spec.variant == ReweightVariant::none) return false;
    if (spec.period <= 0) throw InvalidArgument("reweight period must be positive");
    if (batches_per_epoch == 0 || batch >= batches_per_epoch || epoch < 1) return false;
    const auto period = static_cast<std::size_t>(spec.period);
    if (spec.variant == ReweightVariant::iterand) {
        // period triggers per epoch at floor((i+1) B / period) - 1, i = 0..period-1.
        for (std::size_t i = 0; i < period; ++i) {
            const std::size_t pos = (i + 1) * batches_per_epoch / period;
            if (pos >= 1 && pos - 1 == batch) return true;
        }
        return false;
    }
    return batch + 1 == batches_per_epoch && static_cast<std::size_t>(epoch) % period == 0;
}

} // namespace supermask
