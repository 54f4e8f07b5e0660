#pragma once

#include "supermask/init.hpp"
#include "supermask/rng.hpp"
#include "supermask/subnet.hpp"

#include <cstdint>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

namespace supermask {

enum class ReweightVariant : std::uint8_t {
    none = 0,
    iterand = 1,         ///< rerandomize a fraction of pruned weights
    iwr = 2,             ///< iterative weight recycling
    iwr_second_tier = 3, ///< recycling ablation: sources from the second-lowest score block
};

std::string_view to_string(ReweightVariant v);
ReweightVariant parse_variant(std::string_view name);

/// When and how much of each layer to edit.
///
/// `period` counts epochs for the recycling variants (trigger at the end of
/// every period-th epoch) and triggers per epoch for iterand.
struct RecycleSpec {
    double rate = 0.2;
    int period = 10;
    ReweightVariant variant = ReweightVariant::none;
};

struct IndexPair {
    std::uint32_t dest;
    std::uint32_t source;
    friend bool operator==(const IndexPair&, const IndexPair&) = default;
};

/// weights[dest] <- weights[source] for every pair; dests and sources are
/// disjoint, so pairs apply in any order.
struct RecyclePatch {
    std::size_t layer_index = 0;
    std::vector<IndexPair> pairs;
    friend bool operator==(const RecyclePatch&, const RecyclePatch&) = default;
};

/// weights[indices[i]] <- values[i].
struct ResamplePatch {
    std::size_t layer_index = 0;
    std::vector<std::uint32_t> indices;
    std::vector<float> values;
    friend bool operator==(const ResamplePatch&, const ResamplePatch&) = default;
};

/// One logged edit of a layer's weight population, replayable onto freshly
/// regenerated weights.
using WeightEdit = std::variant<RecyclePatch, ResamplePatch>;

std::size_t edit_layer(const WeightEdit& edit);
bool edit_empty(const WeightEdit& edit);
void apply_edit(const WeightEdit& edit, Tensor& weights);

/// floor(r * j), tolerant to representation error in r * j.
std::size_t recycle_count(std::size_t layer_size, double rate);

/// First `count` indices in ascending |S| order. Among equal |S| the higher
/// index ranks lower, matching the mask tie-break.
std::vector<std::uint32_t> ascending_rank_prefix(std::span<const float> scores, std::size_t count);

struct LowHigh {
    std::vector<std::uint32_t> low;  ///< k smallest |S|, ascending
    std::vector<std::uint32_t> high; ///< k largest |S|, descending
};

/// k = floor(r * j) lowest and highest scoring indices. Empty when k = 0;
/// throws when 2k > j.
LowHigh select_low_high(std::span<const float> scores, double rate);

/// Iterative weight recycling: the i-th lowest-score slot receives the weight
/// of the i-th highest-score slot. Scores are untouched.
RecyclePatch recycle_weights(ScoredTensor& layer, const RecycleSpec& spec);

/// Ablation: sources are ranks k+1..2k in ascending |S| order.
RecyclePatch recycle_second_tier(ScoredTensor& layer, const RecycleSpec& spec);

/// Resamples ceil(r * #pruned) pruned weights, chosen uniformly without
/// replacement, from `scheme`. Kept weights are not touched.
ResamplePatch rerandomize_pruned(ScoredTensor& layer, const Mask& mask, double rate,
                                 const InitScheme& scheme, RngStream& rng);

/// `epoch` is 1-based and refers to the epoch in progress; `batch` is the
/// 0-based batch index within it.
bool should_trigger(int epoch, std::size_t batch, std::size_t batches_per_epoch, const RecycleSpec& spec);

} // namespace supermask
