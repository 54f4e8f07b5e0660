#pragma once

#include "supermask/init.hpp"
#include "supermask/tape.hpp"
#include "supermask/tensor.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace supermask {

enum class Algorithm : std::uint8_t {
    edge_popup = 0, ///< effective weights theta * M
    biprop = 1,     ///< effective weights alpha * sign(theta) * M
};

std::string_view to_string(Algorithm alg);
Algorithm parse_algorithm(std::string_view name);

/// Frozen random weights paired with trainable scores of the same shape.
struct ScoredTensor {
    ScoredTensor() = default;
    ScoredTensor(Tensor weights_, Tensor scores_, std::int64_t fan_in_, std::size_t layer_index_,
                 InitScheme scheme_ = {});

    Tensor weights;
    Tensor scores;
    std::int64_t fan_in = 0;
    std::size_t layer_index = 0;
    InitScheme scheme; ///< distribution the weights were drawn from
};

/// Per-layer binary selector stored as a packed bitset.
class Mask {
public:
    Mask() = default;
    Mask(std::size_t length, double prune_rate = 0.0);

    /// From one 0/1 byte per element.
    static Mask from_bits(std::span<const std::uint8_t> bits, double prune_rate = 0.0);
    /// From LSB-first packed bytes (ceil(length / 8) of them). Stray high
    /// bits in the final byte are rejected.
    static Mask from_packed(std::size_t length, std::span<const std::uint8_t> packed, double prune_rate);

    std::size_t size() const noexcept { return length_; }
    std::size_t kept() const noexcept { return kept_; }
    double prune_rate() const noexcept { return prune_rate_; }

    bool test(std::size_t i) const noexcept { return (words_[i >> 6] >> (i & 63)) & 1u; }
    void set(std::size_t i, bool on);

    std::span<const std::uint64_t> words() const noexcept { return words_; }
    std::vector<std::uint8_t> packed_bytes() const;
    std::vector<std::uint8_t> to_bits() const;

    friend bool operator==(const Mask& a, const Mask& b) {
        return a.length_ == b.length_ && a.words_ == b.words_;
    }

private:
    std::size_t length_ = 0;
    std::size_t kept_ = 0;
    double prune_rate_ = 0.0;
    std::vector<std::uint64_t> words_;
};

/// Biprop scale: mean |theta| over kept positions.
struct LayerAlpha {
    float value = 0.0f;
};

/// Number of entries kept in a layer of size j at prune rate p: round((1-p) j),
/// halves rounded away from zero.
std::size_t kept_count(std::size_t layer_size, double prune_rate);

/// Keeps the round((1-p) j) largest |S|. Equal |S| resolve to the lower flat
/// index. Throws when the kept count would be zero or p is outside [0, 1).
Mask compute_mask(std::span<const float> scores, double prune_rate);
Mask compute_mask(const Tensor& scores, double prune_rate);

/// alpha = (sum of kept |theta|) / k.
LayerAlpha compute_alpha(const Tensor& weights, const Mask& mask);

/// theta * M (edge-popup) or alpha * sign(theta) * M (biprop), sign(0) = +1.
Tensor effective_weights(const Tensor& weights, const Mask& mask, Algorithm alg,
                         std::optional<LayerAlpha> alpha = std::nullopt);
Tensor effective_weights(const ScoredTensor& layer, const Mask& mask, Algorithm alg,
                         std::optional<LayerAlpha> alpha = std::nullopt);

/// Straight-through estimate through the mask: the mask acts as identity, so
/// the gradient w.r.t. the ranked magnitude |S_i| is dL/dWeff_i * v_i with
/// v = theta (edge-popup) or alpha * sign(theta) (biprop). Pruned positions
/// receive gradient too. For non-negative scores this is dL/dS itself.
Tensor score_gradient(const Tensor& grad_effective, const ScoredTensor& layer, Algorithm alg,
                      std::optional<LayerAlpha> alpha = std::nullopt);

/// Records the effective weights of `layer` on the tape as a function of the
/// score leaf `scores`. Backward applies `score_gradient` and then the chain
/// rule through |S| (the mask ranks magnitudes), so dL/dS_i carries a factor
/// sign(S_i) with sign(0) = +1. `layer` must stay alive and unmodified until
/// backward has run.
Var scored_weight(Tape<float>& tape, Var scores, const ScoredTensor& layer, const Mask& mask,
                  Algorithm alg, std::optional<LayerAlpha> alpha);

} // namespace supermask
