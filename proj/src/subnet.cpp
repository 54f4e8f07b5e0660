#include "supermask/subnet.hpp"

#include "supermask/error.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <string>

namespace supermask {

std::string_view to_string(Algorithm alg) {
    return alg == Algorithm::edge_popup ? "edge_popup" : "biprop";
}

Algorithm parse_algorithm(std::string_view name) {
    if (name == "edge_popup") return Algorithm::edge_popup;
    if (name == "biprop") return Algorithm::biprop;
    throw InvalidArgument("unknown algorithm '" + std::string(name) + "'");
}

ScoredTensor::ScoredTensor(Tensor weights_, Tensor scores_, std::int64_t fan_in_, std::size_t layer_index_,
                           InitScheme scheme_)
    : weights(std::move(weights_)), scores(std::move(scores_)), fan_in(fan_in_), layer_index(layer_index_),
      scheme(scheme_) {
    if (weights.shape() != scores.shape()) {
        throw ShapeError("weights " + shape_string(weights.shape()) + " and scores " +
                         shape_string(scores.shape()) + " differ in shape");
    }
}

// ---------------------------------------------------------------------------
// Mask

Mask::Mask(std::size_t length, double prune_rate)
    : length_(length), prune_rate_(prune_rate), words_((length + 63) / 64, 0) {}

Mask Mask::from_bits(std::span<const std::uint8_t> bits, double prune_rate) {
    Mask m(bits.size(), prune_rate);
    for (std::size_t i = 0; i < bits.size(); ++i) {
        if (bits[i]) m.set(i, true);
    }
    return m;
}

Mask Mask::from_packed(std::size_t length, std::span<const std::uint8_t> packed, double prune_rate) {
    if (packed.size() != (length + 7) / 8) {
        throw FormatError("packed mask has " + std::to_string(packed.size()) + " bytes, expected " +
                          std::to_string((length + 7) / 8));
    }
    Mask m(length, prune_rate);
    for (std::size_t b = 0; b < packed.size(); ++b) {
        m.words_[b / 8] |= static_cast<std::uint64_t>(packed[b]) << (8 * (b % 8));
    }
    if (length % 64 != 0 && !m.words_.empty()) {
        const std::uint64_t tail = m.words_.back() >> (length % 64);
        if (tail != 0) throw FormatError("packed mask has bits set past its length");
    }
    for (std::uint64_t w : m.words_) m.kept_ += static_cast<std::size_t>(std::popcount(w));
    return m;
}

void Mask::set(std::size_t i, bool on) {
    const std::uint64_t bit = std::uint64_t{1} << (i & 63);
    std::uint64_t& w = words_[i >> 6];
    const bool was = (w & bit) != 0;
    if (on && !was) {
        w |= bit;
        ++kept_;
    } else if (!on && was) {
        w &= ~bit;
        --kept_;
    }
}

std::vector<std::uint8_t> Mask::packed_bytes() const {
    std::vector<std::uint8_t> out((length_ + 7) / 8);
    for (std::size_t b = 0; b < out.size(); ++b) {
        out[b] = static_cast<std::uint8_t>(words_[b / 8] >> (8 * (b % 8)));
    }
    return out;
}

std::vector<std::uint8_t> Mask::to_bits() const {
    std::vector<std::uint8_t> out(length_);
    for (std::size_t i = 0; i < length_; ++i) out[i] = test(i) ? 1 : 0;
    return out;
}

// ---------------------------------------------------------------------------
// Mask selection

std::size_t kept_count(std::size_t layer_size, double prune_rate) {
    if (!(prune_rate >= 0.0 && prune_rate < 1.0)) {
        throw InvalidArgument("prune rate must lie in [0, 1), got " + std::to_string(prune_rate));
    }
    return static_cast<std::size_t>(std::llround((1.0 - prune_rate) * static_cast<double>(layer_size)));
}

Mask compute_mask(std::span<const float> scores, double prune_rate) {
    const std::size_t j = scores.size();
    const std::size_t k = kept_count(j, prune_rate);
    if (k == 0) {
        throw InvalidArgument("prune rate " + std::to_string(prune_rate) + " removes every weight of a " +
                              std::to_string(j) + "-element layer");
    }
    Mask mask(j, prune_rate);
    if (k == j) {
        for (std::size_t i = 0; i < j; ++i) mask.set(i, true);
        return mask;
    }
    for (float s : scores) {
        if (!std::isfinite(s)) throw NumericError("non-finite score");
    }
    std::vector<std::uint32_t> order(j);
    std::iota(order.begin(), order.end(), 0u);
    // Strict total order: larger |S| first, then lower index.
    auto before = [&](std::uint32_t a, std::uint32_t b) {
        const float sa = std::fabs(scores[a]);
        const float sb = std::fabs(scores[b]);
        return sa > sb || (sa == sb && a < b);
    };
    std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), before);
    for (std::size_t i = 0; i < k; ++i) mask.set(order[i], true);
    return mask;
}

Mask compute_mask(const Tensor& scores, double prune_rate) {
    return compute_mask(scores.data(), prune_rate);
}

LayerAlpha compute_alpha(const Tensor& weights, const Mask& mask) {
    if (weights.size() != mask.size()) {
        throw ShapeError("alpha: mask length " + std::to_string(mask.size()) + " vs " +
                         std::to_string(weights.size()) + " weights");
    }
    if (mask.kept() == 0) throw InvalidArgument("alpha: empty mask");
    double l1 = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (mask.test(i)) l1 += std::fabs(static_cast<double>(weights[i]));
    }
    return LayerAlpha{static_cast<float>(l1 / static_cast<double>(mask.kept()))};
}

namespace {

inline float sign_of(float v) { return v < 0.0f ? -1.0f : 1.0f; }

void check_alpha(Algorithm alg, const std::optional<LayerAlpha>& alpha) {
    if (alg == Algorithm::biprop && !alpha) throw InvalidArgument("biprop requires a layer alpha");
}

} // namespace

Tensor effective_weights(const Tensor& weights, const Mask& mask, Algorithm alg,
                         std::optional<LayerAlpha> alpha) {
    if (weights.size() != mask.size()) {
        throw ShapeError("effective weights: mask length " + std::to_string(mask.size()) + " vs " +
                         std::to_string(weights.size()) + " weights");
    }
    check_alpha(alg, alpha);
    Tensor out(weights.shape());
    if (alg == Algorithm::edge_popup) {
        for (std::size_t i = 0; i < weights.size(); ++i) out[i] = mask.test(i) ? weights[i] : 0.0f;
    } else {
        const float a = alpha->value;
        for (std::size_t i = 0; i < weights.size(); ++i) out[i] = mask.test(i) ? a * sign_of(weights[i]) : 0.0f;
    }
    return out;
}

Tensor effective_weights(const ScoredTensor& layer, const Mask& mask, Algorithm alg,
                         std::optional<LayerAlpha> alpha) {
    return effective_weights(layer.weights, mask, alg, alpha);
}

Tensor score_gradient(const Tensor& grad_effective, const ScoredTensor& layer, Algorithm alg,
                      std::optional<LayerAlpha> alpha) {
    if (grad_effective.shape() != layer.weights.shape()) {
        throw ShapeError("score gradient: gradient " + shape_string(grad_effective.shape()) +
                         " vs weights " + shape_string(layer.weights.shape()));
    }
    check_alpha(alg, alpha);
    Tensor out(grad_effective.shape());
    const Tensor& w = layer.weights;
    if (alg == Algorithm::edge_popup) {
        for (std::size_t i = 0; i < w.size(); ++i) out[i] = grad_effective[i] * w[i];
    } else {
        const float a = alpha->value;
        for (std::size_t i = 0; i < w.size(); ++i) out[i] = grad_effective[i] * (a * sign_of(w[i]));
    }
    return out;
}

Var scored_weight(Tape<float>& tape, Var scores, const ScoredTensor& layer, const Mask& mask,
                  Algorithm alg, std::optional<LayerAlpha> alpha) {
    if (tape.value(scores).shape() != layer.weights.shape()) {
        throw ShapeError("scored weight: score variable does not match layer shape");
    }
    const ScoredTensor* source = &layer;
    return tape.record(
        effective_weights(layer, mask, alg, alpha), {scores},
        [scores, source, alg, alpha](Tape<float>& t, Var self) {
            Tensor ds = score_gradient(t.grad_buffer(self), *source, alg, alpha);
            const Tensor& s = t.value(scores);
            auto& acc = t.grad_buffer(scores);
            for (std::size_t i = 0; i < ds.size(); ++i) acc[i] += sign_of(s[i]) * ds[i];
        },
        "scored_weight");
}

} // namespace supermask
