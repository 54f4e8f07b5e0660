#pragma once

#include "supermask/arch.hpp"
#include "supermask/init.hpp"
#include "supermask/model.hpp"
#include "supermask/reweight.hpp"
#include "supermask/subnet.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace supermask {

using Digest = std::array<std::uint8_t, 32>;

Digest sha256(std::span<const std::uint8_t> bytes);
std::string to_hex(std::span<const std::uint8_t> bytes);

/// SHA-256 over every layer's weights, in layer order, as raw float bytes.
Digest weights_digest(const Model& model);

inline constexpr std::uint16_t kCheckpointVersion = 1;

/// One scored layer as stored: enough to regenerate theta from its seed and
/// replay the edits, plus the mask and alpha.
struct LayerRecord {
    std::uint32_t layer_index = 0;
    Shape shape;
    InitScheme scheme;
    std::int64_t fan_in = 0;
    std::uint64_t weight_seed = 0;
    Mask mask;
    std::optional<LayerAlpha> alpha;
    std::vector<WeightEdit> edits; ///< in application order
};

/// Seed-based subnetwork snapshot. Weights are never stored; they are
/// regenerated and patched on reconstruction.
struct Checkpoint {
    std::string config_text;
    ArchSpec arch;
    Algorithm algorithm = Algorithm::edge_popup;
    double prune_rate = 0.5;
    std::vector<LayerRecord> layers;
    std::vector<BatchNormState<float>> batch_norms;

    static Checkpoint from_model(const Model& model, std::string config_text);

    /// Regenerates theta, replays edits, and attaches masks, alphas and
    /// batch-norm statistics. Throws FormatError on inconsistent records.
    Subnetwork reconstruct() const;
};

/// Little-endian "SNFG" layout ending in a SHA-256 of all preceding bytes.
std::vector<std::uint8_t> serialize(const Checkpoint& ckpt);
/// Verifies the trailing hash before decoding anything else.
Checkpoint deserialize(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace supermask
