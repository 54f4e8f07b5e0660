#pragma once

#include "supermask/tensor.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace supermask {

enum class ArchKind : std::uint8_t {
    conv = 0, ///< VGG-like Conv-2/4/6/8
    mlp = 1,  ///< fully connected, for desk-scale synthetic tasks
};

/// Network family and size.
///
/// Conv-d stacks d/2 blocks of two 3x3 convs (64, 128, 256, 512 channels)
/// each followed by 2x2 max pooling, then an FC head `hidden` -> classes.
/// The MLP variant maps `input_shape[0]` features through `hidden`.
/// Every width except the input and class count is scaled by `width`.
struct ArchSpec {
    ArchKind kind = ArchKind::conv;
    int depth = 2;
    double width = 1.0;
    std::size_t num_classes = 10;
    Shape input_shape{3, 32, 32};
    std::vector<std::size_t> hidden{256, 256};

    friend bool operator==(const ArchSpec&, const ArchSpec&) = default;
};

/// floor(base * width), at least 1.
std::size_t scaled_width(std::size_t base, double width);

enum class LayerKind : std::uint8_t { conv = 0, linear = 1 };

/// One scored (prunable) layer.
struct LayerDesc {
    std::string name;
    LayerKind kind;
    Shape weight_shape; ///< [F, C, 3, 3] or [out, in]
    std::int64_t fan_in;
    std::size_t size() const { return shape_size(weight_shape); }
};

enum class StageKind : std::uint8_t { conv, linear, batch_norm, relu, max_pool, flatten };

struct Stage {
    StageKind kind;
    std::size_t index = 0; ///< scored-layer index (conv/linear) or batch-norm index
};

struct Topology {
    std::vector<Stage> stages;
    std::vector<std::size_t> batch_norm_channels;
};

/// Throws InvalidArgument for unsupported depths, widths outside (0, 1],
/// or inputs the pooling schedule cannot divide.
void validate(const ArchSpec& spec);

std::vector<LayerDesc> layer_layout(const ArchSpec& spec);
Topology make_topology(const ArchSpec& spec);

/// Total scored weights (biases are disabled).
std::size_t parameter_count(const ArchSpec& spec);

/// Sum over layers of round((1 - p) * j_l).
std::size_t kept_params(const ArchSpec& spec, double prune_rate);

std::string describe(const ArchSpec& spec);

} // namespace supermask
