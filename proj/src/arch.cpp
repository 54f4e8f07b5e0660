#include "supermask/arch.hpp"

#include "supermask/error.hpp"
#include "supermask/subnet.hpp"

#include <cmath>
#include <sstream>

namespace supermask {

namespace {
constexpr std::size_t kBlockChannels[] = {64, 128, 256, 512};
}

std::size_t scaled_width(std::size_t base, double width) {
    const auto w = static_cast<std::size_t>(std::floor(static_cast<double>(base) * width + 1e-9));
    return w < 1 ? 1 : w;
}

void validate(const ArchSpec& spec) {
    if (!(spec.width > 0.0 && spec.width <= 1.0)) {
        throw InvalidArgument("width factor must lie in (0, 1], got " + std::to_string(spec.width));
    }
    if (spec.num_classes < 2) throw InvalidArgument("need at least two classes");
    if (spec.kind == ArchKind::conv) {
        if (spec.depth != 2 && spec.depth != 4 && spec.depth != 6 && spec.depth != 8) {
            throw InvalidArgument("unknown conv depth " + std::to_string(spec.depth) + " (expected 2, 4, 6 or 8)");
        }
        if (spec.input_shape.size() != 3) throw InvalidArgument("conv input shape must be [C, H, W]");
        const std::size_t div = std::size_t{1} << (spec.depth / 2);
        if (spec.input_shape[1] % div != 0 || spec.input_shape[2] % div != 0 || spec.input_shape[1] < div ||
            spec.input_shape[2] < div) {
            throw InvalidArgument("input " + shape_string(spec.input_shape) + " not divisible by pooling factor " +
                                  std::to_string(div));
        }
    } else {
        if (spec.input_shape.size() != 1 || spec.input_shape[0] == 0) {
            throw InvalidArgument("mlp input shape must be [features]");
        }
    }
}

std::vector<LayerDesc> layer_layout(const ArchSpec& spec) {
    validate(spec);
    std::vector<LayerDesc> layers;
    std::size_t features = 0;
    if (spec.kind == ArchKind::conv) {
        std::size_t channels = spec.input_shape[0];
        std::size_t h = spec.input_shape[1], w = spec.input_shape[2];
        int conv_index = 0;
        for (int block = 0; block < spec.depth / 2; ++block) {
            const std::size_t out = scaled_width(kBlockChannels[block], spec.width);
            for (int rep = 0; rep < 2; ++rep) {
                layers.push_back({"conv" + std::to_string(++conv_index), LayerKind::conv, {out, channels, 3, 3},
                                  static_cast<std::int64_t>(channels * 9)});
                channels = out;
            }
            h /= 2;
            w /= 2;
        }
        features = channels * h * w;
    } else {
        features = spec.input_shape[0];
    }
    int fc_index = 0;
    for (std::size_t base : spec.hidden) {
        const std::size_t out = scaled_width(base, spec.width);
        layers.push_back({"fc" + std::to_string(++fc_index), LayerKind::linear, {out, features},
                          static_cast<std::int64_t>(features)});
        features = out;
    }
    layers.push_back({"fc" + std::to_string(++fc_index), LayerKind::linear, {spec.num_classes, features},
                      static_cast<std::int64_t>(features)});
    return layers;
}

Topology make_topology(const ArchSpec& spec) {
    const auto layers = layer_layout(spec);
    Topology topo;
    std::size_t li = 0;
    if (spec.kind == ArchKind::conv) {
        for (int block = 0; block < spec.depth / 2; ++block) {
            for (int rep = 0; rep < 2; ++rep, ++li) {
                topo.stages.push_back({StageKind::conv, li});
                topo.stages.push_back({StageKind::batch_norm, topo.batch_norm_channels.size()});
                topo.batch_norm_channels.push_back(layers[li].weight_shape[0]);
                topo.stages.push_back({StageKind::relu});
            }
            topo.stages.push_back({StageKind::max_pool});
        }
        topo.stages.push_back({StageKind::flatten});
    }
    for (; li < layers.size(); ++li) {
        topo.stages.push_back({StageKind::linear, li});
        if (li + 1 < layers.size()) topo.stages.push_back({StageKind::relu});
    }
    return topo;
}

std::size_t parameter_count(const ArchSpec& spec) {
    std::size_t total = 0;
    for (const auto& l : layer_layout(spec)) total += l.size();
    return total;
}

std::size_t kept_params(const ArchSpec& spec, double prune_rate) {
    std::size_t total = 0;
    for (const auto& l : layer_layout(spec)) total += kept_count(l.size(), prune_rate);
    return total;
}

std::string describe(const ArchSpec& spec) {
    std::ostringstream os;
    if (spec.kind == ArchKind::conv) {
        os << "conv" << spec.depth;
    } else {
        os << "mlp";
    }
    os << " w=" << spec.width << " in=" << shape_string(spec.input_shape) << " classes=" << spec.num_classes;
    return os.str();
}

} // namespace supermask
