#pragma once

#include "supermask/arch.hpp"
#include "supermask/init.hpp"
#include "supermask/reweight.hpp"
#include "supermask/subnet.hpp"
#include "supermask/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace supermask {

enum class DatasetKind : std::uint8_t { cifar10 = 0, synth = 1, sblb = 2 };

std::string_view to_string(DatasetKind k);
DatasetKind parse_dataset_kind(std::string_view name);

/// Everything that determines a run. Parsed from flat `key = value` text;
/// '#' starts a comment, unknown keys are rejected.
///
/// recycle_rate, period, weight_init and scale_fan default by algorithm and
/// variant when left unset: iwr r=0.2 K=10, iterand r=0.1 K=1; signed
/// constant weights for edge_popup, Kaiming normal for biprop with scale
/// fan on unless recycling.
struct RunConfig {
    Algorithm algorithm = Algorithm::edge_popup;
    ReweightVariant variant = ReweightVariant::none;
    std::string arch = "conv2"; ///< conv2|conv4|conv6|conv8|mlp
    double width = 1.0;
    std::vector<std::size_t> hidden{256, 256};
    double prune_rate = 0.5;
    std::optional<double> recycle_rate;
    std::optional<int> period;
    int epochs = 250;
    std::size_t batch_size = 128;
    int eval_every = 1;
    double lr = 0.1;
    double weight_decay = 1e-4;
    double momentum = 0.9;
    std::uint64_t weight_seed = 0;
    std::uint64_t score_seed = 0;
    std::uint64_t data_seed = 0;

    DatasetKind dataset = DatasetKind::cifar10;
    std::string cifar_dir = "data/cifar-10-batches-bin";
    std::size_t subset = 0;      ///< train prefix size; 0 = full split
    std::size_t test_subset = 0; ///< 0 = full split
    std::size_t synth_n = 4000;
    std::size_t synth_test_n = 1000;
    std::size_t synth_classes = 4;
    std::size_t synth_dim = 16;
    double synth_spread = 1.0;
    std::uint64_t synth_seed = 0;
    std::string sblb_train;
    std::string sblb_test;

    std::optional<InitKind> weight_init;
    std::optional<bool> scale_fan;

    RecycleSpec recycle_spec() const;
    InitScheme weight_scheme() const;
    TrainOptions train_options() const;

    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Throws ConfigError with the offending line number.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);

/// Canonical text: every key in fixed order; the defaulted-by-variant keys
/// appear only when set. Parsing it back yields an equal config.
std::string to_text(const RunConfig& cfg);

/// Range checks shared by the parser and programmatic callers.
void validate(const RunConfig& cfg);

/// Architecture for the config's dataset geometry.
ArchSpec arch_spec(const RunConfig& cfg, const Shape& sample_shape, std::size_t num_classes);

} // namespace supermask
