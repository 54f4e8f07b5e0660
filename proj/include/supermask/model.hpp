#pragma once

#include "supermask/arch.hpp"
#include "supermask/init.hpp"
#include "supermask/ops.hpp"
#include "supermask/reweight.hpp"
#include "supermask/subnet.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace supermask {

struct ModelSeeds {
    std::uint64_t weight_seed = 0;
    std::uint64_t score_seed = 0;
};

/// A scored network: frozen weights, trainable scores, batch-norm state, and
/// the log of every weight edit applied since initialization.
struct Model {
    ArchSpec arch;
    Algorithm algorithm = Algorithm::edge_popup;
    double prune_rate = 0.5;
    ModelSeeds seeds;
    std::vector<LayerDesc> layout;
    Topology topology;
    std::vector<ScoredTensor> layers;
    std::vector<BatchNormState<float>> batch_norms;
    std::vector<WeightEdit> edit_log;
};

/// Deterministically regenerates layer l's initial weights from the weight
/// seed. Independent of how many layers precede it.
Tensor initial_weights(const LayerDesc& desc, std::size_t layer_index, const InitScheme& scheme,
                       std::uint64_t weight_seed);

/// Builds a model; weights from `weight_scheme`, scores from Kaiming uniform.
Model build_model(const ArchSpec& arch, Algorithm algorithm, double prune_rate, const InitScheme& weight_scheme,
                  const ModelSeeds& seeds);

/// Mask (and alpha for biprop) of every layer from the current scores/weights.
struct LayerSelection {
    Mask mask;
    std::optional<LayerAlpha> alpha;
};
std::vector<LayerSelection> select_layers(const Model& model);

/// Runs a topology on given per-layer weight variables.
template <typename T>
Var run_topology(Tape<T>& tape, const Topology& topology, Var input, std::span<const Var> weights,
                 std::span<BatchNormState<T>> batch_norms, BatchNormMode mode);

/// Training forward pass. Registers every score tensor as a trainable leaf
/// (returned through `score_vars`) and returns the logits.
Var forward_train(Tape<float>& tape, Model& model, const Tensor& inputs, std::vector<Var>& score_vars);

/// Frozen result of training: what a checkpoint stores and reconstructs.
struct Subnetwork {
    ArchSpec arch;
    Algorithm algorithm = Algorithm::edge_popup;
    double prune_rate = 0.5;
    std::vector<Tensor> weights; ///< theta after all edits
    std::vector<Mask> masks;
    std::vector<std::optional<LayerAlpha>> alphas;
    std::vector<BatchNormState<float>> batch_norms;

    std::vector<Tensor> effective_weights() const;
};

Subnetwork export_subnetwork(const Model& model);

/// Eval-mode logits for a batch given per-layer effective weights.
Tensor infer_logits(const Topology& topology, std::span<const Tensor> effective,
                    std::span<const BatchNormState<float>> batch_norms, const Tensor& inputs);

} // namespace supermask
