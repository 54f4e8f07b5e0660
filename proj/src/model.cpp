#include "supermask/model.hpp"

#include "supermask/error.hpp"

namespace supermask {

Tensor initial_weights(const LayerDesc& desc, std::size_t layer_index, const InitScheme& scheme,
                       std::uint64_t weight_seed) {
    RngStream rng = RngStream::derive(weight_seed, StreamTag::weights, {layer_index});
    return init_tensor(desc.weight_shape, desc.fan_in, scheme, rng);
}

Model build_model(const ArchSpec& arch, Algorithm algorithm, double prune_rate, const InitScheme& weight_scheme,
                  const ModelSeeds& seeds) {
    Model model;
    model.arch = arch;
    model.algorithm = algorithm;
    model.prune_rate = prune_rate;
    model.seeds = seeds;
    model.layout = layer_layout(arch);
    model.topology = make_topology(arch);
    model.layers.reserve(model.layout.size());
    for (std::size_t l = 0; l < model.layout.size(); ++l) {
        const LayerDesc& desc = model.layout[l];
        if (kept_count(desc.size(), prune_rate) == 0) {
            throw InvalidArgument("prune rate " + std::to_string(prune_rate) + " empties layer " + desc.name);
        }
        RngStream score_rng = RngStream::derive(seeds.score_seed, StreamTag::scores, {l});
        model.layers.emplace_back(initial_weights(desc, l, weight_scheme, seeds.weight_seed),
                                  kaiming_uniform_scores(desc.weight_shape, desc.fan_in, score_rng), desc.fan_in, l,
                                  weight_scheme);
    }
    for (std::size_t c : model.topology.batch_norm_channels) model.batch_norms.emplace_back(c);
    return model;
}

std::vector<LayerSelection> select_layers(const Model& model) {
    std::vector<LayerSelection> out;
    out.reserve(model.layers.size());
    for (const auto& layer : model.layers) {
        LayerSelection sel{compute_mask(layer.scores, model.prune_rate), std::nullopt};
        if (model.algorithm == Algorithm::biprop) sel.alpha = compute_alpha(layer.weights, sel.mask);
        out.push_back(std::move(sel));
    }
    return out;
}

template <typename T>
Var run_topology(Tape<T>& tape, const Topology& topology, Var input, std::span<const Var> weights,
                 std::span<BatchNormState<T>> batch_norms, BatchNormMode mode) {
    Var x = input;
    for (const Stage& stage : topology.stages) {
        switch (stage.kind) {
        case StageKind::conv: x = ops::conv2d(tape, x, weights[stage.index], 1, 1); break;
        case StageKind::linear: x = ops::linear(tape, x, weights[stage.index]); break;
        case StageKind::batch_norm: x = ops::batch_norm(tape, x, batch_norms[stage.index], mode); break;
        case StageKind::relu: x = ops::relu(tape, x); break;
        case StageKind::max_pool: x = ops::max_pool2d(tape, x, 2); break;
        case StageKind::flatten: x = ops::flatten(tape, x); break;
        }
    }
    return x;
}

template Var run_topology<float>(Tape<float>&, const Topology&, Var, std::span<const Var>,
                                 std::span<BatchNormState<float>>, BatchNormMode);
template Var run_topology<double>(Tape<double>&, const Topology&, Var, std::span<const Var>,
                                  std::span<BatchNormState<double>>, BatchNormMode);

Var forward_train(Tape<float>& tape, Model& model, const Tensor& inputs, std::vector<Var>& score_vars) {
    const auto selections = select_layers(model);
    score_vars.clear();
    std::vector<Var> weight_vars;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const ScoredTensor& layer = model.layers[l];
        const Var s = tape.leaf(layer.scores, true);
        score_vars.push_back(s);
        weight_vars.push_back(
            scored_weight(tape, s, layer, selections[l].mask, model.algorithm, selections[l].alpha));
    }
    const Var x = tape.leaf(inputs, false);
    return run_topology<float>(tape, model.topology, x, weight_vars, model.batch_norms, BatchNormMode::train);
}

std::vector<Tensor> Subnetwork::effective_weights() const {
    std::vector<Tensor> out;
    out.reserve(weights.size());
    for (std::size_t l = 0; l < weights.size(); ++l) {
        out.push_back(supermask::effective_weights(weights[l], masks[l], algorithm, alphas[l]));
    }
    return out;
}

Subnetwork export_subnetwork(const Model& model) {
    Subnetwork sub;
    sub.arch = model.arch;
    sub.algorithm = model.algorithm;
    sub.prune_rate = model.prune_rate;
    for (auto& sel : select_layers(model)) {
        sub.masks.push_back(std::move(sel.mask));
        sub.alphas.push_back(sel.alpha);
    }
    for (const auto& layer : model.layers) sub.weights.push_back(layer.weights);
    sub.batch_norms = model.batch_norms;
    return sub;
}

Tensor infer_logits(const Topology& topology, std::span<const Tensor> effective,
                    std::span<const BatchNormState<float>> batch_norms, const Tensor& inputs) {
    Tape<float> tape;
    std::vector<Var> weight_vars;
    weight_vars.reserve(effective.size());
    for (const auto& w : effective) weight_vars.push_back(tape.leaf(w, false));
    std::vector<BatchNormState<float>> states(batch_norms.begin(), batch_norms.end());
    const Var out = run_topology<float>(tape, topology, tape.leaf(inputs, false), weight_vars, states,
                                        BatchNormMode::eval);
    return tape.value(out);
}

} // namespace supermask
