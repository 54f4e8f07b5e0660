#pragma once

#include "supermask/data.hpp"
#include "supermask/model.hpp"
#include "supermask/reweight.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace supermask {

/// Loss became non-finite; the message names the epoch and batch.
class TrainingDiverged : public NumericError {
public:
    TrainingDiverged(int epoch, std::size_t batch, const std::string& detail);
    int epoch;
    std::size_t batch;
};

/// 0.5 * lr0 * (1 + cos(pi * t / T)). Requires T > 0 and 0 <= t <= T.
double cosine_lr(int t, int total, double lr0);

struct SgdParams {
    double momentum = 0.9;
    double weight_decay = 1e-4;
};

/// Heavy-ball momentum buffers, one per score tensor. Weights are never
/// registered here.
struct OptimState {
    SgdParams params;
    std::vector<Tensor> buffers;

    static OptimState for_model(const Model& model, const SgdParams& params);
};

/// g = grad + wd * S; buf = mu * buf + g; S -= lr * buf. All float arithmetic.
/// Throws NumericError on a non-finite gradient.
void sgd_step(Tensor& scores, const Tensor& grad, Tensor& buffer, const SgdParams& params, double lr);
void sgd_step(Model& model, std::span<const Tensor> grads, OptimState& state, double lr);

struct TrainOptions {
    int epochs = 250;
    std::size_t batch_size = 128;
    double lr = 0.1;
    SgdParams sgd;
    std::uint64_t data_seed = 0;
    RecycleSpec reweight;
    int eval_every = 1; ///< test accuracy every n-th epoch and at the last one
};

struct EpochRecord {
    int epoch = 0; ///< 1-based
    double loss = 0.0;
    double train_acc = 0.0;
    double test_acc = 0.0; ///< NaN without a test split or on skipped epochs
    double lr = 0.0;
    std::size_t recycle_events = 0; ///< non-empty layer edits applied this epoch
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
};

void write_history_csv(std::ostream& out, const TrainHistory& history);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains scores in place. Masks (and alpha) are recomputed every batch;
/// weights change only through the configured reweight op at its trigger
/// points, and every such edit is appended to model.edit_log.
TrainHistory train(Model& model, const TrainOptions& options, const Dataset& train_set,
                   const Dataset* test_set = nullptr, const EpochCallback& on_epoch = {});

/// Applies the model's reweight op to every layer right now. Returns the
/// number of non-empty layer edits. `epoch`/`batch` seed rerandomization.
std::size_t apply_reweight(Model& model, const RecycleSpec& spec, int epoch, std::size_t batch);

/// Index of the largest entry of each row; ties go to the lower index.
std::vector<std::int32_t> argmax_rows(const Tensor& logits);

/// Accuracy of a frozen subnetwork with eval-mode batch norm. Throws on an
/// empty dataset.
double evaluate(const Subnetwork& net, const Dataset& data, std::size_t batch_size = 256);
double evaluate(const Model& model, const Dataset& data, std::size_t batch_size = 256);

} // namespace supermask
