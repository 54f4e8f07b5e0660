#include "supermask/trainer.hpp"

#include "supermask/error.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>

namespace supermask {

TrainingDiverged::TrainingDiverged(int epoch_, std::size_t batch_, const std::string& detail)
    : NumericError("training diverged at epoch " + std::to_string(epoch_) + ", batch " + std::to_string(batch_) +
                   ": " + detail),
      epoch(epoch_), batch(batch_) {}

double cosine_lr(int t, int total, double lr0) {
    if (total <= 0) throw InvalidArgument("cosine_lr: total epochs must be positive");
    if (t < 0 || t > total) throw InvalidArgument("cosine_lr: epoch outside [0, total]");
    return 0.5 * lr0 * (1.0 + std::cos(std::numbers::pi * t / total));
}

OptimState OptimState::for_model(const Model& model, const SgdParams& params) {
    OptimState s;
    s.params = params;
    for (const auto& layer : model.layers) s.buffers.emplace_back(layer.scores.shape());
    return s;
}

void sgd_step(Tensor& scores, const Tensor& grad, Tensor& buffer, const SgdParams& params, double lr) {
    if (scores.shape() != grad.shape() || scores.shape() != buffer.shape()) {
        throw ShapeError("sgd_step: scores " + shape_string(scores.shape()) + ", grad " +
                         shape_string(grad.shape()) + ", buffer " + shape_string(buffer.shape()));
    }
    if (!grad.all_finite()) throw NumericError("sgd_step: non-finite gradient");
    const auto mu = static_cast<float>(params.momentum);
    const auto wd = static_cast<float>(params.weight_decay);
    const auto step = static_cast<float>(lr);
    float* s = scores.ptr();
    float* b = buffer.ptr();
    const float* g = grad.ptr();
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const float gi = g[i] + wd * s[i];
        b[i] = mu * b[i] + gi;
        s[i] = s[i] - step * b[i];
    }
}

void sgd_step(Model& model, std::span<const Tensor> grads, OptimState& state, double lr) {
    if (grads.size() != model.layers.size() || state.buffers.size() != model.layers.size()) {
        throw ShapeError("sgd_step: layer count mismatch");
    }
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        sgd_step(model.layers[l].scores, grads[l], state.buffers[l], state.params, lr);
    }
}

void write_history_csv(std::ostream& out, const TrainHistory& history) {
    const auto old_precision = out.precision(std::numeric_limits<double>::max_digits10);
    out << "epoch,loss,train_acc,test_acc,lr,recycle_events\n";
    for (const auto& r : history.epochs) {
        out << r.epoch << ',' << r.loss << ',' << r.train_acc << ',' << r.test_acc << ',' << r.lr << ','
            << r.recycle_events << '\n';
    }
    out.precision(old_precision);
}

std::size_t apply_reweight(Model& model, const RecycleSpec& spec, int epoch, std::size_t batch) {
    std::size_t events = 0;
    for (auto& layer : model.layers) {
        WeightEdit edit;
        switch (spec.variant) {
        case ReweightVariant::none: return 0;
        case ReweightVariant::iwr: edit = recycle_weights(layer, spec); break;
        case ReweightVariant::iwr_second_tier: edit = recycle_second_tier(layer, spec); break;
        case ReweightVariant::iterand: {
            const Mask mask = compute_mask(layer.scores, model.prune_rate);
            RngStream rng = RngStream::derive(model.seeds.weight_seed, StreamTag::rerandomize,
                                              {static_cast<std::uint64_t>(epoch), batch, layer.layer_index});
            edit = rerandomize_pruned(layer, mask, spec.rate, layer.scheme, rng);
            break;
        }
        }
        if (!edit_empty(edit)) {
            model.edit_log.push_back(std::move(edit));
            ++events;
        }
    }
    return events;
}

std::vector<std::int32_t> argmax_rows(const Tensor& logits) {
    if (logits.rank() != 2) throw ShapeError("argmax_rows expects [N, classes]");
    const std::size_t n = logits.dim(0), k = logits.dim(1);
    std::vector<std::int32_t> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const float* row = logits.ptr() + i * k;
        std::size_t best = 0;
        for (std::size_t c = 1; c < k; ++c) {
            if (row[c] > row[best]) best = c;
        }
        out[i] = static_cast<std::int32_t>(best);
    }
    return out;
}

namespace {

std::size_t count_correct(const Tensor& logits, std::span<const std::int32_t> labels) {
    const auto pred = argmax_rows(logits);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == labels[i];
    return correct;
}

} // namespace

double evaluate(const Subnetwork& net, const Dataset& data, std::size_t batch_size) {
    if (data.size() == 0) throw InvalidArgument("evaluate: empty dataset");
    if (batch_size == 0) throw InvalidArgument("evaluate: batch size must be positive");
    const Topology topo = make_topology(net.arch);
    const auto eff = net.effective_weights();
    std::size_t correct = 0;
    std::vector<std::uint32_t> idx;
    for (std::size_t start = 0; start < data.size(); start += batch_size) {
        const std::size_t end = std::min(data.size(), start + batch_size);
        idx.resize(end - start);
        for (std::size_t i = start; i < end; ++i) idx[i - start] = static_cast<std::uint32_t>(i);
        auto [x, y] = gather(data, idx);
        correct += count_correct(infer_logits(topo, eff, net.batch_norms, x), y);
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

double evaluate(const Model& model, const Dataset& data, std::size_t batch_size) {
    return evaluate(export_subnetwork(model), data, batch_size);
}

TrainHistory train(Model& model, const TrainOptions& options, const Dataset& train_set, const Dataset* test_set,
                   const EpochCallback& on_epoch) {
    if (options.epochs < 0) throw InvalidArgument("epochs must be non-negative");
    if (options.batch_size == 0) throw InvalidArgument("batch size must be positive");
    if (options.eval_every < 1) throw InvalidArgument("eval_every must be at least 1");
    TrainHistory history;
    if (options.epochs == 0) return history;
    if (train_set.size() == 0) throw InvalidArgument("training set is empty");

    OptimState optim = OptimState::for_model(model, options.sgd);
    std::vector<Tensor> grads(model.layers.size());
    std::vector<Var> score_vars;

    for (int e = 0; e < options.epochs; ++e) {
        const int epoch = e + 1;
        const double lr = cosine_lr(e, options.epochs, options.lr);
        const auto batches = minibatches(train_set.size(), options.batch_size, options.data_seed,
                                         static_cast<std::uint64_t>(e));
        double loss_sum = 0.0;
        std::size_t correct = 0;
        std::size_t events = 0;
        for (std::size_t b = 0; b < batches.size(); ++b) {
            auto [x, y] = gather(train_set, batches[b]);
            try {
                Tape<float> tape;
                const Var logits = forward_train(tape, model, x, score_vars);
                const Var loss = ops::cross_entropy(tape, logits, std::span<const std::int32_t>(y));
                loss_sum += static_cast<double>(tape.value(loss)[0]) * static_cast<double>(y.size());
                correct += count_correct(tape.value(logits), y);
                tape.backward(loss);
                for (std::size_t l = 0; l < score_vars.size(); ++l) grads[l] = tape.grad(score_vars[l]);
            } catch (const NumericError& err) {
                throw TrainingDiverged(epoch, b, err.what());
            }
            sgd_step(model, grads, optim, lr);
            if (should_trigger(epoch, b, batches.size(), options.reweight)) {
                events += apply_reweight(model, options.reweight, epoch, b);
            }
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.loss = loss_sum / static_cast<double>(train_set.size());
        rec.train_acc = static_cast<double>(correct) / static_cast<double>(train_set.size());
        const bool eval_now = epoch % options.eval_every == 0 || epoch == options.epochs;
        rec.test_acc = test_set && eval_now ? evaluate(model, *test_set) : std::numeric_limits<double>::quiet_NaN();
        rec.lr = lr;
        rec.recycle_events = events;
        history.epochs.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }
    return history;
}

} // namespace supermask
